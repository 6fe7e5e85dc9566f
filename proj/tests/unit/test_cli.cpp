#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "../support/oracles.hpp"
#include "cli.hpp"
#include "osmac/covariates.hpp"
#include "osmac/ingest.hpp"

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = osmac::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Fixture {
  std::filesystem::path dir = oracle::scratch_dir("cli");
  std::string data = (dir / "d.csv").string();
  Fixture() {
    osmac::ParamVector beta = osmac::ParamVector::Constant(4, 0.5);
    beta[0] = -1.0;
    osmac::write_csv(data, osmac::generate(osmac::CovariateKind::MzNormal, 6000, beta, 3, true));
  }
  ~Fixture() { std::filesystem::remove_all(dir); }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "estimate writes JSON with the fitted coefficients and pass counts") {
  const Result r = run({"estimate", "--data", data, "--intercept", "--method", "replacement",
                        "--h", "mvc", "--n", "400", "--n1", "150", "--seed", "4"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["beta_check"].size() == 4);
  CHECK(j["vcov"].size() == 4);
  CHECK(j["diagnostics"]["passes"]["counting"] == 1);
  CHECK(j["diagnostics"]["passes"]["pilot"] == 1);
  CHECK(j["diagnostics"]["passes"]["stage"] == 2);
  CHECK_FALSE(j["diagnostics"].contains("runtime_seconds"));
  const Result t = run({"estimate", "--data", data, "--intercept", "--n", "400", "--timing"});
  CHECK(nlohmann::json::parse(t.out)["diagnostics"].contains("runtime_seconds"));
}

TEST_CASE_FIXTURE(Fixture, "repeated runs with the same seed are byte-identical") {
  for (const char* method : {"weighted", "replacement", "poisson"}) {
    const std::vector<std::string> args{"estimate", "--data", data, "--intercept", "--method", method,
                                        "--h", "mmse", "--n", "300", "--seed", "99"};
    const Result a = run(args);
    const Result b = run(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }
  const std::string p1 = (dir / "s1.csv").string(), p2 = (dir / "s2.csv").string();
  CHECK(run({"subsample", "--data", data, "--intercept", "--n", "200", "--out", p1}).code == 0);
  CHECK(run({"subsample", "--data", data, "--intercept", "--n", "200", "--out", p2}).code == 0);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(slurp(p1).rfind("row,label,prob,weight,", 0) == 0);
}

TEST_CASE_FIXTURE(Fixture, "a prior of one half is the uniform pilot") {
  const Result a = run({"estimate", "--data", data, "--intercept", "--p-pr", "0.5", "--seed", "7"});
  const Result b = run({"estimate", "--data", data, "--intercept", "--seed", "7"});
  REQUIRE(a.code == 0);
  const auto j = nlohmann::json::parse(a.out);
  CHECK(j["c0"] == 1.0);
  CHECK(j["c1"] == 1.0);
  CHECK(a.out == b.out);
}

TEST_CASE_FIXTURE(Fixture, "exit codes") {
  CHECK(run({"estimate", "--data", data, "--bogus"}).code == 2);
  CHECK(run({"estimate", "--data", (dir / "none.csv").string()}).code == 2);
  CHECK(run({"estimate", "--data", data, "--intercept", "--n1", "3"}).code == 2);
  CHECK(run({"estimate", "--data", data, "--intercept", "--method", "lcc"}).code == 2);
  CHECK(run({"estimate", "--data", data, "--intercept", "--p-pr", "0.3", "--c0", "2"}).code == 2);
  CHECK(run({}).code == 2);

  std::ofstream(dir / "bad.csv") << "1,0.5\n2,0.1\n";
  const Result bad = run({"estimate", "--data", (dir / "bad.csv").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("row 2") != std::string::npos);

  // A separated data set cannot be fitted.
  std::ofstream sep(dir / "sep.csv");
  for (int i = 0; i < 400; ++i) sep << (i < 200 ? 0 : 1) << ',' << (i < 200 ? -1.0 - i : 1.0 + i) << '\n';
  sep.close();
  const Result s = run({"estimate", "--data", (dir / "sep.csv").string(), "--intercept", "--n", "50"});
  CHECK(s.code == 3);
  CHECK(s.err.find("pilot") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "verify-asymptotics reports every ordering") {
  const std::string out = (dir / "v.json").string();
  const Result r = run({"verify-asymptotics", "--generator", "mzNormal", "--d", "3", "--h", "mvc",
                        "--rho", "0.2", "--mc", "20000", "--out", out});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j.contains("sigma_le_v_os"));
  CHECK(j.contains("combined_le_sigma"));
  CHECK(j.contains("sigma_le_uniform"));
  const std::string again = (dir / "v2.json").string();
  run({"verify-asymptotics", "--generator", "mzNormal", "--d", "3", "--h", "mvc", "--rho", "0.2",
       "--mc", "20000", "--out", again});
  CHECK(slurp(out) == slurp(again));
}

TEST_CASE_FIXTURE(Fixture, "generate and simulate") {
  const std::string gen = (dir / "g.csv").string();
  CHECK(run({"generate", "--generator", "EXP", "--N", "500", "--d", "3", "--out", gen}).code == 0);
  const std::string text = slurp(gen);
  CHECK(std::count(text.begin(), text.end(), '\n') == 500);

  std::ofstream(dir / "plan.json") << R"({"N": 3000, "d": 3, "n_grid": [200], "S": 3})";
  const std::string o1 = (dir / "r1.csv").string(), o2 = (dir / "r2.csv").string();
  CHECK(run({"simulate", "--plan", (dir / "plan.json").string(), "--out", o1}).code == 0);
  CHECK(run({"simulate", "--plan", (dir / "plan.json").string(), "--out", o2, "--threads", "2"}).code == 0);
  CHECK(slurp(o1) == slurp(o2));
  std::ofstream(dir / "bad.json") << R"({"unknown": 1})";
  CHECK(run({"simulate", "--plan", (dir / "bad.json").string()}).code == 2);
}

TEST_CASE("help lists every flag and unknown flags are errors") {
  const Result est = run({"estimate", "--help"});
  CHECK(est.code == 0);
  for (const char* flag : {"--data", "--label-col", "--covariate-cols", "--intercept", "--method", "--h", "--n",
                           "--n1", "--c0", "--c1", "--p-pr", "--seed", "--variance", "--out", "--block-size",
                           "--header", "--delimiter", "--n-rows", "--entropy", "--timing"})
    CHECK_MESSAGE(est.out.find(flag) != std::string::npos, flag);
  const Result sim = run({"simulate", "--help"});
  for (const char* flag : {"--plan", "--out", "--calibration", "--threads", "--seed"})
    CHECK_MESSAGE(sim.out.find(flag) != std::string::npos, flag);
  const Result top = run({"--help"});
  for (const char* cmd : {"subsample", "estimate", "simulate", "verify-asymptotics", "bench", "generate"})
    CHECK_MESSAGE(top.out.find(cmd) != std::string::npos, cmd);
  CHECK(run({"simulate", "--nope"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE_FIXTURE(Fixture, "estimate JSON keys are stable") {
  const Result r = run({"estimate", "--data", data, "--intercept", "--method", "poisson"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  std::vector<std::string> keys;
  for (const auto& item : j.items()) keys.push_back(item.key());
  const std::vector<std::string> expected{"N", "beta_check", "beta_pilot", "beta_stage", "c0", "c1", "d",
                                          "diagnostics", "h", "method", "n", "n1", "seed", "variance", "vcov"};
  CHECK(keys == expected);
  for (const char* k : {"pilot_size", "realized_size", "psi_hat1", "passes", "rows_read", "iterations"})
    CHECK_MESSAGE(j["diagnostics"].contains(k), k);
}
