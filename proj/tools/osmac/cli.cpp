#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "osmac/asymptotics.hpp"
#include "osmac/covariates.hpp"
#include "osmac/errors.hpp"
#include "osmac/estimators.hpp"
#include "osmac/ingest.hpp"
#include "osmac/sim.hpp"

namespace osmac::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kDefaultSeed = 20240601;

struct DataOptions {
  std::string path;
  std::size_t label_col = 0;
  std::string covariate_cols;
  bool intercept = false;
  bool header = false;
  std::string delimiter = ",";
  std::size_t block_size = 1000;
  std::size_t n_rows = 0;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--data", path, "Delimited input file, one observation per line")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.add_option("--label-col", label_col, "0-based column holding the 0/1 label")
        ->capture_default_str();
    cmd.add_option("--covariate-cols", covariate_cols,
                   "Covariate columns, e.g. 1,2,5-9 (default: all but the label)");
    cmd.add_flag("--intercept", intercept, "Prepend a constant covariate");
    cmd.add_flag("--header", header, "First line is a header");
    cmd.add_option("--delimiter", delimiter, "Field delimiter (one character)")
        ->capture_default_str();
    cmd.add_option("--block-size", block_size, "Rows held in memory while scanning")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd.add_option("--n-rows", n_rows, "Row count, if known (skips the counting pass)");
  }

  Schema schema() const {
    Schema s;
    s.label_column = label_col;
    s.add_intercept = intercept;
    s.has_header = header;
    s.block_size = block_size;
    if (delimiter == "\\t" || delimiter == "tab") {
      s.delimiter = '\t';
    } else if (delimiter.size() == 1) {
      s.delimiter = delimiter[0];
    } else {
      throw InputError("--delimiter must be a single character");
    }
    if (n_rows > 0) s.n_rows = n_rows;
    s.covariate_columns = parse_columns(covariate_cols);
    return s;
  }

  static std::vector<std::size_t> parse_columns(const std::string& text) {
    std::vector<std::size_t> cols;
    std::stringstream ss(text);
    std::string item;
    auto number = [](const std::string& s) -> std::size_t {
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (s.empty() || pos != s.size() || s[0] == '-' || s[0] == '+')
        throw InputError("bad column index '" + s + "' in --covariate-cols");
      return v;
    };
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        cols.push_back(number(item));
      } else {
        const std::size_t lo = number(item.substr(0, dash));
        const std::size_t hi = number(item.substr(dash + 1));
        if (hi < lo) throw InputError("empty column range '" + item + "' in --covariate-cols");
        for (std::size_t c = lo; c <= hi; ++c) cols.push_back(c);
      }
    }
    return cols;
  }
};

struct DesignOptions {
  std::string method = "replacement";
  std::string h = "mvc";
  std::size_t n = 1000;
  std::size_t n1 = 200;
  std::optional<double> c0;
  std::optional<double> c1;
  std::optional<double> p_pr;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--method", method, "weighted | replacement | poisson")
        ->capture_default_str()
        ->check(CLI::IsMember({"weighted", "replacement", "poisson"}));
    cmd.add_option("--h", h, "unit | mvc | mmse")
        ->capture_default_str()
        ->check(CLI::IsMember({"unit", "mvc", "mmse"}));
    cmd.add_option("--n", n, "Second-stage subsample size")->capture_default_str();
    cmd.add_option("--n1", n1, "Pilot subsample size")->capture_default_str();
    auto* o0 = cmd.add_option("--c0", c0, "Pilot constant for y = 0 rows (default 1)");
    auto* o1 = cmd.add_option("--c1", c1, "Pilot constant for y = 1 rows (default 1)");
    auto* op = cmd.add_option("--p-pr", p_pr, "Prior P(y = 1); sets c0 and c1");
    op->excludes(o0)->excludes(o1);
  }

  CaseControl rule() const {
    if (p_pr) return CaseControl::from_prior(*p_pr);
    CaseControl r{c0.value_or(1.0), c1.value_or(1.0)};
    if (!(r.c0 > 0.0) || !(r.c1 > 0.0)) throw InputError("--c0 and --c1 must be positive");
    return r;
  }
};

struct SeedOptions {
  std::uint64_t seed = kDefaultSeed;
  bool entropy = false;

  void add_to(CLI::App& cmd) {
    auto* s = cmd.add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd.add_flag("--entropy", entropy, "Seed from the operating system instead")->excludes(s);
  }

  std::uint64_t resolve() const {
    if (!entropy) return seed;
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ordered_json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Vector r = m.row(i).transpose();
    rows.push_back(vector_json(r));
  }
  return rows;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ParamVector beta_from(const std::vector<double>& values, std::size_t d) {
  if (values.size() == 1) return ParamVector::Constant(static_cast<Eigen::Index>(d), values[0]);
  if (values.size() != d) throw InputError("--beta needs one value or exactly d values");
  return Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(d));
}

// Sets of options for each subcommand.
struct Commands {
  DataOptions data;
  DesignOptions design;
  SeedOptions seed;
  std::string out_path;
  std::string variance = "full";
  bool timing = false;

  // simulate
  std::string plan_path;
  std::string calibration_path;
  unsigned threads = 0;

  // verify-asymptotics / generate
  std::string generator = "mzNormal";
  std::vector<double> beta{0.5};
  std::size_t d = 7;
  double rho = 0.1;
  std::size_t mc = 100000;
  std::size_t repeats = 3;
  std::size_t big_n = 10000;

  // bench
  std::vector<std::size_t> n_grid{1000000};
  std::string backing = "file";
  std::string work_dir;
};

int subsample_cmd(Commands& c, std::ostream& out, std::ostream& err) {
  auto source = open_csv(c.data.path, c.data.schema());
  const Method method = parse_method(c.design.method);
  PilotConfig pc;
  pc.n1 = c.design.n1;
  pc.rule = c.design.rule();
  pc.mode = method == Method::Poisson ? SamplingMode::Poisson : SamplingMode::Replacement;
  pc.h = parse_hkind(c.design.h);
  const std::uint64_t seed = c.seed.resolve();
  if (c.design.n == 0) throw InputError("subsample size n must be at least 1");

  const PilotEstimate pilot = pilot_fit(*source, pc, derive_seed(seed, streams::pilot));
  const std::uint64_t stage_seed = derive_seed(seed, streams::stage);
  const Subsample rows =
      method == Method::Poisson
          ? poisson_scan(*source, pilot.beta1, pilot.psi_hat1, pilot.choice,
                         static_cast<double>(c.design.n), stage_seed)
          : draw_os_subsample(*source, pilot, c.design.n, stage_seed);

  std::ostringstream os;
  os << "row,label,prob,weight";
  for (std::size_t j = 0; j < rows.dim(); ++j) os << ",x" << j;
  os << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << rows.origin(i) << ',' << format_double(rows.y(i)) << ',' << format_double(rows.prob(i))
       << ',' << format_double(rows.weight(i));
    for (double v : rows.x(i)) os << ',' << format_double(v);
    os << '\n';
  }
  emit(os.str(), c.out_path, out);
  err << "subsample: " << rows.size() << " rows (seed " << seed << ")\n";
  return kOk;
}

VarianceKind variance_kind(const std::string& s) {
  if (s == "full") return VarianceKind::Full;
  if (s == "simplified") return VarianceKind::Simplified;
  throw InputError("--variance must be full or simplified");
}

int estimate_cmd(Commands& c, std::ostream& out, std::ostream&) {
  const auto t0 = std::chrono::steady_clock::now();
  auto source = open_csv(c.data.path, c.data.schema());
  const std::size_t counting_passes = source->stats().passes;
  PipelineConfig cfg;
  cfg.method = parse_method(c.design.method);
  cfg.h = parse_hkind(c.design.h);
  cfg.n = c.design.n;
  cfg.n1 = c.design.n1;
  cfg.rule = c.design.rule();
  cfg.variance = variance_kind(c.variance);
  const std::uint64_t seed = c.seed.resolve();
  const PipelineResult r = run_pipeline(*source, cfg, seed);

  ordered_json j;
  j["method"] = method_name(cfg.method);
  j["h"] = hkind_name(cfg.h);
  j["n"] = cfg.n;
  j["n1"] = cfg.n1;
  j["c0"] = cfg.rule.c0;
  j["c1"] = cfg.rule.c1;
  j["seed"] = seed;
  j["N"] = source->rows();
  j["d"] = source->dim();
  j["beta_check"] = vector_json(r.combined.beta_check);
  if (r.combined.vcov_kind != VarianceKind::None) {
    j["variance"] = c.variance;
    j["vcov"] = matrix_json(r.combined.vcov);
  } else {
    j["variance"] = "none";
    j["vcov"] = nullptr;
  }
  j["beta_pilot"] = vector_json(r.pilot.beta1);
  if (r.stage) j["beta_stage"] = vector_json(r.stage->beta_hat);
  if (r.weighted) j["beta_stage"] = vector_json(r.weighted->beta_w);

  ordered_json diag;
  diag["pilot_size"] = r.pilot.rows.size();
  diag["realized_size"] = r.stage ? r.stage->rows.size() : cfg.n;
  diag["psi_hat1"] = r.pilot.psi_hat1;
  diag["passes"] = {{"counting", counting_passes}, {"pilot", r.pilot_passes},
                    {"stage", r.passes - r.pilot_passes}, {"total", r.passes}};
  diag["rows_read"] = r.rows_read;
  diag["iterations"] = {{"pilot", r.pilot.iterations},
                        {"stage", r.stage ? r.stage->iterations : r.weighted->iterations}};
  if (c.timing) diag["runtime_seconds"] = seconds_since(t0);
  j["diagnostics"] = diag;
  emit(j.dump(2) + "\n", c.out_path, out);
  return kOk;
}

int simulate_cmd(Commands& c, std::ostream& out, std::ostream& err) {
  ExperimentPlan plan = parse_plan(read_file(c.plan_path));
  if (c.threads > 0) plan.threads = c.threads;
  const std::uint64_t seed = c.seed.resolve();
  const ExperimentResult result = run_experiment(plan, seed);
  const bool json = c.out_path.size() >= 5 && c.out_path.substr(c.out_path.size() - 5) == ".json";
  emit(json ? result_to_json(result, c.timing) : result_to_csv(result, c.timing), c.out_path, out);
  if (!c.calibration_path.empty())
    emit(calibration_to_csv(calibration_table(result)), c.calibration_path, out);
  for (const auto& row : calibration_table(result)) {
    if (row.flagged)
      err << "calibration: " << method_name(row.estimator) << '/' << hkind_name(row.choice)
          << " n=" << row.n << " ratio " << format_double(row.ratio) << " outside [0.7, 1.3]\n";
  }
  return kOk;
}

ordered_json check_json(const OrderingCheck& c) {
  return {{"holds", c.holds}, {"equal", c.equal}, {"min_gap", c.min_gap}, {"max_gap", c.max_gap}};
}

int verify_cmd(Commands& c, std::ostream& out, std::ostream& err) {
  const CovariateKind kind = parse_covariate_kind(c.generator);
  const HKind h = parse_hkind(c.design.h);
  const ParamVector beta = beta_from(c.beta, c.d);
  const std::uint64_t seed = c.seed.resolve();
  MatrixOptions opts;
  opts.mc = c.mc;
  opts.threads = c.threads;
  const AsymptoticMatrices m = estimate_matrices(kind, beta, h, c.rho, seed, opts);
  const OrderingReport rep = verify_orderings(m);

  ordered_json j;
  j["generator"] = covariate_kind_name(kind);
  j["h"] = hkind_name(h);
  j["rho"] = c.rho;
  j["mc"] = m.mc_samples;
  j["rejected"] = m.rejected;
  j["seed"] = seed;
  j["tolerance"] = rep.tol;
  j["phi_bar"] = m.phi_bar;
  j["sigma_le_v_os"] = check_json(rep.sigma_le_v_os);
  j["combined_le_sigma"] = check_json(rep.combined_le_sigma);
  j["sigma_le_uniform"] = check_json(rep.sigma_le_uniform);
  j["degenerate"] = c.rho == 0.0;
  j["all_hold"] = rep.all_hold();
  j["sigma"] = matrix_json(m.sigma);
  j["v_os"] = matrix_json(m.v_os);
  j["lambda_rho"] = matrix_json(m.lambda_rho);
  j["lambda_u"] = matrix_json(m.lambda_u);
  emit(j.dump(2) + "\n", c.out_path, out);

  auto line = [&](const char* name, const OrderingCheck& k) {
    err << name << ": " << (k.holds ? "holds" : "FAILS") << (k.equal ? " (equal within tolerance)" : "")
        << ", min gap " << format_double(k.min_gap) << '\n';
  };
  line("sigma <= v_os", rep.sigma_le_v_os);
  line("combined <= sigma", rep.combined_le_sigma);
  line("sigma <= uniform", rep.sigma_le_uniform);
  return rep.all_hold() ? kOk : kVerificationFailed;
}

int bench_cmd(Commands& c, std::ostream& out, std::ostream& err) {
  TimingConfig cfg;
  cfg.N_grid = c.n_grid;
  cfg.d = c.d;
  cfg.n1 = c.design.n1;
  cfg.n = c.design.n;
  cfg.h = parse_hkind(c.design.h);
  cfg.backing = c.backing == "memory" ? Backing::Memory : Backing::File;
  cfg.work_dir = c.work_dir;
  cfg.block_size = c.data.block_size;
  cfg.repeats = c.repeats;
  const auto rows = timing_benchmark(cfg, c.seed.resolve());
  err << timing_to_csv(rows, true);
  emit(timing_to_csv(rows, c.timing), c.out_path, out);
  return kOk;
}

int generate_cmd(Commands& c, std::ostream&, std::ostream& err) {
  if (c.out_path.empty()) throw InputError("generate needs --out");
  const CovariateKind kind = parse_covariate_kind(c.generator);
  const Dataset data = generate(kind, c.big_n, beta_from(c.beta, c.d), c.seed.resolve());
  write_csv(c.out_path, data, ',');
  err << "wrote " << data.rows() << " rows to " << c.out_path << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal subsampling estimators for large-sample logistic regression", "osmac"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", "osmac 0.1.0");
  Commands c;

  auto* sub = app.add_subcommand("subsample", "Draw the optimal second-stage subsample");
  c.data.add_to(*sub);
  c.design.add_to(*sub);
  c.seed.add_to(*sub);
  sub->add_option("--out", c.out_path, "Output CSV (default: stdout)");

  auto* est = app.add_subcommand("estimate", "Pilot, second stage, combination and variance");
  c.data.add_to(*est);
  c.design.add_to(*est);
  c.seed.add_to(*est);
  est->add_option("--variance", c.variance, "full | simplified")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "simplified"}));
  est->add_option("--out", c.out_path, "Output JSON (default: stdout)");
  est->add_flag("--timing", c.timing, "Include wall time in the output");

  auto* sim = app.add_subcommand("simulate", "Run a simulation plan");
  sim->add_option("--plan", c.plan_path, "JSON experiment plan")->required()->check(CLI::ExistingFile);
  c.seed.add_to(*sim);
  sim->add_option("--out", c.out_path, "Output table; .json for JSON, CSV otherwise");
  sim->add_option("--calibration", c.calibration_path, "Also write the calibration table (CSV)");
  sim->add_option("--threads", c.threads, "Worker threads (default: all cores)");
  sim->add_flag("--timing", c.timing, "Include wall time in the output");

  auto* ver = app.add_subcommand("verify-asymptotics", "Monte-Carlo check of the covariance orderings");
  ver->add_option("--generator", c.generator, "mzNormal | nzNormal | ueNormal | mixNormal | T3 | EXP")
      ->capture_default_str();
  ver->add_option("--beta", c.beta, "Coefficient value(s): one value repeated d times, or d values");
  ver->add_option("--d", c.d, "Dimension")->capture_default_str()->check(CLI::PositiveNumber);
  ver->add_option("--h", c.design.h, "unit | mvc | mmse")
      ->capture_default_str()
      ->check(CLI::IsMember({"unit", "mvc", "mmse"}));
  ver->add_option("--rho", c.rho, "Sampling rate in [0, 1)")->capture_default_str();
  ver->add_option("--mc", c.mc, "Monte-Carlo draws")->capture_default_str();
  ver->add_option("--threads", c.threads, "Worker threads (default: all cores)");
  c.seed.add_to(*ver);
  ver->add_option("--out", c.out_path, "Output JSON (default: stdout)");

  auto* bench = app.add_subcommand("bench", "Time the pipelines against the full-data fit");
  bench->add_option("--N", c.n_grid, "Full-data sizes")->capture_default_str();
  bench->add_option("--d", c.d, "Dimension")->capture_default_str();
  bench->add_option("--n", c.design.n, "Second-stage subsample size")->capture_default_str();
  bench->add_option("--n1", c.design.n1, "Pilot subsample size")->capture_default_str();
  bench->add_option("--h", c.design.h, "unit | mvc | mmse")
      ->capture_default_str()
      ->check(CLI::IsMember({"unit", "mvc", "mmse"}));
  bench->add_option("--backing", c.backing, "file | memory")
      ->capture_default_str()
      ->check(CLI::IsMember({"file", "memory"}));
  bench->add_option("--work-dir", c.work_dir, "Directory for the generated data file");
  bench->add_option("--block-size", c.data.block_size, "Rows held in memory while scanning")
      ->capture_default_str();
  c.seed.add_to(*bench);
  bench->add_option("--repeats", c.repeats, "Runs per pipeline; the fastest is reported")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", c.out_path, "Output CSV (default: stdout)");
  bench->add_flag("--timing", c.timing, "Include wall times in the output file");

  auto* gen = app.add_subcommand("generate", "Write a simulated data set as CSV (label first)");
  gen->add_option("--generator", c.generator, "mzNormal | nzNormal | ueNormal | mixNormal | T3 | EXP")
      ->capture_default_str();
  gen->add_option("--N", c.big_n, "Rows")->capture_default_str();
  gen->add_option("--d", c.d, "Covariates")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--beta", c.beta, "Coefficient value(s)");
  c.seed.add_to(*gen);
  gen->add_option("--out", c.out_path, "Output CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }

  try {
    if (sub->parsed()) return subsample_cmd(c, out, err);
    if (est->parsed()) return estimate_cmd(c, out, err);
    if (sim->parsed()) return simulate_cmd(c, out, err);
    if (ver->parsed()) return verify_cmd(c, out, err);
    if (bench->parsed()) return bench_cmd(c, out, err);
    if (gen->parsed()) return generate_cmd(c, out, err);
  } catch (const InputError& e) {
    err << "osmac: input error: " << e.what() << '\n';
    return kInputError;
  } catch (const EstimationError& e) {
    err << "osmac: estimation failed: " << e.what() << '\n';
    return kEstimationError;
  } catch (const std::exception& e) {
    err << "osmac: error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace osmac::cli
