#include "osmac/sim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "osmac/errors.hpp"
#include "osmac/ingest.hpp"
#include "osmac/parallel.hpp"
#include "osmac/rng.hpp"

namespace osmac {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view variance_name(VarianceKind k) {
  switch (k) {
    case VarianceKind::None: return "none";
    case VarianceKind::Full: return "full";
    case VarianceKind::Simplified: return "simplified";
  }
  return "?";
}

VarianceKind parse_variance(std::string_view s) {
  if (s == "full") return VarianceKind::Full;
  if (s == "simplified") return VarianceKind::Simplified;
  if (s == "none") return VarianceKind::None;
  throw InputError("unknown variance '" + std::string(s) + "' (expected full or simplified)");
}

template <class T>
T get_as(const ordered_json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(std::string("plan: bad value for '") + key + "'");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void ExperimentPlan::validate() const {
  if (beta_t.size() == 0) throw InputError("plan: beta_t is empty");
  if (!beta_t.allFinite()) throw InputError("plan: beta_t must be finite");
  if (n_grid.empty()) throw InputError("plan: n_grid is empty");
  if (S == 0) throw InputError("plan: S must be at least 1");
  if (estimators.empty()) throw InputError("plan: no estimators selected");
  if (choices.empty()) throw InputError("plan: no h choices selected");
  if (n1 < dim() + 1) throw InputError("plan: pilot size too small: n1 must be at least d + 1");
  const std::size_t n_max = *std::max_element(n_grid.begin(), n_grid.end());
  if (std::find(n_grid.begin(), n_grid.end(), std::size_t{0}) != n_grid.end())
    throw InputError("plan: subsample sizes must be positive");
  if (n1 + n_max >= N) throw InputError("plan: n1 + max(n_grid) must be below N");
  if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0))
    throw InputError("plan: max_failure_rate must lie in [0, 1)");
}

ExperimentPlan parse_plan(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("plan: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("plan: top level must be an object");
  static const char* known[] = {"generator", "N",     "d",           "beta_t",    "n1",
                                "n_grid",    "S",     "estimators",  "choices",   "conditional",
                                "variance",  "threads", "max_failure_rate"};
  for (const auto& item : j.items()) {
    if (std::none_of(std::begin(known), std::end(known),
                     [&](const char* k) { return item.key() == k; }))
      throw InputError("plan: unknown key '" + item.key() + "'");
  }

  ExperimentPlan p;
  if (j.contains("generator")) p.generator = parse_covariate_kind(get_as<std::string>(j, "generator"));
  if (j.contains("N")) p.N = get_as<std::size_t>(j, "N");
  if (j.contains("beta_t") && j["beta_t"].is_array()) {
    const auto v = get_as<std::vector<double>>(j, "beta_t");
    p.beta_t = Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    if (j.contains("d") && get_as<std::size_t>(j, "d") != v.size())
      throw InputError("plan: d does not match the length of beta_t");
  } else {
    const std::size_t d = j.contains("d") ? get_as<std::size_t>(j, "d") : 7;
    const double b = j.contains("beta_t") ? get_as<double>(j, "beta_t") : 0.5;
    p.beta_t = ParamVector::Constant(static_cast<Eigen::Index>(d), b);
  }
  if (j.contains("n1")) p.n1 = get_as<std::size_t>(j, "n1");
  if (j.contains("n_grid")) p.n_grid = get_as<std::vector<std::size_t>>(j, "n_grid");
  if (j.contains("S")) p.S = get_as<std::size_t>(j, "S");
  if (j.contains("estimators")) {
    p.estimators.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j, "estimators"))
      p.estimators.push_back(parse_method(s));
  }
  if (j.contains("choices")) {
    p.choices.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j, "choices"))
      p.choices.push_back(parse_hkind(s));
  }
  if (j.contains("conditional")) p.conditional = get_as<bool>(j, "conditional");
  if (j.contains("variance")) p.variance = parse_variance(get_as<std::string>(j, "variance"));
  if (j.contains("threads")) p.threads = get_as<unsigned>(j, "threads");
  if (j.contains("max_failure_rate")) p.max_failure_rate = get_as<double>(j, "max_failure_rate");
  p.validate();
  return p;
}

std::string plan_to_json(const ExperimentPlan& p) {
  ordered_json j;
  j["generator"] = covariate_kind_name(p.generator);
  j["N"] = p.N;
  j["beta_t"] = std::vector<double>(p.beta_t.data(), p.beta_t.data() + p.beta_t.size());
  j["n1"] = p.n1;
  j["n_grid"] = p.n_grid;
  j["S"] = p.S;
  auto& est = j["estimators"] = ordered_json::array();
  for (Method m : p.estimators) est.push_back(method_name(m));
  auto& ch = j["choices"] = ordered_json::array();
  for (HKind h : p.choices) ch.push_back(hkind_name(h));
  j["conditional"] = p.conditional;
  j["variance"] = variance_name(p.variance);
  j["max_failure_rate"] = p.max_failure_rate;
  return j.dump(2);
}

const CellResult& ExperimentResult::cell(Method estimator, HKind choice, std::size_t n) const {
  for (const auto& c : cells)
    if (c.estimator == estimator && c.choice == choice && c.n == n) return c;
  throw InputError("no such cell in the experiment result");
}

namespace {

struct Outcome {
  bool ok = false;
  double sq_err = 0.0;
  double trace = std::numeric_limits<double>::quiet_NaN();
  double size = 0.0;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan, std::uint64_t seed) {
  plan.validate();
  const auto t0 = std::chrono::steady_clock::now();

  struct CellKey {
    Method m;
    HKind h;
    std::size_t n;
  };
  std::vector<CellKey> keys;
  for (HKind h : plan.choices)
    for (std::size_t n : plan.n_grid)
      for (Method m : plan.estimators) keys.push_back({m, h, n});

  std::optional<Dataset> shared;
  if (plan.conditional) shared = generate(plan.generator, plan.N, plan.beta_t, derive_seed(seed, streams::data));

  std::vector<Outcome> outcomes(keys.size() * plan.S);
  parallel_for(plan.S, plan.threads, [&](std::size_t s) {
    MemorySource source(shared ? *shared
                               : generate(plan.generator, plan.N, plan.beta_t,
                                          derive_seed(seed, streams::data, s + 1)));
    const std::uint64_t rep_seed = derive_seed(seed, streams::replicate, s);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      PipelineConfig cfg;
      cfg.method = keys[k].m;
      cfg.h = keys[k].h;
      cfg.n = keys[k].n;
      cfg.n1 = plan.n1;
      cfg.variance = plan.variance;
      Outcome& out = outcomes[k * plan.S + s];
      try {
        const PipelineResult r = run_pipeline(source, cfg, rep_seed);
        const ParamVector err = r.combined.beta_check - plan.beta_t;
        out.sq_err = err.squaredNorm();
        if (r.combined.vcov_kind != VarianceKind::None) out.trace = r.combined.vcov.trace();
        out.size = r.stage ? static_cast<double>(r.stage->rows.size()) : static_cast<double>(cfg.n);
        out.ok = std::isfinite(out.sq_err);
      } catch (const EstimationError&) {
        out.ok = false;
      }
    }
  });

  ExperimentResult result;
  result.plan = plan;
  result.seed = seed;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    CellResult c;
    c.estimator = keys[k].m;
    c.choice = keys[k].h;
    c.n = keys[k].n;
    double se = 0.0, tr = 0.0, size = 0.0;
    for (std::size_t s = 0; s < plan.S; ++s) {
      const Outcome& o = outcomes[k * plan.S + s];
      if (!o.ok) {
        ++c.failures;
        continue;
      }
      ++c.replications;
      se += o.sq_err;
      tr += o.trace;
      size += o.size;
    }
    if (static_cast<double>(c.failures) > plan.max_failure_rate * static_cast<double>(plan.S))
      throw EstimationError("simulation: " + std::to_string(c.failures) + " of " +
                            std::to_string(plan.S) + " replications failed for " +
                            std::string(method_name(c.estimator)) + "/" +
                            std::string(hkind_name(c.choice)) + " at n = " + std::to_string(c.n));
    const double reps = static_cast<double>(c.replications);
    c.mse = se / reps;
    c.mean_trace = tr / reps;
    c.mean_realized_size = size / reps;
    c.relative_efficiency = std::numeric_limits<double>::quiet_NaN();
    result.cells.push_back(c);
  }
  for (auto& c : result.cells) {
    for (const auto& w : result.cells)
      if (w.estimator == Method::Weighted && w.choice == c.choice && w.n == c.n)
        c.relative_efficiency = w.mse / c.mse;
  }
  result.runtime_seconds = seconds_since(t0);
  return result;
}

std::vector<CalibrationRow> calibration_table(const ExperimentResult& result) {
  std::vector<CalibrationRow> rows;
  for (const auto& c : result.cells) {
    if (std::isnan(c.mean_trace)) continue;
    CalibrationRow r;
    r.estimator = c.estimator;
    r.choice = c.choice;
    r.n = c.n;
    r.mse = c.mse;
    r.mean_trace = c.mean_trace;
    r.ratio = c.mean_trace / c.mse;
    r.flagged = !(r.ratio >= 0.7 && r.ratio <= 1.3);
    rows.push_back(r);
  }
  return rows;
}

std::string result_to_csv(const ExperimentResult& result, bool include_timing) {
  std::ostringstream os;
  os << "estimator,choice,n,metric,value\n";
  for (const auto& c : result.cells) {
    const std::string prefix = std::string(method_name(c.estimator)) + "," +
                               std::string(hkind_name(c.choice)) + "," + std::to_string(c.n) + ",";
    os << prefix << "mse," << format_double(c.mse) << '\n';
    if (!std::isnan(c.mean_trace)) os << prefix << "mean_trace," << format_double(c.mean_trace) << '\n';
    if (!std::isnan(c.relative_efficiency))
      os << prefix << "relative_efficiency," << format_double(c.relative_efficiency) << '\n';
    os << prefix << "mean_realized_size," << format_double(c.mean_realized_size) << '\n';
    os << prefix << "replications," << c.replications << '\n';
    os << prefix << "failures," << c.failures << '\n';
  }
  if (include_timing) os << ",,,runtime_seconds," << format_double(result.runtime_seconds) << '\n';
  return os.str();
}

std::string result_to_json(const ExperimentResult& result, bool include_timing) {
  ordered_json j;
  j["plan"] = ordered_json::parse(plan_to_json(result.plan));
  j["seed"] = result.seed;
  auto& cells = j["cells"] = ordered_json::array();
  auto num = [](double v) -> ordered_json { return std::isfinite(v) ? ordered_json(v) : ordered_json(); };
  for (const auto& c : result.cells) {
    ordered_json e;
    e["estimator"] = method_name(c.estimator);
    e["choice"] = hkind_name(c.choice);
    e["n"] = c.n;
    e["mse"] = num(c.mse);
    e["mean_trace"] = num(c.mean_trace);
    e["relative_efficiency"] = num(c.relative_efficiency);
    e["mean_realized_size"] = num(c.mean_realized_size);
    e["replications"] = c.replications;
    e["failures"] = c.failures;
    cells.push_back(std::move(e));
  }
  auto& cal = j["calibration"] = ordered_json::array();
  for (const auto& r : calibration_table(result)) {
    ordered_json e;
    e["estimator"] = method_name(r.estimator);
    e["choice"] = hkind_name(r.choice);
    e["n"] = r.n;
    e["ratio"] = num(r.ratio);
    e["flagged"] = r.flagged;
    cal.push_back(std::move(e));
  }
  if (include_timing) j["runtime_seconds"] = result.runtime_seconds;
  return j.dump(2) + "\n";
}

std::string calibration_to_csv(const std::vector<CalibrationRow>& rows) {
  std::ostringstream os;
  os << "estimator,choice,n,mse,mean_trace,ratio,flagged\n";
  for (const auto& r : rows) {
    os << method_name(r.estimator) << ',' << hkind_name(r.choice) << ',' << r.n << ','
       << format_double(r.mse) << ',' << format_double(r.mean_trace) << ','
       << format_double(r.ratio) << ',' << (r.flagged ? 1 : 0) << '\n';
  }
  return os.str();
}

std::vector<TimingRow> timing_benchmark(const TimingConfig& config, std::uint64_t seed) {
  if (config.n1 < config.d + 1) throw InputError("pilot size too small: n1 must be at least d + 1");
  std::vector<TimingRow> rows;
  const ParamVector beta_t = ParamVector::Constant(static_cast<Eigen::Index>(config.d), 0.5);
  for (std::size_t big_n : config.N_grid) {
    if (config.n1 + config.n >= big_n) throw InputError("benchmark: n1 + n must be below N");
    Dataset data = generate(CovariateKind::MzNormal, big_n, beta_t, derive_seed(seed, streams::data, big_n));

    std::unique_ptr<DataSource> source;
    std::filesystem::path file;
    if (config.backing == Backing::File) {
      const auto dir = config.work_dir.empty() ? std::filesystem::temp_directory_path() : config.work_dir;
      file = dir / ("osmac_bench_" + std::to_string(big_n) + "_" + std::to_string(seed) + ".csv");
      write_csv(file, data, ',');
      data = Dataset{};
      Schema schema;
      schema.block_size = config.block_size;
      schema.n_rows = big_n;
      source = open_csv(file, schema);
    } else {
      source = std::make_unique<MemorySource>(std::move(data));
    }

    struct Job {
      std::string name;
      std::function<std::size_t()> run;
    };
    std::vector<Job> jobs;
    for (Method m : {Method::Replacement, Method::Poisson}) {
      PipelineConfig cfg;
      cfg.method = m;
      cfg.h = config.h;
      cfg.n = config.n;
      cfg.n1 = config.n1;
      jobs.push_back({std::string(method_name(m)),
                      [&source, cfg, seed] { return run_pipeline(*source, cfg, seed).pilot_passes; }});
    }
    jobs.push_back({"full", [&source] {
                      full_data_mle(*source);
                      return std::size_t{0};
                    }});

    std::vector<TimingRow> timed(jobs.size());
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      timed[j].N = big_n;
      timed[j].pipeline = jobs[j].name;
      timed[j].seconds = std::numeric_limits<double>::infinity();
    }
    // Repeats go round-robin over the pipelines.
    for (std::size_t k = 0; k < std::max<std::size_t>(config.repeats, 1); ++k) {
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        TimingRow& r = timed[j];
        source->reset_stats();
        const auto t0 = std::chrono::steady_clock::now();
        r.pilot_passes = jobs[j].run();
        r.seconds = std::min(r.seconds, seconds_since(t0));
        r.passes = source->stats().passes;
        r.rows_read = source->stats().rows_read;
      }
    }
    rows.insert(rows.end(), timed.begin(), timed.end());
    source.reset();
    if (!file.empty()) std::filesystem::remove(file);
  }
  return rows;
}

std::string timing_to_csv(const std::vector<TimingRow>& rows, bool include_seconds) {
  std::ostringstream os;
  os << "N,pipeline," << (include_seconds ? "seconds," : "") << "passes,pilot_passes,rows_read\n";
  for (const auto& r : rows) {
    os << r.N << ',' << r.pipeline << ',';
    if (include_seconds) os << format_double(r.seconds) << ',';
    os << r.passes << ',' << r.pilot_passes << ',' << r.rows_read << '\n';
  }
  return os.str();
}

}  // namespace osmac
