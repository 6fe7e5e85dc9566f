#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "osmac/covariates.hpp"
#include "osmac/estimators.hpp"
#include "osmac/probabilities.hpp"

namespace osmac {

struct ExperimentPlan {
  CovariateKind generator = CovariateKind::MzNormal;
  std::size_t N = 10000;
  ParamVector beta_t = ParamVector::Constant(7, 0.5);
  std::size_t n1 = 200;
  std::vector<std::size_t> n_grid{100, 200, 400, 600, 800, 1000};
  std::size_t S = 500;
  std::vector<Method> estimators{Method::Weighted, Method::Replacement, Method::Poisson};
  std::vector<HKind> choices{HKind::MNorm};
  bool conditional = false;  // true: one full data set shared by every replication
  VarianceKind variance = VarianceKind::Full;
  double max_failure_rate = 0.02;
  unsigned threads = 0;  // 0: hardware concurrency

  std::size_t dim() const noexcept { return static_cast<std::size_t>(beta_t.size()); }
  /// Throws InputError when the plan is inconsistent.
  void validate() const;
};

/// Parses a JSON plan. Missing keys keep their defaults; unknown keys are
/// rejected. "beta_t" may be a number (repeated d times, d from "d") or an
/// array.
ExperimentPlan parse_plan(std::string_view json_text);
std::string plan_to_json(const ExperimentPlan& plan);

struct CellResult {
  Method estimator = Method::Replacement;
  HKind choice = HKind::MNorm;
  std::size_t n = 0;
  double mse = 0.0;
  double mean_trace = 0.0;           // NaN when the estimator has no variance
  double relative_efficiency = 0.0;  // MSE(weighted) / MSE(this); NaN without a weighted cell
  double mean_realized_size = 0.0;
  std::size_t replications = 0;      // successful ones
  std::size_t failures = 0;
};

struct ExperimentResult {
  ExperimentPlan plan;
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;
  double runtime_seconds = 0.0;

  const CellResult& cell(Method estimator, HKind choice, std::size_t n) const;
};

/// Replication s uses data seeded from (seed, s) unless the plan is
/// conditional, and every pipeline in it runs with the same derived seed, so
/// the weighted and with-replacement estimators see the same subsample.
/// Aggregates do not depend on the thread count. Throws EstimationError when
/// some cell loses more than plan.max_failure_rate of its replications.
ExperimentResult run_experiment(const ExperimentPlan& plan, std::uint64_t seed);

struct CalibrationRow {
  Method estimator = Method::Replacement;
  HKind choice = HKind::MNorm;
  std::size_t n = 0;
  double mse = 0.0;
  double mean_trace = 0.0;
  double ratio = 0.0;    // mean_trace / mse
  bool flagged = false;  // ratio outside [0.7, 1.3]
};

std::vector<CalibrationRow> calibration_table(const ExperimentResult& result);

/// Long format: estimator,choice,n,metric,value. Runtime is written only when
/// include_timing is set.
std::string result_to_csv(const ExperimentResult& result, bool include_timing = false);
std::string result_to_json(const ExperimentResult& result, bool include_timing = false);
std::string calibration_to_csv(const std::vector<CalibrationRow>& rows);

enum class Backing { Memory, File };

struct TimingRow {
  std::size_t N = 0;
  std::string pipeline;  // replacement | poisson | full
  double seconds = 0.0;
  std::size_t passes = 0;        // total full-data passes, pilot included
  std::size_t pilot_passes = 0;
  std::size_t rows_read = 0;
};

struct TimingConfig {
  std::vector<std::size_t> N_grid{1000000};
  std::size_t d = 10;
  std::size_t n1 = 200;
  std::size_t n = 1000;
  HKind h = HKind::Norm;
  Backing backing = Backing::File;
  std::filesystem::path work_dir;  // for file backing; defaults to the temp directory
  std::size_t block_size = 1000;
  std::size_t repeats = 3;  // seconds is the fastest of these runs, taken round-robin
};

/// Generates mzNormal data at each N and times the two subsample pipelines
/// and the full-data MLE on the same source. Pass counts exclude the row
/// counting done when a file is opened.
std::vector<TimingRow> timing_benchmark(const TimingConfig& config, std::uint64_t seed);
std::string timing_to_csv(const std::vector<TimingRow>& rows, bool include_seconds = true);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace osmac
