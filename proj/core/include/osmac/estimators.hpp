#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "osmac/ingest.hpp"
#include "osmac/model.hpp"
#include "osmac/probabilities.hpp"
#include "osmac/sampler.hpp"

namespace osmac {

struct PilotConfig {
  std::size_t n1 = 200;
  CaseControl rule;
  SamplingMode mode = SamplingMode::Replacement;
  HKind h = HKind::Norm;
  NewtonOptions newton;
  int max_attempts = 3;  // a separated pilot is redrawn with a fresh seed
};

/// First-stage fit. beta_tilde1 is the unweighted MLE on the pilot rows;
/// beta1 = beta_tilde1 + offset_b undoes the case-control intercept shift.
/// hessian1 and score_outer1 are evaluated at beta_tilde1.
struct PilotEstimate {
  ParamVector beta_tilde1;
  ParamVector beta1;
  ParamVector offset_b;
  double psi_hat1 = 0.0;
  Matrix hessian1;
  Matrix score_outer1;
  Subsample rows;
  HChoice choice;  // resolved: MNorm carries M^{-1} estimated on the pilot
  CaseControl rule;
  std::size_t n1 = 0;
  std::size_t n_full = 0;
  SamplingMode mode = SamplingMode::Replacement;
  int iterations = 0;
  int attempts = 1;
};

/// Second-stage fit in the shifted parameterization:
/// beta_hat = beta_tilde + pilot.beta1. hessian = sum w phi x x' and
/// score_outer = sum w^2 psi^2 x x', both at beta_tilde.
struct StageEstimate {
  ParamVector beta_tilde;
  ParamVector beta_hat;
  Matrix hessian;
  Matrix score_outer;
  Subsample rows;
  int iterations = 0;
};

/// Inverse-probability weighted baseline. beta_w uses the second-stage rows
/// only; beta_check also folds in the pilot rows with their own inverse
/// probability weights.
struct WeightedEstimate {
  ParamVector beta_w;
  ParamVector beta_check;
  int iterations = 0;
};

enum class VarianceKind { None, Full, Simplified };

struct CombinedEstimate {
  ParamVector beta_check;
  Matrix vcov;  // empty when vcov_kind == None
  VarianceKind vcov_kind = VarianceKind::None;
};

/// Draws the pilot, fits it, and computes psi_hat1. Throws InputError when
/// n1 < d + 1 or when a case-control rule is used without an intercept.
/// Attempt k > 0 draws with derive_seed(seed, k); each costs one more pass.
PilotEstimate pilot_fit(DataSource& data, const PilotConfig& config, std::uint64_t seed);

/// The fitting half of pilot_fit, for a pilot subsample already in hand.
PilotEstimate pilot_from_rows(Subsample rows, std::size_t n_full, bool has_intercept,
                              const PilotConfig& config);

/// Normalizer estimate (1/N) sum |y - p(beta1)| h(x) / min(n1 pi_1i, 1) over
/// the pilot rows.
double estimate_psi(const Subsample& pilot_rows, const ParamVector& beta1, const HChoice& choice,
                    std::size_t n1, std::size_t n_full);

/// pi^OS(beta1) over the full data, n draws with replacement, and the gather
/// pass. Rows carry prob = pi_i and weight 1.
Subsample draw_os_subsample(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                            std::uint64_t seed);

StageEstimate fit_unweighted_stage(const PilotEstimate& pilot, Subsample rows,
                                   const NewtonOptions& newton = {});
StageEstimate fit_unweighted_replacement(DataSource& data, const PilotEstimate& pilot,
                                         std::size_t n, std::uint64_t seed,
                                         const NewtonOptions& newton = {});

WeightedEstimate fit_weighted_stage(const PilotEstimate& pilot, const Subsample& rows,
                                    const NewtonOptions& newton = {});
WeightedEstimate fit_weighted_osmac(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                                    std::uint64_t seed, const NewtonOptions& newton = {});

/// Rows from poisson_scan already carry the weights max(n pi, 1).
StageEstimate fit_poisson_stage(const PilotEstimate& pilot, Subsample rows,
                                const NewtonOptions& newton = {});
StageEstimate fit_poisson(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                          std::uint64_t seed, const NewtonOptions& newton = {});

/// Precision-weighted average of beta1 and beta_hat with the Hessians taken at
/// the uncorrected fits. A zero Hessian on either side passes the other
/// estimate through unchanged.
CombinedEstimate combine(const PilotEstimate& pilot, const StageEstimate& stage);

Matrix variance_full(const PilotEstimate& pilot, const StageEstimate& stage);
Matrix variance_simplified(const PilotEstimate& pilot, const StageEstimate& stage);

/// combine() plus the requested variance.
CombinedEstimate finalize(const PilotEstimate& pilot, const StageEstimate& stage,
                          VarianceKind kind);

FitReport full_data_mle(DataSource& data, const NewtonOptions& newton = {});

/// Full-data MLE weighted by |y - p(beta1)| h(x) in the shifted
/// parameterization; the conditional centre of the subsample estimators.
ParamVector weighted_full_oracle(DataSource& data, const PilotEstimate& pilot,
                                 const NewtonOptions& newton = {});

enum class Method { Weighted, Replacement, Poisson };

Method parse_method(std::string_view name);  // weighted | replacement | poisson
std::string_view method_name(Method m);

struct PipelineConfig {
  Method method = Method::Replacement;
  HKind h = HKind::Norm;
  std::size_t n = 1000;
  std::size_t n1 = 200;
  CaseControl rule;
  VarianceKind variance = VarianceKind::Full;
  NewtonOptions newton;
};

struct PipelineResult {
  PilotEstimate pilot;
  std::optional<StageEstimate> stage;        // replacement and poisson
  std::optional<WeightedEstimate> weighted;  // weighted
  CombinedEstimate combined;
  std::size_t passes = 0;      // full-data passes made by this run
  std::size_t pilot_passes = 0;
  std::size_t rows_read = 0;
};

/// Pilot, second stage, combination and variance end to end.
PipelineResult run_pipeline(DataSource& data, const PipelineConfig& config, std::uint64_t seed);

}  // namespace osmac
