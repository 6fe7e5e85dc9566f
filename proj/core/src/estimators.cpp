#include "osmac/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "osmac/errors.hpp"
#include "osmac/rng.hpp"

namespace osmac {

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Eigen::LDLT<Matrix> factor_combined(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("Hessian sizes differ");
  Eigen::LDLT<Matrix> ldlt(a + b);
  const Vector pivots = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1e-14) ||
      !(pivots.minCoeff() > 1e-14 * pivots.cwiseAbs().maxCoeff())) {
    throw SingularMatrixError("combined Hessian is singular");
  }
  return ldlt;
}

}  // namespace

double estimate_psi(const Subsample& pilot_rows, const ParamVector& beta1, const HChoice& choice,
                    std::size_t n1, std::size_t n_full) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pilot_rows.size(); ++i) {
    const double inclusion = std::min(static_cast<double>(n1) * pilot_rows.prob(i), 1.0);
    sum += raw_score(pilot_rows.x(i), pilot_rows.y(i), beta1, choice) / inclusion;
  }
  return sum / static_cast<double>(n_full);
}

PilotEstimate pilot_from_rows(Subsample rows, std::size_t n_full, bool has_intercept,
                              const PilotConfig& config) {
  const std::size_t d = rows.dim();
  if (rows.empty()) throw EstimationError("pilot subsample is empty");
  if (rows.size() < d + 1) throw EstimationError("pilot subsample has fewer than d + 1 rows");

  PilotEstimate p;
  p.rule = config.rule;
  p.n1 = config.n1;
  p.n_full = n_full;
  p.mode = config.mode;

  const WeightedData unit = rows.with_constant_weight(1.0);
  FitReport fit;
  try {
    fit = newton_maximize(unit.view(), ParamVector::Zero(static_cast<Eigen::Index>(d)), config.newton);
  } catch (const SeparationError& e) {
    throw SeparationError(std::string("pilot: ") + e.what());
  }
  if (!fit.converged) throw EstimationError("pilot: Newton iteration did not converge");
  p.beta_tilde1 = fit.beta;
  p.iterations = fit.iterations;

  p.offset_b = ParamVector::Zero(static_cast<Eigen::Index>(d));
  if (!config.rule.uniform()) {
    if (!has_intercept) throw InputError("a case-control pilot (c0 != c1) needs an intercept column");
    p.offset_b[0] = std::log(config.rule.c0 / config.rule.c1);
  }
  p.beta1 = p.beta_tilde1 + p.offset_b;

  const LikelihoodTerms terms = evaluate(unit.view(), p.beta_tilde1, true);
  p.hessian1 = terms.hessian;
  p.score_outer1 = terms.score_outer;

  switch (config.h) {
    case HKind::Unit: p.choice = HChoice::unit(); break;
    case HKind::Norm: p.choice = HChoice::norm(); break;
    case HKind::MNorm: {
      // Inverse-probability weights make the pilot average represent the full
      // data when the pilot is case-control.
      WeightedData w = rows.with_constant_weight(1.0);
      for (std::size_t i = 0; i < rows.size(); ++i)
        w.w[static_cast<Eigen::Index>(i)] = 1.0 / (static_cast<double>(n_full) * rows.prob(i));
      p.choice = HChoice::mnorm(compute_m_matrix(w.view(), p.beta1));
      break;
    }
  }

  p.psi_hat1 = estimate_psi(rows, p.beta1, p.choice, config.n1, n_full);
  if (!(p.psi_hat1 > 0.0)) throw DegenerateProbabilitiesError("pilot normalizer estimate is zero");
  p.rows = std::move(rows);
  return p;
}

PilotEstimate pilot_fit(DataSource& data, const PilotConfig& config, std::uint64_t seed) {
  if (config.n1 < data.dim() + 1)
    throw InputError("pilot size too small: n1 must be at least d + 1 = " +
                     std::to_string(data.dim() + 1));
  if (!config.rule.uniform() && !data.has_intercept())
    throw InputError("a case-control pilot (c0 != c1) needs an intercept column");
  const int attempts = std::max(config.max_attempts, 1);
  for (int k = 0;; ++k) {
    const std::uint64_t s = k == 0 ? seed : derive_seed(seed, streams::pilot, static_cast<std::uint64_t>(k));
    try {
      Subsample rows = draw_pilot(data, config.rule, config.n1, config.mode, s);
      if (rows.empty()) throw SeparationError("pilot: Poisson pilot subsample is empty");
      PilotEstimate p = pilot_from_rows(std::move(rows), data.rows(), data.has_intercept(), config);
      p.attempts = k + 1;
      return p;
    } catch (const SeparationError&) {
      if (k + 1 >= attempts) throw;
    }
  }
}

Subsample draw_os_subsample(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                            std::uint64_t seed) {
  const ProbabilityVector pi = compute_pi_os(data, pilot.beta1, pilot.choice);
  const std::vector<std::size_t> idx = draw_indexes_with_replacement(pi.probs, n, seed);
  Subsample rows = gather_sorted(data, idx);
  std::vector<double> probs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) probs[i] = pi.probs[rows.origin(i)];
  rows.set_probs(probs);
  return rows;
}

namespace {

StageEstimate fit_shifted(const PilotEstimate& pilot, Subsample rows, const NewtonOptions& newton,
                          const char* stage_name) {
  if (rows.empty()) throw EstimationError(std::string(stage_name) + ": subsample is empty");
  StageEstimate s;
  FitReport fit;
  try {
    fit = newton_maximize(rows.view(), ParamVector::Zero(static_cast<Eigen::Index>(rows.dim())),
                          newton);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string(stage_name) + ": " + e.what());
  }
  if (!fit.converged) throw EstimationError(std::string(stage_name) + ": Newton iteration did not converge");
  s.beta_tilde = fit.beta;
  s.beta_hat = s.beta_tilde + pilot.beta1;
  s.iterations = fit.iterations;
  const LikelihoodTerms terms = evaluate(rows.view(), s.beta_tilde, true);
  s.hessian = terms.hessian;
  s.score_outer = terms.score_outer;
  s.rows = std::move(rows);
  return s;
}

}  // namespace

StageEstimate fit_unweighted_stage(const PilotEstimate& pilot, Subsample rows,
                                   const NewtonOptions& newton) {
  std::vector<double> ones(rows.size(), 1.0);
  rows.set_weights(ones);
  return fit_shifted(pilot, std::move(rows), newton, "second stage");
}

StageEstimate fit_unweighted_replacement(DataSource& data, const PilotEstimate& pilot,
                                         std::size_t n, std::uint64_t seed,
                                         const NewtonOptions& newton) {
  return fit_unweighted_stage(pilot, draw_os_subsample(data, pilot, n, seed), newton);
}

WeightedEstimate fit_weighted_stage(const PilotEstimate& pilot, const Subsample& rows,
                                    const NewtonOptions& newton) {
  if (rows.empty()) throw EstimationError("weighted stage: subsample is empty");
  const auto d = static_cast<Eigen::Index>(rows.dim());

  // Weights are rescaled to mean one; the maximizer is unchanged and the
  // score stays on the scale the convergence tolerance assumes.
  WeightedData stage = rows.with_constant_weight(1.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows.prob(i) > 0.0)) throw EstimationError("weighted stage: row with zero probability");
    stage.w[static_cast<Eigen::Index>(i)] = 1.0 / rows.prob(i);
  }
  const double stage_mean = stage.w.mean();

  WeightedData both;
  const Eigen::Index n1 = static_cast<Eigen::Index>(pilot.rows.size());
  const Eigen::Index total = n1 + stage.x.rows();
  both.x.resize(total, d);
  both.y.resize(total);
  both.w.resize(total);
  for (Eigen::Index i = 0; i < n1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto x = pilot.rows.x(k);
    for (Eigen::Index j = 0; j < d; ++j) both.x(i, j) = x[static_cast<std::size_t>(j)];
    both.y[i] = pilot.rows.y(k);
    // Per-draw inverse probabilities, the same scale as the stage rows.
    const double n1d = static_cast<double>(pilot.n1);
    const double p1 = pilot.rows.prob(k);
    both.w[i] = pilot.mode == SamplingMode::Poisson ? n1d / std::min(n1d * p1, 1.0) : 1.0 / p1;
  }
  both.x.bottomRows(stage.x.rows()) = stage.x;
  both.y.tail(stage.y.size()) = stage.y;
  both.w.tail(stage.w.size()) = stage.w;
  const double both_mean = both.w.mean();

  stage.w /= stage_mean;
  both.w /= both_mean;

  WeightedEstimate out;
  FitReport fit_stage;
  FitReport fit_both;
  try {
    fit_stage = newton_maximize(stage.view(), pilot.beta1, newton);
    fit_both = newton_maximize(both.view(), pilot.beta1, newton);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("weighted stage: ") + e.what());
  }
  if (!fit_stage.converged || !fit_both.converged)
    throw EstimationError("weighted stage: Newton iteration did not converge");
  out.beta_w = fit_stage.beta;
  out.beta_check = fit_both.beta;
  out.iterations = fit_stage.iterations;
  return out;
}

WeightedEstimate fit_weighted_osmac(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                                    std::uint64_t seed, const NewtonOptions& newton) {
  return fit_weighted_stage(pilot, draw_os_subsample(data, pilot, n, seed), newton);
}

StageEstimate fit_poisson_stage(const PilotEstimate& pilot, Subsample rows,
                                const NewtonOptions& newton) {
  return fit_shifted(pilot, std::move(rows), newton, "poisson stage");
}

StageEstimate fit_poisson(DataSource& data, const PilotEstimate& pilot, std::size_t n,
                          std::uint64_t seed, const NewtonOptions& newton) {
  Subsample rows = poisson_scan(data, pilot.beta1, pilot.psi_hat1, pilot.choice,
                                static_cast<double>(n), seed);
  return fit_poisson_stage(pilot, std::move(rows), newton);
}

CombinedEstimate combine(const PilotEstimate& pilot, const StageEstimate& stage) {
  CombinedEstimate out;
  if (pilot.hessian1.isZero(0.0)) {
    out.beta_check = stage.beta_hat;
    return out;
  }
  if (stage.hessian.isZero(0.0)) {
    out.beta_check = pilot.beta1;
    return out;
  }
  const auto ldlt = factor_combined(pilot.hessian1, stage.hessian);
  const Vector rhs = pilot.hessian1 * pilot.beta1 + stage.hessian * stage.beta_hat;
  out.beta_check = ldlt.solve(rhs);
  return out;
}

Matrix variance_simplified(const PilotEstimate& pilot, const StageEstimate& stage) {
  const auto ldlt = factor_combined(pilot.hessian1, stage.hessian);
  const auto d = pilot.hessian1.rows();
  return symmetrized(ldlt.solve(Matrix::Identity(d, d)));
}

Matrix variance_full(const PilotEstimate& pilot, const StageEstimate& stage) {
  const Matrix bread = variance_simplified(pilot, stage);
  return symmetrized(bread * (pilot.score_outer1 + stage.score_outer) * bread);
}

CombinedEstimate finalize(const PilotEstimate& pilot, const StageEstimate& stage,
                          VarianceKind kind) {
  CombinedEstimate out = combine(pilot, stage);
  out.vcov_kind = kind;
  if (kind == VarianceKind::Full) out.vcov = variance_full(pilot, stage);
  if (kind == VarianceKind::Simplified) out.vcov = variance_simplified(pilot, stage);
  return out;
}

FitReport full_data_mle(DataSource& data, const NewtonOptions& newton) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  RowFeed feed = [&data](const RowSink& sink) {
    data.scan([&](const Row& row) {
      sink(row.covariates(), row.label(), 1.0);
      return true;
    });
  };
  FitReport fit = newton_maximize(feed, d, ParamVector::Zero(d), newton);
  if (!fit.converged) throw EstimationError("full-data MLE: Newton iteration did not converge");
  return fit;
}

ParamVector weighted_full_oracle(DataSource& data, const PilotEstimate& pilot,
                                 const NewtonOptions& newton) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  RowFeed feed = [&](const RowSink& sink) {
    data.scan([&](const Row& row) {
      const auto x = row.covariates();
      const double y = row.label();
      sink(x, y, raw_score(x, y, pilot.beta1, pilot.choice));
      return true;
    });
  };
  FitReport fit = newton_maximize(feed, d, ParamVector::Zero(d), newton);
  if (!fit.converged) throw EstimationError("weighted full-data oracle did not converge");
  return fit.beta + pilot.beta1;
}

Method parse_method(std::string_view name) {
  if (name == "weighted") return Method::Weighted;
  if (name == "replacement") return Method::Replacement;
  if (name == "poisson") return Method::Poisson;
  throw InputError("unknown method '" + std::string(name) +
                   "' (expected weighted, replacement or poisson)");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Weighted: return "weighted";
    case Method::Replacement: return "replacement";
    case Method::Poisson: return "poisson";
  }
  return "?";
}

namespace {

// Runs one pipeline stage and names it in any estimation failure.
template <class Fn>
auto staged(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const EstimationError& e) {
    const std::string what = e.what();
    if (what.rfind(stage, 0) == 0) throw;
    throw EstimationError(stage + ": " + what);
  }
}

}  // namespace

PipelineResult run_pipeline(DataSource& data, const PipelineConfig& config, std::uint64_t seed) {
  if (config.n == 0) throw InputError("subsample size n must be at least 1");
  const std::size_t passes0 = data.stats().passes;
  const std::size_t rows0 = data.stats().rows_read;

  PilotConfig pc;
  pc.n1 = config.n1;
  pc.rule = config.rule;
  pc.mode = config.method == Method::Poisson ? SamplingMode::Poisson : SamplingMode::Replacement;
  pc.h = config.h;
  pc.newton = config.newton;

  PipelineResult r;
  r.pilot = staged("pilot", [&] { return pilot_fit(data, pc, derive_seed(seed, streams::pilot)); });
  r.pilot_passes = data.stats().passes - passes0;
  const std::uint64_t stage_seed = derive_seed(seed, streams::stage);

  switch (config.method) {
    case Method::Weighted: {
      r.weighted = staged("weighted stage", [&] {
        return fit_weighted_osmac(data, r.pilot, config.n, stage_seed, config.newton);
      });
      r.combined.beta_check = r.weighted->beta_check;
      break;
    }
    case Method::Replacement:
      r.stage = staged("second stage", [&] {
        return fit_unweighted_replacement(data, r.pilot, config.n, stage_seed, config.newton);
      });
      r.combined = staged("combine", [&] { return finalize(r.pilot, *r.stage, config.variance); });
      break;
    case Method::Poisson:
      r.stage = staged("poisson stage", [&] {
        return fit_poisson(data, r.pilot, config.n, stage_seed, config.newton);
      });
      r.combined = staged("combine", [&] { return finalize(r.pilot, *r.stage, config.variance); });
      break;
  }
  r.passes = data.stats().passes - passes0;
  r.rows_read = data.stats().rows_read - rows0;
  return r;
}

}  // namespace osmac
