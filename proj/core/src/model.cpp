#include "osmac/model.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "osmac/errors.hpp"

namespace osmac {

namespace {

void check_dim(std::size_t got, Eigen::Index want) {
  if (static_cast<Eigen::Index>(got) != want) {
    throw DimensionError("dimension mismatch: covariate has " + std::to_string(got) +
                         " coordinates, coefficients have " + std::to_string(want));
  }
}

void check_rows(const WeightedRows& rows, const ParamVector& beta) {
  if (rows.size() == 0) throw InputError("empty data");
  check_dim(static_cast<std::size_t>(rows.dim()), beta.size());
  if (rows.y.size() != rows.size() || rows.w.size() != rows.size()) {
    throw DimensionError("x, y and weight lengths differ");
  }
}

void symmetrize_lower(Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i) m(i, j) = m(j, i);
}

}  // namespace

double log1pexp(double z) noexcept {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double logistic(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logistic_variance(double eta) noexcept {
  const double e = std::exp(-std::abs(eta));
  const double q = 1.0 + e;
  return e / (q * q);
}

double linear_predictor(std::span<const double> x, const ParamVector& beta) {
  check_dim(x.size(), beta.size());
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += x[j] * beta[static_cast<Eigen::Index>(j)];
  return eta;
}

double sigmoid(std::span<const double> x, const ParamVector& beta) {
  return logistic(linear_predictor(x, beta));
}

double phi(std::span<const double> x, const ParamVector& beta) {
  return logistic_variance(linear_predictor(x, beta));
}

LikelihoodAccumulator::LikelihoodAccumulator(const ParamVector& beta, bool with_score_outer)
    : beta_(beta), with_outer_(with_score_outer) {
  const Eigen::Index d = beta.size();
  t_.score = Vector::Zero(d);
  t_.hessian = Matrix::Zero(d, d);
  if (with_outer_) t_.score_outer = Matrix::Zero(d, d);
}

void LikelihoodAccumulator::add(std::span<const double> x, double y, double w) {
  const Eigen::Index d = beta_.size();
  const double eta = linear_predictor(x, beta_);
  const double p = logistic(eta);
  const double resid = y - p;
  if (w > 0.0) {
    ++t_.positive_rows;
    if (y > 0.5) ++t_.positive_cases;
    t_.max_abs_residual = std::max(t_.max_abs_residual, std::abs(resid));
  }
  if (w == 0.0) return;
  t_.loglik += w * (y * eta - log1pexp(eta));
  const double ws = w * resid;
  const double wh = w * logistic_variance(eta);
  const double wo = ws * ws;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    t_.score[i] += ws * xi;
    const double hi = wh * xi;
    for (Eigen::Index j = 0; j <= i; ++j) t_.hessian(i, j) += hi * x[static_cast<std::size_t>(j)];
    if (with_outer_) {
      const double oi = wo * xi;
      for (Eigen::Index j = 0; j <= i; ++j)
        t_.score_outer(i, j) += oi * x[static_cast<std::size_t>(j)];
    }
  }
}

LikelihoodTerms LikelihoodAccumulator::finish() {
  symmetrize_lower(t_.hessian);
  if (with_outer_) symmetrize_lower(t_.score_outer);
  return std::move(t_);
}

LikelihoodTerms evaluate(const WeightedRows& rows, const ParamVector& beta,
                         bool with_score_outer) {
  check_rows(rows, beta);
  LikelihoodAccumulator acc(beta, with_score_outer);
  const auto d = static_cast<std::size_t>(rows.dim());
  for (Eigen::Index i = 0; i < rows.size(); ++i) {
    const double w = rows.w[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("weights must be finite and nonnegative");
    acc.add(std::span<const double>(rows.x.row(i).data(), d), rows.y[i], w);
  }
  return acc.finish();
}

double weighted_loglik(const WeightedRows& rows, const ParamVector& beta) {
  return evaluate(rows, beta).loglik;
}

Vector weighted_score(const WeightedRows& rows, const ParamVector& beta) {
  return evaluate(rows, beta).score;
}

Matrix weighted_hessian(const WeightedRows& rows, const ParamVector& beta) {
  return evaluate(rows, beta).hessian;
}

Matrix weighted_score_outer(const WeightedRows& rows, const ParamVector& beta) {
  return evaluate(rows, beta, true).score_outer;
}

Vector solve_psd(const Matrix& h, const Vector& rhs, bool* ridge_used) {
  if (ridge_used) *ridge_used = false;
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() == Eigen::Success) {
    Vector step = llt.solve(rhs);
    if (step.allFinite()) return step;
  }
  const double trace = h.trace();
  const double ridge = 1e-8 * trace / static_cast<double>(h.rows());
  if (!(ridge > 0.0) || !std::isfinite(ridge)) throw SingularMatrixError("singular Hessian");
  Matrix shifted = h;
  shifted.diagonal().array() += ridge;
  llt.compute(shifted);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("singular Hessian after ridge retry");
  if (ridge_used) *ridge_used = true;
  Vector step = llt.solve(rhs);
  if (!step.allFinite()) throw SingularMatrixError("singular Hessian after ridge retry");
  return step;
}

namespace {

LikelihoodTerms evaluate_feed(const RowFeed& feed, const ParamVector& beta) {
  LikelihoodAccumulator acc(beta);
  feed([&](std::span<const double> x, double y, double w) { acc.add(x, y, w); });
  return acc.finish();
}

}  // namespace

FitReport newton_maximize(const RowFeed& feed, Eigen::Index dim, const ParamVector& init,
                          const NewtonOptions& options) {
  if (init.size() != dim) throw DimensionError("initial value has wrong dimension");
  if (!init.allFinite()) throw InputError("initial value is not finite");

  FitReport report;
  report.beta = init;
  LikelihoodTerms cur = evaluate_feed(feed, report.beta);
  if (cur.positive_rows == 0) throw InputError("empty data");
  if (cur.positive_cases == 0 || cur.positive_cases == cur.positive_rows) {
    throw SeparationError("all responses are " +
                          std::string(cur.positive_cases == 0 ? "0" : "1") +
                          "; the MLE does not exist");
  }

  for (;;) {
    report.final_gradient_norm = cur.score.lpNorm<Eigen::Infinity>();
    if (report.final_gradient_norm <= options.tol) {
      report.converged = true;
      break;
    }
    if (report.iterations >= options.max_iter) break;

    bool ridge = false;
    const Vector step = solve_psd(cur.hessian, cur.score, &ridge);
    report.ridge_used = report.ridge_used || ridge;

    // Below the rounding noise of the log-likelihood the full step is taken.
    const double predicted_gain = 0.5 * cur.score.dot(step);
    const bool below_noise = predicted_gain <= 1e-13 * (1.0 + std::abs(cur.loglik));

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= options.max_halvings; ++halving, t *= 0.5) {
      ParamVector cand = report.beta + t * step;
      LikelihoodTerms next = evaluate_feed(feed, cand);
      if (next.loglik >= cur.loglik || (below_noise && halving == 0 && std::isfinite(next.loglik))) {
        report.beta = std::move(cand);
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    ++report.iterations;
    if (!accepted) {
      report.final_gradient_norm = cur.score.lpNorm<Eigen::Infinity>();
      report.converged = report.final_gradient_norm <= options.tol;
      break;
    }
    if (report.beta.lpNorm<Eigen::Infinity>() > options.separation_bound) {
      throw SeparationError("coefficients diverge; data appear separated");
    }
  }

  // Every positive-weight row on the correct side of 0.5: separated.
  if (cur.max_abs_residual < 0.5) {
    throw SeparationError("fitted model classifies every row correctly; data are separated");
  }
  return report;
}

FitReport newton_maximize(const WeightedRows& rows, const ParamVector& init,
                          const NewtonOptions& options) {
  check_rows(rows, init);
  for (Eigen::Index i = 0; i < rows.size(); ++i) {
    if (!(rows.w[i] >= 0.0) || !std::isfinite(rows.w[i]))
      throw InputError("weights must be finite and nonnegative");
  }
  const auto d = static_cast<std::size_t>(rows.dim());
  RowFeed feed = [&rows, d](const RowSink& sink) {
    for (Eigen::Index i = 0; i < rows.size(); ++i)
      sink(std::span<const double>(rows.x.row(i).data(), d), rows.y[i], rows.w[i]);
  };
  return newton_maximize(feed, rows.dim(), init, options);
}

}  // namespace osmac
