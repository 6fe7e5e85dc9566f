#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "osmac/types.hpp"

namespace osmac {

/// Non-owning view over n rows of (x, y, weight). x is row-major n x d.
struct WeightedRows {
  Eigen::Map<const RowMatrix> x;
  Eigen::Map<const Vector> y;
  Eigen::Map<const Vector> w;

  Eigen::Index size() const noexcept { return x.rows(); }
  Eigen::Index dim() const noexcept { return x.cols(); }
};

/// Owning counterpart of WeightedRows.
struct WeightedData {
  RowMatrix x;
  Vector y;
  Vector w;

  WeightedRows view() const {
    return {Eigen::Map<const RowMatrix>(x.data(), x.rows(), x.cols()),
            Eigen::Map<const Vector>(y.data(), y.size()),
            Eigen::Map<const Vector>(w.data(), w.size())};
  }
};

/// log(1 + e^z) without overflow.
double log1pexp(double z) noexcept;

/// e^eta / (1 + e^eta), evaluated on the branch that cannot overflow.
double logistic(double eta) noexcept;

/// p(1 - p) at p = logistic(eta), accurate in both tails.
double logistic_variance(double eta) noexcept;

double linear_predictor(std::span<const double> x, const ParamVector& beta);

double sigmoid(std::span<const double> x, const ParamVector& beta);

/// p(1 - p); peaks at 0.25 when x'beta = 0.
double phi(std::span<const double> x, const ParamVector& beta);

double weighted_loglik(const WeightedRows& rows, const ParamVector& beta);

/// Gradient of weighted_loglik: sum w (y - p) x.
Vector weighted_score(const WeightedRows& rows, const ParamVector& beta);

/// sum w phi x x'. This is the negated curvature of the log-likelihood, so it
/// is symmetric positive semi-definite.
Matrix weighted_hessian(const WeightedRows& rows, const ParamVector& beta);

/// sum w^2 (y - p)^2 x x', the meat of the sandwich variance.
Matrix weighted_score_outer(const WeightedRows& rows, const ParamVector& beta);

struct LikelihoodTerms {
  double loglik = 0.0;
  Vector score;
  Matrix hessian;
  Matrix score_outer;  // empty unless requested
  std::size_t positive_rows = 0;
  std::size_t positive_cases = 0;     // y = 1 among positive-weight rows
  double max_abs_residual = 0.0;      // over positive-weight rows
};

/// Row-at-a-time accumulation of the likelihood and its derivatives. Every
/// in-memory and streaming evaluation goes through this class, so the two
/// paths round identically for the same row order.
class LikelihoodAccumulator {
 public:
  LikelihoodAccumulator(const ParamVector& beta, bool with_score_outer = false);

  void add(std::span<const double> x, double y, double w);
  LikelihoodTerms finish();

 private:
  const ParamVector& beta_;
  bool with_outer_;
  LikelihoodTerms t_;
};

LikelihoodTerms evaluate(const WeightedRows& rows, const ParamVector& beta,
                         bool with_score_outer = false);

struct NewtonOptions {
  double tol = 1e-8;           // on the score infinity-norm
  int max_iter = 100;
  int max_halvings = 30;
  double separation_bound = 1e4;
};

struct FitReport {
  ParamVector beta;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  bool ridge_used = false;
};

/// Calls its argument once per row, in a fixed order, with (x, y, weight).
using RowSink = std::function<void(std::span<const double>, double, double)>;
using RowFeed = std::function<void(const RowSink&)>;

/// Newton-Raphson with step halving for the weighted log-likelihood.
/// Throws SeparationError when the MLE does not exist and
/// SingularMatrixError when the Hessian stays singular after a ridge retry.
FitReport newton_maximize(const WeightedRows& rows, const ParamVector& init,
                          const NewtonOptions& options = {});

/// Same iteration over a row feed that may be a pass over a file. Each
/// likelihood evaluation is exactly one call of `feed`.
FitReport newton_maximize(const RowFeed& feed, Eigen::Index dim, const ParamVector& init,
                          const NewtonOptions& options = {});

/// Solves h * step = rhs for a symmetric PSD h, retrying once with a ridge of
/// 1e-8 * trace(h) / d. Sets *ridge_used when the retry was needed.
Vector solve_psd(const Matrix& h, const Vector& rhs, bool* ridge_used = nullptr);

}  // namespace osmac
