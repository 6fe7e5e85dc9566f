#pragma once

#include <cstddef>
#include <cstdint>

#include "osmac/covariates.hpp"
#include "osmac/probabilities.hpp"
#include "osmac/types.hpp"

namespace osmac {

/// Monte-Carlo estimates of the limiting covariance matrices at beta_t.
///   sigma      = [E{phi h x x'} / (4 Phi)]^{-1}
///   v_os       = M^{-1} 4 Phi E{phi x x' / h} M^{-1},  M = E{phi x x'}
///   lambda_rho = E[phi h (Phi - rho phi h)_+ x x'] / (4 Phi^2)
///   lambda_u   = E[phi (rho phi h v Phi) h x x'] / (4 Phi^2)
/// with Phi = E{phi h} estimated from the same draws.
struct AsymptoticMatrices {
  Matrix sigma;
  Matrix v_os;
  Matrix lambda_rho;
  Matrix lambda_u;
  Matrix m;
  double phi_bar = 0.0;
  double rho = 0.0;
  HKind h = HKind::Unit;
  std::size_t mc_samples = 0;
  std::size_t rejected = 0;  // draws with h(x) = 0
};

struct MatrixOptions {
  std::size_t mc = 100000;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// MNorm uses M estimated from the same draws. Throws InputError for
/// mc < 10^4 or rho outside [0, 1), SingularMatrixError for singular means.
AsymptoticMatrices estimate_matrices(CovariateKind generator, const ParamVector& beta_t, HKind h,
                                     double rho, std::uint64_t seed,
                                     const MatrixOptions& options = {});

/// True iff the smallest eigenvalue of b - a is at least -tol. Throws
/// InputError unless both inputs are square, equally sized and symmetric.
bool loewner_leq(const Matrix& a, const Matrix& b, double tol);

/// Smallest eigenvalue of the symmetric matrix m.
double min_eigenvalue(const Matrix& m);

struct OrderingCheck {
  bool holds = false;
  bool equal = false;     // difference within tolerance in spectral norm
  double min_gap = 0.0;   // smallest eigenvalue of (larger - smaller)
  double max_gap = 0.0;   // largest absolute eigenvalue of the difference
};

/// sigma_le_v_os: sigma <= v_os.
/// combined_le_sigma: sigma lambda_rho sigma <= sigma, strictly when rho > 0.
/// sigma_le_uniform: sigma lambda_u sigma >= sigma, together with combined_le_sigma.
struct OrderingReport {
  OrderingCheck sigma_le_v_os;
  OrderingCheck combined_le_sigma;
  OrderingCheck sigma_le_uniform;
  double tol = 0.0;

  bool all_hold() const noexcept { return sigma_le_v_os.holds && combined_le_sigma.holds && sigma_le_uniform.holds; }
};

/// Default tolerance: 5 / sqrt(mc) times the largest entry magnitude of the
/// matrices being compared.
double default_tolerance(const AsymptoticMatrices& m);

/// tol <= 0 selects default_tolerance.
OrderingReport verify_orderings(const AsymptoticMatrices& m, double tol = 0.0);

}  // namespace osmac
