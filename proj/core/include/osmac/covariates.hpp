#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "osmac/ingest.hpp"
#include "osmac/rng.hpp"
#include "osmac/types.hpp"

namespace osmac {

enum class CovariateKind { MzNormal, NzNormal, UeNormal, MixNormal, T3, Exp };

CovariateKind parse_covariate_kind(std::string_view name);  // case-insensitive
std::string_view covariate_kind_name(CovariateKind kind);

/// Sigma_jk = 0.5 off the diagonal, 1 on it.
Matrix design_covariance(std::size_t d);

/// Draws covariate vectors of one of the simulation designs:
///   mzNormal   N(0, S)
///   nzNormal   N(1.5, S)
///   ueNormal   N(0, D S D), D = diag(1, 1/2, ..., 1/d)
///   mixNormal  0.5 N(1, S) + 0.5 N(-1, S)
///   T3         multivariate t, 3 df, scale S / 10
///   EXP        iid exponential with rate 2
/// Normals come from the polar method on SeqRng so streams are portable.
class CovariateGenerator {
 public:
  CovariateGenerator(CovariateKind kind, std::size_t d);

  CovariateKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return d_; }

  void draw(SeqRng& rng, std::span<double> out) const;

  /// Population covariance of the draws (used by tests).
  Matrix covariance() const;
  Vector mean() const;

 private:
  CovariateKind kind_;
  std::size_t d_;
  Matrix chol_;  // lower factor of the base covariance for the kind
};

double standard_normal(SeqRng& rng);

/// N rows of covariates with y ~ Bernoulli(p(x, beta_t)). When add_intercept
/// is set a constant column is prepended and beta_t must include it.
Dataset generate(CovariateKind kind, std::size_t n_rows, const ParamVector& beta_t,
                 std::uint64_t seed, bool add_intercept = false);

}  // namespace osmac
