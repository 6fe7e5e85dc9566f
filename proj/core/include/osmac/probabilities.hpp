#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "osmac/ingest.hpp"
#include "osmac/model.hpp"
#include "osmac/types.hpp"

namespace osmac {

/// The h(x) factor of the optimal subsampling probabilities.
///   Unit  -> 1 (local case-control shape)
///   Norm  -> ||x||            (mVc)
///   MNorm -> ||M^{-1} x||     (mMSE)
enum class HKind { Unit, Norm, MNorm };

struct HChoice {
  HKind kind = HKind::Unit;
  std::optional<Matrix> m_inverse;  // present iff kind == MNorm

  static HChoice unit() { return {HKind::Unit, std::nullopt}; }
  static HChoice norm() { return {HKind::Norm, std::nullopt}; }
  /// Inverts m after checking it is symmetric positive definite with a
  /// condition number below 1e12.
  static HChoice mnorm(const Matrix& m);
};

HKind parse_hkind(std::string_view name);  // unit | mvc | mmse
std::string_view hkind_name(HKind kind);

double h_value(std::span<const double> x, const HChoice& choice);

/// |y - p(x, beta1)| h(x). Needs nothing beyond the row itself.
double raw_score(std::span<const double> x, double y, const ParamVector& beta1,
                 const HChoice& choice);

struct ProbabilityVector {
  std::vector<double> probs;
  double normalizer = 0.0;  // sum of raw scores
};

/// Normalizes raw scores with a deterministic pairwise sum. Throws
/// DegenerateProbabilitiesError when every score is zero.
ProbabilityVector normalize_scores(std::vector<double> raw);

/// pi^OS(beta1) over the whole source; one pass.
ProbabilityVector compute_pi_os(DataSource& data, const ParamVector& beta1, const HChoice& choice);

/// Weighted average of phi x x'.
Matrix compute_m_matrix(const WeightedRows& sample, const ParamVector& beta);

/// Pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

}  // namespace osmac
