#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "osmac/ingest.hpp"
#include "osmac/model.hpp"
#include "osmac/probabilities.hpp"

namespace osmac {

/// Rows drawn from a DataSource, stored column-wise. Each row carries its
/// sampling probability, an estimation weight, and its row number in the
/// full data.
class Subsample {
 public:
  Subsample() = default;
  explicit Subsample(std::size_t dim) : dim_(dim) {}

  void append(std::span<const double> x, double y, double prob, double weight,
              std::size_t origin);

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return y_.empty(); }

  std::span<const double> x(std::size_t i) const { return {x_.data() + i * dim_, dim_}; }
  double y(std::size_t i) const { return y_[i]; }
  double prob(std::size_t i) const { return prob_[i]; }
  double weight(std::size_t i) const { return weight_[i]; }
  std::size_t origin(std::size_t i) const { return origin_[i]; }

  std::span<const double> probs() const noexcept { return prob_; }
  std::span<const double> weights() const noexcept { return weight_; }
  std::span<const std::size_t> origins() const noexcept { return origin_; }

  void set_weights(std::span<const double> w);
  void set_probs(std::span<const double> p);

  /// Expected (Poisson) or exact (with replacement) target size.
  double nominal_size = 0.0;

  WeightedRows view() const;
  /// Same rows with every weight replaced by `w`.
  WeightedData with_constant_weight(double w) const;

  bool operator==(const Subsample&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> prob_;
  std::vector<double> weight_;
  std::vector<std::size_t> origin_;
};

/// n i.i.d. categorical draws over rows with probability proportional to
/// `probs`, returned sorted ascending with duplicates kept. Inversion of the
/// cumulative sum against sorted uniforms.
std::vector<std::size_t> draw_indexes_with_replacement(std::span<const double> probs,
                                                       std::size_t n, std::uint64_t seed);

/// Single forward pass collecting the rows at `sorted_indexes`. A row listed k
/// times is emitted k times. Reading stops after the last listed row and rows
/// in between are not decoded. prob is set to 0 and weight to 1.
Subsample gather_sorted(DataSource& data, std::span<const std::size_t> sorted_indexes);

/// Poisson sampling in one pass: row i enters with probability
/// min(n * pi_i, 1), pi_i = |y_i - p_i(beta1)| h(x_i) / (N psi_hat1). The
/// uniform for row i is counter-based on (seed, i). Weight is max(n pi_i, 1).
Subsample poisson_scan(DataSource& data, const ParamVector& beta1, double psi_hat1,
                       const HChoice& choice, double n, std::uint64_t seed);

/// Pilot probabilities pi_1i = (c0 (1 - y_i) + c1 y_i) / N.
struct CaseControl {
  double c0 = 1.0;
  double c1 = 1.0;

  /// c0 = 1 / (2 (1 - p)), c1 = 1 / (2 p) for a prior P(y = 1) = p.
  static CaseControl from_prior(double p_pr);
  double pi(double y, std::size_t n_rows) const {
    return (y > 0.5 ? c1 : c0) / static_cast<double>(n_rows);
  }
  bool uniform() const noexcept { return c0 == c1; }
};

enum class SamplingMode { Replacement, Poisson };

/// Draws the pilot subsample. Replacement mode draws n1 rows with
/// replacement from the normalized pi_1 (one partial pass; the class totals
/// are needed when c0 != c1). Poisson mode scans once, keeping row i when
/// u_i <= n1 pi_1i. Rows carry prob = pi_1i and weight 1.
Subsample draw_pilot(DataSource& data, const CaseControl& rule, std::size_t n1,
                     SamplingMode mode, std::uint64_t seed);

}  // namespace osmac
