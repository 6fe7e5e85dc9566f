#include "osmac/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "osmac/errors.hpp"
#include "osmac/rng.hpp"

namespace osmac {

void Subsample::append(std::span<const double> x, double y, double prob, double weight,
                       std::size_t origin) {
  if (x.size() != dim_) throw DimensionError("subsample row has wrong dimension");
  x_.insert(x_.end(), x.begin(), x.end());
  y_.push_back(y);
  prob_.push_back(prob);
  weight_.push_back(weight);
  origin_.push_back(origin);
}

void Subsample::set_weights(std::span<const double> w) {
  if (w.size() != size()) throw DimensionError("weight vector has wrong length");
  weight_.assign(w.begin(), w.end());
}

void Subsample::set_probs(std::span<const double> p) {
  if (p.size() != size()) throw DimensionError("probability vector has wrong length");
  prob_.assign(p.begin(), p.end());
}

WeightedRows Subsample::view() const {
  const auto n = static_cast<Eigen::Index>(size());
  return {Eigen::Map<const RowMatrix>(x_.data(), n, static_cast<Eigen::Index>(dim_)),
          Eigen::Map<const Vector>(y_.data(), n), Eigen::Map<const Vector>(weight_.data(), n)};
}

WeightedData Subsample::with_constant_weight(double w) const {
  const auto n = static_cast<Eigen::Index>(size());
  WeightedData out;
  out.x = Eigen::Map<const RowMatrix>(x_.data(), n, static_cast<Eigen::Index>(dim_));
  out.y = Eigen::Map<const Vector>(y_.data(), n);
  out.w = Vector::Constant(n, w);
  return out;
}

std::vector<std::size_t> draw_indexes_with_replacement(std::span<const double> probs,
                                                       std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InputError("subsample size must be at least 1");
  if (probs.empty()) throw InputError("empty probability vector");

  double total = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i]))
      throw InputError("probabilities must be finite and nonnegative");
    total += probs[i];
    if (probs[i] > 0.0) last_positive = i;
  }
  if (!(total > 0.0)) throw DegenerateProbabilitiesError("all probabilities are zero");

  SeqRng rng(seed);
  std::vector<double> targets(n);
  for (double& t : targets) t = rng.uniform() * total;
  std::sort(targets.begin(), targets.end());

  std::vector<std::size_t> out;
  out.reserve(n);
  std::size_t i = 0;
  double cum = probs[0];
  for (double t : targets) {
    while (cum < t && i + 1 < probs.size()) cum += probs[++i];
    // Rounding can leave t just above the final cumulative sum.
    out.push_back(cum >= t ? i : last_positive);
  }
  return out;
}

Subsample gather_sorted(DataSource& data, std::span<const std::size_t> sorted_indexes) {
  Subsample out(data.dim());
  out.nominal_size = static_cast<double>(sorted_indexes.size());
  if (sorted_indexes.empty()) return out;
  std::vector<std::size_t> unique;
  std::vector<std::size_t> multiplicity;
  for (std::size_t k = 0; k < sorted_indexes.size(); ++k) {
    const std::size_t idx = sorted_indexes[k];
    if (idx >= data.rows()) throw InputError("subsample index out of range");
    if (k > 0 && idx < sorted_indexes[k - 1]) throw InputError("subsample indexes are not sorted");
    if (unique.empty() || unique.back() != idx) {
      unique.push_back(idx);
      multiplicity.push_back(1);
    } else {
      ++multiplicity.back();
    }
  }
  std::size_t k = 0;
  data.scan_rows(unique, [&](const Row& row) {
    const auto x = row.covariates();
    const double y = row.label();
    for (std::size_t c = 0; c < multiplicity[k]; ++c) out.append(x, y, 0.0, 1.0, row.index());
    ++k;
    return true;
  });
  return out;
}

Subsample poisson_scan(DataSource& data, const ParamVector& beta1, double psi_hat1,
                       const HChoice& choice, double n, std::uint64_t seed) {
  if (!(psi_hat1 > 0.0) || !std::isfinite(psi_hat1))
    throw EstimationError("pilot normalizer must be positive");
  if (!(n >= 1.0)) throw InputError("subsample size must be at least 1");
  if (static_cast<std::size_t>(beta1.size()) != data.dim())
    throw DimensionError("pilot coefficients do not match the data dimension");
  Subsample out(data.dim());
  out.nominal_size = n;
  const double denom = static_cast<double>(data.rows()) * psi_hat1;
  data.scan([&](const Row& row) {
    const auto x = row.covariates();
    const double y = row.label();
    const double pi = raw_score(x, y, beta1, choice) / denom;
    const double threshold = n * pi;
    if (counter_uniform(seed, row.index()) <= threshold) {
      out.append(x, y, pi, std::max(threshold, 1.0), row.index());
    }
    return true;
  });
  return out;
}

CaseControl CaseControl::from_prior(double p_pr) {
  if (!(p_pr > 0.0 && p_pr < 1.0)) throw InputError("prior probability must lie in (0, 1)");
  return {1.0 / (2.0 * (1.0 - p_pr)), 1.0 / (2.0 * p_pr)};
}

namespace {

Subsample pilot_with_replacement(DataSource& data, const CaseControl& rule, std::size_t n1,
                                 std::uint64_t seed) {
  const std::size_t big_n = data.rows();
  SeqRng rng(seed);
  if (rule.uniform()) {
    std::vector<std::size_t> idx(n1);
    for (auto& i : idx)
      i = std::min(big_n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(big_n)));
    std::sort(idx.begin(), idx.end());
    Subsample s = gather_sorted(data, idx);
    std::vector<double> p(s.size(), 1.0 / static_cast<double>(big_n));
    s.set_probs(p);
    return s;
  }
  // Class of each draw, then a uniform rank inside it; the scan maps ranks back to rows.
  const LabelCounts counts = data.label_counts();
  const double mass0 = rule.c0 * static_cast<double>(counts.zeros);
  const double mass1 = rule.c1 * static_cast<double>(counts.ones);
  std::vector<std::size_t> ranks[2];
  for (std::size_t k = 0; k < n1; ++k) {
    const bool one = rng.uniform() * (mass0 + mass1) > mass0;
    const std::size_t size = one ? counts.ones : counts.zeros;
    const double u = rng.uniform();
    ranks[one].push_back(std::min(size - 1, static_cast<std::size_t>(u * static_cast<double>(size))));
  }
  std::sort(ranks[0].begin(), ranks[0].end());
  std::sort(ranks[1].begin(), ranks[1].end());

  Subsample out(data.dim());
  out.nominal_size = static_cast<double>(n1);
  std::size_t seen[2] = {0, 0};
  std::size_t next[2] = {0, 0};
  if (ranks[0].empty() && ranks[1].empty()) return out;
  data.scan([&](const Row& row) {
    const double y = row.label();
    const int cls = y > 0.5 ? 1 : 0;
    const std::size_t rank = seen[cls]++;
    auto& list = ranks[cls];
    std::size_t& pos = next[cls];
    if (pos < list.size() && list[pos] == rank) {
      const auto x = row.covariates();
      const double pi = rule.pi(y, big_n);
      while (pos < list.size() && list[pos] == rank) {
        out.append(x, y, pi, 1.0, row.index());
        ++pos;
      }
    }
    return next[0] < ranks[0].size() || next[1] < ranks[1].size();
  });
  return out;
}

}  // namespace

Subsample draw_pilot(DataSource& data, const CaseControl& rule, std::size_t n1,
                     SamplingMode mode, std::uint64_t seed) {
  if (!(rule.c0 > 0.0) || !(rule.c1 > 0.0)) throw InputError("c0 and c1 must be positive");
  if (n1 == 0) throw InputError("pilot size must be at least 1");
  if (mode == SamplingMode::Replacement) return pilot_with_replacement(data, rule, n1, seed);

  Subsample out(data.dim());
  out.nominal_size = static_cast<double>(n1);
  const std::size_t big_n = data.rows();
  const double scale = static_cast<double>(n1);
  const bool uniform = rule.uniform();
  data.scan([&](const Row& row) {
    const double u = counter_uniform(seed, row.index());
    if (uniform && u > scale * rule.pi(0.0, big_n)) return true;
    const double y = row.label();
    const double pi = rule.pi(y, big_n);
    if (u <= scale * pi) out.append(row.covariates(), y, pi, 1.0, row.index());
    return true;
  });
  return out;
}

}  // namespace osmac
