#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "osmac/covariates.hpp"
#include "osmac/errors.hpp"
#include "osmac/ingest.hpp"
#include "osmac/probabilities.hpp"

using namespace osmac;

namespace {

Dataset small_data(std::uint64_t seed, std::size_t n = 500) {
  ParamVector beta(4);
  beta << -0.5, 0.5, 0.5, 0.5;
  return generate(CovariateKind::MzNormal, n, beta, seed, true);
}

}  // namespace

TEST_CASE("parse_hkind accepts the documented names") {
  CHECK(parse_hkind("unit") == HKind::Unit);
  CHECK(parse_hkind("mvc") == HKind::Norm);
  CHECK(parse_hkind("mmse") == HKind::MNorm);
  CHECK_THROWS_AS(parse_hkind("lcc"), InputError);
  CHECK(hkind_name(HKind::MNorm) == "mmse");
}

TEST_CASE("h values") {
  const std::vector<double> x{3.0, 4.0};
  CHECK(h_value(x, HChoice::unit()) == 1.0);
  CHECK(h_value(x, HChoice::norm()) == 5.0);
  Matrix m(2, 2);
  m << 2, 0, 0, 0.5;
  // ||M^{-1} x|| = ||(1.5, 8)||
  CHECK(h_value(x, HChoice::mnorm(m)) == doctest::Approx(std::hypot(1.5, 8.0)).epsilon(1e-14));
}

TEST_CASE("mnorm refuses ill-conditioned or indefinite M") {
  Matrix m(2, 2);
  m << 1, 0, 0, 1e-14;
  CHECK_THROWS_AS(HChoice::mnorm(m), SingularMatrixError);
  m << 1, 2, 2, 1;
  CHECK_THROWS_AS(HChoice::mnorm(m), SingularMatrixError);
}

TEST_CASE("pi^OS sums to one and follows |y - p| under the unit choice") {
  MemorySource src(small_data(1));
  ParamVector b1(4);
  b1 << -0.3, 0.4, 0.6, 0.2;
  const ProbabilityVector pv = compute_pi_os(src, b1, HChoice::unit());
  const double total = std::accumulate(pv.probs.begin(), pv.probs.end(), 0.0);
  CHECK(std::abs(total - 1.0) <= 1e-12);

  const Dataset& d = src.data();
  double raw_total = 0.0;
  std::vector<double> raw(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const Vector x = d.x.row(static_cast<Eigen::Index>(i)).transpose();
    raw[i] = std::abs(d.y[static_cast<Eigen::Index>(i)] - oracle::sigmoid_hp(x.dot(b1)));
    raw_total += raw[i];
  }
  for (std::size_t i = 0; i < d.rows(); ++i) CHECK(pv.probs[i] == doctest::Approx(raw[i] / raw_total).epsilon(1e-12));
}

TEST_CASE("pi^OS with the norm choice is proportional to |y - p| ||x||") {
  MemorySource src(small_data(2, 200));
  ParamVector b1 = ParamVector::Constant(4, 0.3);
  const ProbabilityVector pv = compute_pi_os(src, b1, HChoice::norm());
  const Dataset& d = src.data();
  const auto ratio = [&](std::size_t i) {
    const Vector x = d.x.row(static_cast<Eigen::Index>(i)).transpose();
    return pv.probs[i] / (std::abs(d.y[static_cast<Eigen::Index>(i)] - oracle::sigmoid_hp(x.dot(b1))) * x.norm());
  };
  const double r0 = ratio(0);
  for (std::size_t i = 1; i < d.rows(); ++i) CHECK(ratio(i) == doctest::Approx(r0).epsilon(1e-12));
}

TEST_CASE("streaming and in-memory pi^OS are bit-identical") {
  const Dataset data = small_data(3, 3000);
  const auto dir = oracle::scratch_dir("pi");
  write_csv(dir / "d.csv", data);
  Schema schema;
  schema.add_intercept = true;
  schema.block_size = 128;
  auto file = open_csv(dir / "d.csv", schema);
  MemorySource mem(data);
  ParamVector b1 = ParamVector::Constant(4, 0.2);
  for (const HChoice& c : {HChoice::unit(), HChoice::norm()}) {
    const ProbabilityVector a = compute_pi_os(mem, b1, c);
    const ProbabilityVector b = compute_pi_os(*file, b1, c);
    CHECK(a.probs == b.probs);
    CHECK(a.normalizer == b.normalizer);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("all-zero scores are degenerate") {
  CHECK_THROWS_AS(normalize_scores({0.0, 0.0}), DegenerateProbabilitiesError);
}

TEST_CASE("pairwise_sum is exact on integers and order-dependent only") {
  std::vector<double> v(1001);
  std::iota(v.begin(), v.end(), 0.0);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum({}) == 0.0);
}

TEST_CASE("compute_m_matrix is the weighted mean of phi x x'") {
  const auto inst = oracle::random_instance(4, 50, 3);
  const Matrix m = compute_m_matrix(inst.data.view(), inst.beta);
  const Matrix h = weighted_hessian(inst.data.view(), inst.beta);
  CHECK(oracle::rel_err(m, h / inst.data.w.sum()) <= 1e-14);
}

TEST_CASE("scaling raw scores leaves the probabilities unchanged") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<double> raw(5000);
  for (auto& r : raw) r = u(rng);
  const ProbabilityVector base = normalize_scores(raw);
  for (double c : {0.25, 2.0, 1024.0}) {
    std::vector<double> scaled = raw;
    for (auto& r : scaled) r *= c;
    CHECK(normalize_scores(scaled).probs == base.probs);
  }
  for (double c : {0.3, 7.1, 1e5}) {
    std::vector<double> scaled = raw;
    for (auto& r : scaled) r *= c;
    const ProbabilityVector p = normalize_scores(scaled);
    double worst = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) worst = std::max(worst, std::abs(p.probs[i] - base.probs[i]));
    CHECK(worst <= 1e-15);
  }
}

TEST_CASE("row-by-row raw scores normalized equal compute_pi_os") {
  const Dataset data = small_data(8, 4000);
  MemorySource src(data);
  const ParamVector b1 = ParamVector::Constant(4, 0.1);
  Matrix m = Matrix::Identity(4, 4);
  m(1, 0) = m(0, 1) = 0.3;
  for (const HChoice& c : {HChoice::unit(), HChoice::norm(), HChoice::mnorm(m)}) {
    std::vector<double> raw;
    for (std::size_t i = 0; i < data.rows(); ++i)
      raw.push_back(raw_score(std::span<const double>(data.x.row(static_cast<Eigen::Index>(i)).data(), 4),
                              data.y[static_cast<Eigen::Index>(i)], b1, c));
    const ProbabilityVector a = normalize_scores(raw);
    const ProbabilityVector b = compute_pi_os(src, b1, c);
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(std::abs(a.probs[i] - b.probs[i]) <= 1e-15);
  }
}
