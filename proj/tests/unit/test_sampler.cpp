#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "../support/oracles.hpp"
#include "osmac/covariates.hpp"
#include "osmac/errors.hpp"
#include "osmac/ingest.hpp"
#include "osmac/rng.hpp"
#include "osmac/sampler.hpp"

using namespace osmac;

TEST_CASE("counter uniforms lie in (0, 1] and depend only on (seed, counter)") {
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = counter_uniform(7, i);
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
  CHECK(counter_uniform(7, 123) == counter_uniform(7, 123));
  CHECK(counter_uniform(7, 123) != counter_uniform(8, 123));
  CHECK(to_unit_open0(0) > 0.0);
  CHECK(to_unit_open0(~0ULL) == 1.0);
}

TEST_CASE("categorical draws are sorted, in range and follow the probabilities") {
  const std::vector<double> p{0.1, 0.0, 0.6, 0.3};
  const auto idx = draw_indexes_with_replacement(p, 100000, 42);
  CHECK(idx.size() == 100000);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  std::map<std::size_t, double> freq;
  for (auto i : idx) freq[i] += 1.0 / 100000.0;
  CHECK(freq.count(1) == 0);
  for (std::size_t k : {0u, 2u, 3u}) {
    const double se = std::sqrt(p[k] * (1 - p[k]) / 100000.0);
    CHECK(std::abs(freq[k] - p[k]) <= 4 * se);
  }
  CHECK(draw_indexes_with_replacement(p, 50, 3) == draw_indexes_with_replacement(p, 50, 3));
  CHECK_THROWS_AS(draw_indexes_with_replacement(p, 0, 3), InputError);
  CHECK_THROWS_AS(draw_indexes_with_replacement(std::vector<double>{0.0, 0.0}, 2, 3),
                  DegenerateProbabilitiesError);
}

TEST_CASE("unnormalized probabilities give the same draws as normalized ones up to rounding") {
  const std::vector<double> p{1.0, 3.0};
  const auto idx = draw_indexes_with_replacement(p, 20000, 5);
  const double share = static_cast<double>(std::count(idx.begin(), idx.end(), 1u)) / 20000.0;
  CHECK(std::abs(share - 0.75) <= 4 * std::sqrt(0.75 * 0.25 / 20000.0));
}

TEST_CASE("gather_sorted emits duplicates and matches an in-memory gather") {
  const Dataset d = generate(CovariateKind::MixNormal, 500, ParamVector::Constant(3, 0.5), 4);
  const auto dir = oracle::scratch_dir("gather");
  write_csv(dir / "g.csv", d);
  Schema s;
  s.block_size = 37;
  auto file = open_csv(dir / "g.csv", s);
  MemorySource mem(d);
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::size_t> idx(60);
    for (auto& i : idx) i = rng() % 80;  // small range forces duplicates
    std::sort(idx.begin(), idx.end());
    file->reset_stats();
    const Subsample a = gather_sorted(*file, idx);
    const Subsample b = gather_sorted(mem, idx);
    CHECK(a == b);
    CHECK(a.size() == idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      CHECK(a.origin(k) == idx[k]);
      CHECK(a.x(k)[0] == d.x(static_cast<Eigen::Index>(idx[k]), 0));
    }
    CHECK(file->stats().passes == 1);
    CHECK(file->stats().rows_read <= d.rows());
  }
  const std::vector<std::size_t> unsorted{3, 1};
  CHECK_THROWS_AS(gather_sorted(mem, unsorted), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("case-control constants from a prior") {
  const CaseControl half = CaseControl::from_prior(0.5);
  CHECK(half.c0 == 1.0);
  CHECK(half.c1 == 1.0);
  CHECK(half.uniform());
  const CaseControl rare = CaseControl::from_prior(0.1);
  CHECK(rare.c0 == doctest::Approx(1.0 / 1.8));
  CHECK(rare.c1 == doctest::Approx(5.0));
  CHECK_THROWS_AS(CaseControl::from_prior(1.0), InputError);
}

TEST_CASE("with-replacement case-control pilot draws each class in proportion") {
  ParamVector beta(3);
  beta << -2.0, 0.5, 0.5;
  MemorySource mem(generate(CovariateKind::MzNormal, 20000, beta, 12, true));
  const LabelCounts counts = mem.label_counts();
  const CaseControl rule = CaseControl::from_prior(static_cast<double>(counts.ones) / 20000.0);
  mem.reset_stats();
  const Subsample s = draw_pilot(mem, rule, 4000, SamplingMode::Replacement, 3);
  CHECK(s.size() == 4000);
  CHECK(mem.stats().passes == 1);
  double ones = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) ones += s.y(i);
  CHECK(std::abs(ones / 4000.0 - 0.5) <= 4 * std::sqrt(0.25 / 4000.0));
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.prob(i) == rule.pi(s.y(i), 20000));
}

TEST_CASE("uniform with-replacement pilot is a single gather") {
  MemorySource mem(generate(CovariateKind::MzNormal, 1000, ParamVector::Constant(2, 0.5), 1));
  mem.reset_stats();
  const Subsample s = draw_pilot(mem, CaseControl{}, 100, SamplingMode::Replacement, 9);
  CHECK(s.size() == 100);
  CHECK(mem.stats().passes == 1);
  CHECK(s.prob(0) == 1.0 / 1000.0);
}

TEST_CASE("Poisson scan: one pass, weights max(n pi, 1), size near its expectation") {
  ParamVector beta = ParamVector::Constant(3, 0.5);
  MemorySource mem(generate(CovariateKind::MzNormal, 5000, beta, 2));
  const ProbabilityVector pv = compute_pi_os(mem, beta, HChoice::norm());
  const double psi = pv.normalizer / 5000.0;
  const double n = 400.0;
  double expected = 0.0;
  for (double p : pv.probs) expected += std::min(n * p, 1.0);
  mem.reset_stats();
  const Subsample s = poisson_scan(mem, beta, psi, HChoice::norm(), n, 77);
  CHECK(mem.stats().passes == 1);
  CHECK(std::abs(static_cast<double>(s.size()) - expected) <= 4 * std::sqrt(expected));
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s.prob(i) == doctest::Approx(pv.probs[s.origin(i)]).epsilon(1e-12));
    CHECK(s.weight(i) == std::max(n * s.prob(i), 1.0));
  }
  // Inclusion is exactly u_i <= n pi_i for the counter uniform of row i.
  std::vector<bool> in(5000, false);
  for (std::size_t k = 0; k < s.size(); ++k) in[s.origin(k)] = true;
  for (std::size_t i = 0; i < 5000; ++i)
    CHECK(in[i] == (counter_uniform(77, i) <= n * pv.probs[i]));
  CHECK_THROWS_AS(poisson_scan(mem, beta, 0.0, HChoice::norm(), n, 1), EstimationError);
}

TEST_CASE("single draws follow the probabilities over many replications") {
  const std::vector<double> p{0.05, 0.15, 0.3, 0.0, 0.5};
  const int reps = 10000;
  std::vector<double> freq(p.size(), 0.0);
  for (int r = 0; r < reps; ++r)
    freq[draw_indexes_with_replacement(p, 1, derive_seed(5, streams::stage, static_cast<std::uint64_t>(r)))[0]] += 1.0 / reps;
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(freq[k] - p[k]) <= 4.0 / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("Poisson inclusions in disjoint blocks are uncorrelated") {
  const ParamVector beta = ParamVector::Constant(3, 0.5);
  MemorySource mem(generate(CovariateKind::MzNormal, 4000, beta, 3));
  const ProbabilityVector pv = compute_pi_os(mem, beta, HChoice::norm());
  const double psi = pv.normalizer / 4000.0;
  // Pair row i of the first half with row i + 2000 of the second, pooled over seeds.
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0, cnt = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    std::vector<char> in(4000, 0);
    const Subsample sub = poisson_scan(mem, beta, psi, HChoice::norm(), 800.0, derive_seed(11, streams::stage, s));
    for (std::size_t k = 0; k < sub.size(); ++k) in[sub.origin(k)] = 1;
    CHECK(mem.stats().rows_read > 0);
    for (std::size_t i = 0; i < 2000; ++i) {
      const double a = in[i], b = in[i + 2000];
      sa += a, sb += b, saa += a * a, sbb += b * b, sab += a * b, cnt += 1;
    }
  }
  const double cov = sab / cnt - (sa / cnt) * (sb / cnt);
  const double corr = cov / std::sqrt((saa / cnt - sa * sa / cnt / cnt) * (sbb / cnt - sb * sb / cnt / cnt));
  CHECK(std::abs(corr) <= 0.05);
}

TEST_CASE("Poisson scan reads exactly N rows; identical inputs give identical subsamples") {
  const ParamVector beta = ParamVector::Constant(3, 0.5);
  const Dataset d = generate(CovariateKind::UeNormal, 3000, beta, 4);
  const auto dir = oracle::scratch_dir("poisson");
  write_csv(dir / "d.csv", d);
  auto file = open_csv(dir / "d.csv", Schema{});
  MemorySource mem(d);
  file->reset_stats();
  const Subsample a = poisson_scan(*file, beta, 0.3, HChoice::norm(), 300.0, 8);
  CHECK(file->stats().rows_read == 3000);
  CHECK(file->stats().passes == 1);
  CHECK(a == poisson_scan(mem, beta, 0.3, HChoice::norm(), 300.0, 8));
  CHECK(a == poisson_scan(*file, beta, 0.3, HChoice::norm(), 300.0, 8));
  std::filesystem::remove_all(dir);
}
