#include <doctest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "../support/oracles.hpp"
#include "osmac/errors.hpp"
#include "osmac/model.hpp"

using namespace osmac;

TEST_CASE("logistic agrees with a 50-digit reference across the real line") {
  for (double eta : {-800.0, -745.0, -40.0, -20.0, -1.0, -1e-8, 0.0, 1e-8, 0.5, 3.0, 36.0, 40.0, 800.0}) {
    const double ref = oracle::sigmoid_hp(eta);
    const double got = logistic(eta);
    CHECK(std::isfinite(got));
    // Subnormal results carry absolute, not relative, accuracy.
    const double slack = 2 * std::numeric_limits<double>::denorm_min();
    CHECK(std::abs(got - ref) <= 4 * std::numeric_limits<double>::epsilon() * ref + slack);
  }
  CHECK(logistic(0.0) == 0.5);
}

TEST_CASE("log1pexp is overflow-free and accurate") {
  for (double z : {-700.0, -30.0, -1.0, 0.0, 1.0, 30.0, 700.0, 1e5}) {
    const double got = log1pexp(z);
    CHECK(std::isfinite(got));
    if (z < 1000.0) {
      const double ref = oracle::log1pexp_hp(z);
      CHECK(std::abs(got - ref) <= 4 * std::numeric_limits<double>::epsilon() * ref);
    } else {
      CHECK(got == doctest::Approx(z));
    }
  }
}

TEST_CASE("phi peaks at a quarter when the linear predictor vanishes") {
  const std::vector<double> x{1.0, -2.0};
  ParamVector beta(2);
  beta << 2.0, 1.0;
  CHECK(phi(x, beta) == 0.25);
  beta << 40.0, 0.0;
  CHECK(phi(x, beta) == doctest::Approx(oracle::sigmoid_hp(40.0) * oracle::sigmoid_hp(-40.0)).epsilon(1e-14));
  CHECK(logistic_variance(-700.0) > 0.0);
}

TEST_CASE("linear_predictor rejects dimension mismatch") {
  const std::vector<double> x{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(linear_predictor(x, ParamVector::Zero(2)), DimensionError);
}

TEST_CASE("score and Hessian match finite differences on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = oracle::random_instance(seed, 60, 4);
    const auto v = inst.data.view();
    const Vector g = weighted_score(v, inst.beta);
    const Matrix h = weighted_hessian(v, inst.beta);
    CHECK(oracle::rel_err(g, oracle::fd_gradient(inst.data, inst.beta)) <= 1e-5);
    CHECK(oracle::rel_err(h, oracle::fd_neg_hessian(inst.data, inst.beta)) <= 1e-4);
    CHECK(weighted_loglik(v, inst.beta) ==
          doctest::Approx(static_cast<double>(oracle::naive_loglik(inst.data, inst.beta))).epsilon(1e-12));
  }
}

TEST_CASE("Hessian is symmetric positive semi-definite") {
  const auto inst = oracle::random_instance(7, 40, 5);
  const Matrix h = weighted_hessian(inst.data.view(), inst.beta);
  CHECK(h.isApprox(h.transpose(), 0.0));
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("score outer product equals sum of w^2 (y-p)^2 x x'") {
  const auto inst = oracle::random_instance(3, 30, 3);
  const Matrix s = weighted_score_outer(inst.data.view(), inst.beta);
  Matrix ref = Matrix::Zero(3, 3);
  for (Eigen::Index i = 0; i < inst.data.x.rows(); ++i) {
    const Vector x = inst.data.x.row(i).transpose();
    const double p = oracle::sigmoid_hp(x.dot(inst.beta));
    const double r = inst.data.w[i] * (inst.data.y[i] - p);
    ref += r * r * x * x.transpose();
  }
  CHECK(oracle::rel_err(s, ref) <= 1e-12);
}

TEST_CASE("zero-weight rows do not contribute") {
  auto inst = oracle::random_instance(11, 30, 3);
  const LikelihoodTerms before = evaluate(inst.data.view(), inst.beta, true);
  // Append a wild row with weight zero.
  WeightedData more = inst.data;
  more.x.conservativeResize(31, 3);
  more.y.conservativeResize(31);
  more.w.conservativeResize(31);
  more.x.row(30) << 1.0, 1e6, -1e6;
  more.y[30] = 1.0;
  more.w[30] = 0.0;
  const LikelihoodTerms after = evaluate(more.view(), inst.beta, true);
  CHECK(after.loglik == before.loglik);
  CHECK(after.score == before.score);
  CHECK(after.hessian == before.hessian);
}

TEST_CASE("Newton agrees with an independent BFGS optimizer") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto inst = oracle::random_instance(seed, 300, 4);
    const FitReport fit = newton_maximize(inst.data.view(), ParamVector::Zero(4));
    CHECK(fit.converged);
    CHECK(fit.final_gradient_norm <= 1e-8);
    const Vector ref = oracle::gsl_mle(inst.data);
    CHECK((fit.beta - ref).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("Newton reports separation") {
  WeightedData s;
  s.x.resize(6, 2);
  s.x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  s.y.resize(6);
  s.y << 0, 0, 0, 1, 1, 1;
  s.w = Vector::Ones(6);
  CHECK_THROWS_AS(newton_maximize(s.view(), ParamVector::Zero(2)), SeparationError);
}

TEST_CASE("Newton refuses single-class data") {
  auto inst = oracle::random_instance(5, 20, 2);
  inst.data.y.setOnes();
  CHECK_THROWS_AS(newton_maximize(inst.data.view(), ParamVector::Zero(2)), SeparationError);
}

TEST_CASE("Newton survives a singular design through the ridge retry") {
  // Duplicate column makes the Hessian singular along (1, -1).
  auto inst = oracle::random_instance(9, 100, 3, true);
  inst.data.x.col(2) = inst.data.x.col(1);
  const FitReport fit = newton_maximize(inst.data.view(), ParamVector::Zero(3));
  CHECK(fit.ridge_used);
  CHECK(weighted_score(inst.data.view(), fit.beta).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("streaming Newton is bit-identical to the in-memory one") {
  const auto inst = oracle::random_instance(21, 200, 4);
  const auto v = inst.data.view();
  RowFeed feed = [&](const RowSink& sink) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      sink(std::span<const double>(v.x.row(i).data(), 4), v.y[i], v.w[i]);
  };
  const FitReport a = newton_maximize(v, ParamVector::Zero(4));
  const FitReport b = newton_maximize(feed, 4, ParamVector::Zero(4));
  CHECK(a.beta == b.beta);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("solve_psd solves SPD systems and flags the ridge") {
  Matrix a(2, 2);
  a << 4, 1, 1, 3;
  Vector b(2);
  b << 1, 2;
  bool ridge = true;
  const Vector x = solve_psd(a, b, &ridge);
  CHECK_FALSE(ridge);
  CHECK((a * x - b).norm() <= 1e-14);
}

TEST_CASE("accepted Newton steps never lower the log-likelihood") {
  for (std::uint64_t seed = 300; seed < 305; ++seed) {
    const auto inst = oracle::random_instance(seed, 150, 4);
    ParamVector init = ParamVector::Constant(4, 3.0);  // far start forces step halving
    double prev = weighted_loglik(inst.data.view(), init);
    for (int k = 1; k <= 12; ++k) {
      NewtonOptions o;
      o.max_iter = k;
      const FitReport fit = newton_maximize(inst.data.view(), init, o);
      const double ll = weighted_loglik(inst.data.view(), fit.beta);
      CHECK(ll >= prev - 1e-12 * std::abs(prev));
      prev = ll;
    }
  }
}

TEST_CASE("MLE is scale-equivariant in each non-intercept column") {
  for (std::uint64_t seed = 400; seed < 405; ++seed) {
    auto inst = oracle::random_instance(seed, 300, 4, true);
    const FitReport base = newton_maximize(inst.data.view(), ParamVector::Zero(4));
    for (Eigen::Index j = 1; j < 4; ++j) {
      for (double c : {0.01, 3.7, 250.0}) {
        WeightedData scaled = inst.data;
        scaled.x.col(j) *= c;
        const FitReport fit = newton_maximize(scaled.view(), ParamVector::Zero(4));
        ParamVector expected = base.beta;
        expected[j] /= c;
        CHECK((fit.beta - expected).lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, expected.lpNorm<Eigen::Infinity>()));
      }
    }
  }
}
