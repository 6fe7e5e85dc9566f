#include "osmac/probabilities.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "osmac/errors.hpp"

namespace osmac {

HChoice HChoice::mnorm(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionError("M must be square");
  if (!m.allFinite()) throw SingularMatrixError("M has non-finite entries");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw SingularMatrixError("M is singular or ill-conditioned; cannot form the mMSE h-function");
  }
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("M is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return {HKind::MNorm, std::move(inv)};
}

HKind parse_hkind(std::string_view name) {
  if (name == "unit") return HKind::Unit;
  if (name == "mvc" || name == "norm") return HKind::Norm;
  if (name == "mmse" || name == "mnorm") return HKind::MNorm;
  throw InputError("unknown h choice '" + std::string(name) + "' (expected unit, mvc or mmse)");
}

std::string_view hkind_name(HKind kind) {
  switch (kind) {
    case HKind::Unit: return "unit";
    case HKind::Norm: return "mvc";
    case HKind::MNorm: return "mmse";
  }
  return "?";
}

double h_value(std::span<const double> x, const HChoice& choice) {
  switch (choice.kind) {
    case HKind::Unit:
      return 1.0;
    case HKind::Norm: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return std::sqrt(s);
    }
    case HKind::MNorm: {
      if (!choice.m_inverse) throw InputError("MNorm choice without M^{-1}");
      const Matrix& mi = *choice.m_inverse;
      if (static_cast<std::size_t>(mi.cols()) != x.size())
        throw DimensionError("M^{-1} does not match the covariate dimension");
      const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
      return (mi * xv).norm();
    }
  }
  return 0.0;
}

double raw_score(std::span<const double> x, double y, const ParamVector& beta1,
                 const HChoice& choice) {
  return std::abs(y - sigmoid(x, beta1)) * h_value(x, choice);
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

ProbabilityVector normalize_scores(std::vector<double> raw) {
  ProbabilityVector out;
  out.normalizer = pairwise_sum(raw);
  if (!(out.normalizer > 0.0) || !std::isfinite(out.normalizer)) {
    throw DegenerateProbabilitiesError(
        "all subsampling scores are zero; the pilot separates the data");
  }
  for (double& v : raw) v /= out.normalizer;
  out.probs = std::move(raw);
  return out;
}

ProbabilityVector compute_pi_os(DataSource& data, const ParamVector& beta1, const HChoice& choice) {
  if (static_cast<std::size_t>(beta1.size()) != data.dim())
    throw DimensionError("pilot coefficients do not match the data dimension");
  std::vector<double> raw(data.rows());
  data.scan([&](const Row& row) {
    raw[row.index()] = raw_score(row.covariates(), row.label(), beta1, choice);
    return true;
  });
  return normalize_scores(std::move(raw));
}

Matrix compute_m_matrix(const WeightedRows& sample, const ParamVector& beta) {
  const Matrix h = weighted_hessian(sample, beta);
  const double total = sample.w.sum();
  if (!(total > 0.0)) throw InputError("weights sum to zero");
  return h / total;
}

}  // namespace osmac
