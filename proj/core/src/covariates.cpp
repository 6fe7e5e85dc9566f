#include "osmac/covariates.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "osmac/errors.hpp"
#include "osmac/model.hpp"

namespace osmac {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

constexpr std::size_t kChunk = 4096;

}  // namespace

CovariateKind parse_covariate_kind(std::string_view name) {
  const std::string s = lower(name);
  if (s == "mznormal") return CovariateKind::MzNormal;
  if (s == "nznormal") return CovariateKind::NzNormal;
  if (s == "uenormal") return CovariateKind::UeNormal;
  if (s == "mixnormal") return CovariateKind::MixNormal;
  if (s == "t3") return CovariateKind::T3;
  if (s == "exp") return CovariateKind::Exp;
  throw InputError("unknown covariate distribution '" + std::string(name) +
                   "' (expected mzNormal, nzNormal, ueNormal, mixNormal, T3 or EXP)");
}

std::string_view covariate_kind_name(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::MzNormal: return "mzNormal";
    case CovariateKind::NzNormal: return "nzNormal";
    case CovariateKind::UeNormal: return "ueNormal";
    case CovariateKind::MixNormal: return "mixNormal";
    case CovariateKind::T3: return "T3";
    case CovariateKind::Exp: return "EXP";
  }
  return "?";
}

Matrix design_covariance(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  Matrix s = Matrix::Constant(n, n, 0.5);
  s.diagonal().setOnes();
  return s;
}

double standard_normal(SeqRng& rng) {
  // Polar method; the second variate is discarded to keep the stream simple.
  for (;;) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

CovariateGenerator::CovariateGenerator(CovariateKind kind, std::size_t d) : kind_(kind), d_(d) {
  if (d == 0) throw InputError("covariate dimension must be at least 1");
  Matrix base = design_covariance(d);
  if (kind == CovariateKind::UeNormal) {
    Vector scale(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < scale.size(); ++j) scale[j] = 1.0 / static_cast<double>(j + 1);
    base = scale.asDiagonal() * base * scale.asDiagonal();
  } else if (kind == CovariateKind::T3) {
    base /= 10.0;
  }
  chol_ = Eigen::LLT<Matrix>(base).matrixL();
}

void CovariateGenerator::draw(SeqRng& rng, std::span<double> out) const {
  if (out.size() != d_) throw DimensionError("covariate buffer has wrong dimension");
  const auto n = static_cast<Eigen::Index>(d_);
  if (kind_ == CovariateKind::Exp) {
    for (double& v : out) v = -std::log(rng.uniform()) / 2.0;
    return;
  }
  Vector z(n);
  for (Eigen::Index j = 0; j < n; ++j) z[j] = standard_normal(rng);
  Eigen::Map<Vector> x(out.data(), n);
  x.noalias() = chol_.triangularView<Eigen::Lower>() * z;
  switch (kind_) {
    case CovariateKind::NzNormal: x.array() += 1.5; break;
    case CovariateKind::MixNormal: x.array() += rng.uniform() <= 0.5 ? 1.0 : -1.0; break;
    case CovariateKind::T3: {
      double chi2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double g = standard_normal(rng);
        chi2 += g * g;
      }
      x *= std::sqrt(3.0 / chi2);
      break;
    }
    default: break;
  }
}

Matrix CovariateGenerator::covariance() const {
  const auto n = static_cast<Eigen::Index>(d_);
  switch (kind_) {
    case CovariateKind::Exp: return Matrix::Identity(n, n) * 0.25;
    case CovariateKind::MixNormal: return chol_ * chol_.transpose() + Matrix::Ones(n, n);
    case CovariateKind::T3: return chol_ * chol_.transpose() * 3.0;  // df / (df - 2)
    default: return chol_ * chol_.transpose();
  }
}

Vector CovariateGenerator::mean() const {
  const auto n = static_cast<Eigen::Index>(d_);
  if (kind_ == CovariateKind::NzNormal) return Vector::Constant(n, 1.5);
  if (kind_ == CovariateKind::Exp) return Vector::Constant(n, 0.5);
  return Vector::Zero(n);
}

Dataset generate(CovariateKind kind, std::size_t n_rows, const ParamVector& beta_t,
                 std::uint64_t seed, bool add_intercept) {
  const std::size_t offset = add_intercept ? 1 : 0;
  if (static_cast<std::size_t>(beta_t.size()) <= offset)
    throw DimensionError("beta_t is too short for the requested design");
  const std::size_t d = static_cast<std::size_t>(beta_t.size());
  const CovariateGenerator gen(kind, d - offset);

  Dataset out;
  out.has_intercept = add_intercept;
  out.x.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(d));
  out.y.resize(static_cast<Eigen::Index>(n_rows));
  // One generator per chunk of rows keeps the stream a function of the row
  // index alone.
  for (std::size_t start = 0; start < n_rows; start += kChunk) {
    SeqRng rng(derive_seed(seed, streams::data, start / kChunk));
    const std::size_t stop = std::min(n_rows, start + kChunk);
    for (std::size_t i = start; i < stop; ++i) {
      double* row = out.x.row(static_cast<Eigen::Index>(i)).data();
      if (add_intercept) row[0] = 1.0;
      gen.draw(rng, std::span<double>(row + offset, d - offset));
      const double p = sigmoid(std::span<const double>(row, d), beta_t);
      out.y[static_cast<Eigen::Index>(i)] = rng.uniform() <= p ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace osmac
