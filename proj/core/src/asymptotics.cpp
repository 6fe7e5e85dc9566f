#include "osmac/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "osmac/errors.hpp"
#include "osmac/model.hpp"
#include "osmac/parallel.hpp"
#include "osmac/rng.hpp"

namespace osmac {

namespace {

constexpr std::size_t kChunk = 4096;

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// X' diag(w) X for the rows of one chunk.
Matrix weighted_gram(const RowMatrix& x, const Vector& w) {
  return x.transpose() * (w.asDiagonal() * x);
}

Matrix spd_inverse(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw SingularMatrixError(std::string(what) + " is singular");
  const auto n = m.rows();
  Matrix inv = llt.solve(Matrix::Identity(n, n));
  if (!inv.allFinite()) throw SingularMatrixError(std::string(what) + " is singular");
  return sym(inv);
}

template <class Fn>
Matrix reduce_chunks(std::size_t chunks, Eigen::Index d, unsigned threads, Fn&& chunk_sum) {
  std::vector<Matrix> part(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) { part[c] = chunk_sum(c); });
  Matrix total = Matrix::Zero(d, d);
  for (const Matrix& p : part) total += p;
  return total;
}

}  // namespace

AsymptoticMatrices estimate_matrices(CovariateKind generator, const ParamVector& beta_t, HKind h,
                                     double rho, std::uint64_t seed,
                                     const MatrixOptions& options) {
  if (options.mc < 10000) throw InputError("Monte-Carlo size must be at least 10^4");
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("sampling rate rho must lie in [0, 1)");
  const std::size_t d = static_cast<std::size_t>(beta_t.size());
  const auto di = static_cast<Eigen::Index>(d);
  const CovariateGenerator gen(generator, d);
  const std::size_t mc = options.mc;
  const std::size_t chunks = (mc + kChunk - 1) / kChunk;
  auto chunk_rows = [&](std::size_t c) { return std::min(kChunk, mc - c * kChunk); };

  // Draws and phi, stored per chunk so later passes reuse them.
  std::vector<RowMatrix> xs(chunks);
  std::vector<Vector> phis(chunks);
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    SeqRng rng(derive_seed(seed, streams::monte_carlo, c));
    const auto rows = static_cast<Eigen::Index>(chunk_rows(c));
    RowMatrix& x = xs[c];
    x.resize(rows, di);
    Vector& ph = phis[c];
    ph.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      gen.draw(rng, std::span<double>(x.row(i).data(), d));
      ph[i] = phi(std::span<const double>(x.row(i).data(), d), beta_t);
    }
  });

  AsymptoticMatrices out;
  out.rho = rho;
  out.h = h;
  out.m = sym(reduce_chunks(chunks, di, options.threads,
                            [&](std::size_t c) { return weighted_gram(xs[c], phis[c]); }) /
              static_cast<double>(mc));

  HChoice choice = HChoice::unit();
  if (h == HKind::Norm) choice = HChoice::norm();
  if (h == HKind::MNorm) choice = HChoice::mnorm(out.m);

  std::vector<Vector> hs(chunks);
  std::vector<std::size_t> zero_h(chunks, 0);
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    const auto rows = xs[c].rows();
    hs[c].resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      hs[c][i] = h_value(std::span<const double>(xs[c].row(i).data(), d), choice);
      if (!(hs[c][i] > 0.0)) ++zero_h[c];
    }
  });
  // Rejected draws (h = 0) drop out of every average.
  for (std::size_t z : zero_h) out.rejected += z;
  const std::size_t kept = mc - out.rejected;
  if (kept == 0) throw DegenerateProbabilitiesError("h(x) vanished on every draw");
  const double inv_kept = 1.0 / static_cast<double>(kept);
  auto keep_mask = [&](std::size_t c) {
    return (hs[c].array() > 0.0).cast<double>().matrix().eval();
  };

  double phi_h_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) phi_h_sum += phis[c].dot(hs[c]);
  const double big_phi = phi_h_sum * inv_kept;
  out.phi_bar = big_phi;
  out.mc_samples = kept;

  const Matrix a = reduce_chunks(chunks, di, options.threads, [&](std::size_t c) {
                     return weighted_gram(xs[c], (phis[c].array() * hs[c].array()).matrix());
                   }) * inv_kept;
  const Matrix m_kept = reduce_chunks(chunks, di, options.threads, [&](std::size_t c) {
                          return weighted_gram(xs[c], (phis[c].array() * keep_mask(c).array()).matrix());
                        }) * inv_kept;
  const Matrix b = reduce_chunks(chunks, di, options.threads, [&](std::size_t c) {
                     const Vector w = (hs[c].array() > 0.0)
                                          .select(phis[c].array() / hs[c].array(), 0.0)
                                          .matrix();
                     return weighted_gram(xs[c], w);
                   }) * inv_kept;

  out.sigma = spd_inverse(sym(a) / (4.0 * big_phi), "E{phi h x x'}");
  const Matrix m_inv = spd_inverse(sym(m_kept), "E{phi x x'}");
  out.v_os = sym(m_inv * (4.0 * big_phi * sym(b)) * m_inv);

  const double denom = 4.0 * big_phi * big_phi;
  out.lambda_rho = sym(reduce_chunks(chunks, di, options.threads, [&](std::size_t c) {
                         const Vector w =
                             (phis[c].array() * hs[c].array() *
                              (big_phi - rho * phis[c].array() * hs[c].array()).max(0.0))
                                 .matrix();
                         return weighted_gram(xs[c], w);
                       }) * inv_kept / denom);
  out.lambda_u = sym(reduce_chunks(chunks, di, options.threads, [&](std::size_t c) {
                       const Vector w = (phis[c].array() * hs[c].array() *
                                         (rho * phis[c].array() * hs[c].array()).max(big_phi) *
                                         keep_mask(c).array())
                                            .matrix();
                       return weighted_gram(xs[c], w);
                     }) * inv_kept / denom);
  return out;
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw InputError("Loewner comparison needs square matrices of equal size");
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale ||
      (b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError("Loewner comparison needs symmetric matrices");
  return min_eigenvalue(sym(b - a)) >= -tol;
}

double default_tolerance(const AsymptoticMatrices& m) {
  const Matrix lr = m.sigma * m.lambda_rho * m.sigma;
  const Matrix lu = m.sigma * m.lambda_u * m.sigma;
  const double scale = std::max({m.sigma.cwiseAbs().maxCoeff(), m.v_os.cwiseAbs().maxCoeff(),
                                 lr.cwiseAbs().maxCoeff(), lu.cwiseAbs().maxCoeff()});
  return 5.0 / std::sqrt(static_cast<double>(m.mc_samples)) * scale;
}

namespace {

OrderingCheck compare(const Matrix& smaller, const Matrix& larger, double tol) {
  const Matrix diff = sym(larger - smaller);
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  OrderingCheck c;
  c.min_gap = es.eigenvalues()[0];
  c.max_gap = es.eigenvalues().cwiseAbs().maxCoeff();
  c.holds = c.min_gap >= -tol;
  c.equal = c.max_gap <= tol;
  return c;
}

}  // namespace

OrderingReport verify_orderings(const AsymptoticMatrices& m, double tol) {
  OrderingReport r;
  r.tol = tol > 0.0 ? tol : default_tolerance(m);
  const Matrix lr = sym(m.sigma * m.lambda_rho * m.sigma);
  const Matrix lu = sym(m.sigma * m.lambda_u * m.sigma);

  r.sigma_le_v_os = compare(m.sigma, m.v_os, r.tol);
  r.combined_le_sigma = compare(lr, m.sigma, r.tol);
  // A positive rate must separate the two matrices, not merely order them.
  const double strict = 1e-10 * std::max(1.0, m.sigma.cwiseAbs().maxCoeff());
  if (m.rho > 0.0) r.combined_le_sigma.holds = r.combined_le_sigma.holds && r.combined_le_sigma.min_gap > strict;
  r.sigma_le_uniform = compare(m.sigma, lu, r.tol);
  r.sigma_le_uniform.holds = r.sigma_le_uniform.holds && r.combined_le_sigma.holds;
  return r;
}

}  // namespace osmac
