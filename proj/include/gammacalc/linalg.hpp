#pragma once

// Dense helpers shared by the per-point solves: rank decisions, minimum-norm
// least squares, symmetric pencils restricted off a null space, and a
// shift-invert Lanczos for the smallest eigenpairs of large sparse
// symmetric operators.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "gammacalc/util.hpp"

namespace gammacalc {

// Threshold under which singular/eigen values count as zero.
inline double rank_cutoff(double largest) {
  return tol::rank_rel * std::max(largest, tol::rank_floor);
}

inline int rank_of(const Mat& a) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  double cut = rank_cutoff(s.size() ? s(0) : 0.0);
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

// Minimum-norm least-squares solve via SVD with the central rank threshold.
inline Mat pinv_solve(const Mat& a, const Mat& b) {
  if (a.rows() == 0 || a.cols() == 0) return Mat::Zero(a.cols(), b.cols());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  double cut = rank_cutoff(s.size() ? s(0) : 0.0);
  Mat ub = svd.matrixU().transpose() * b;
  for (int i = 0; i < s.size(); ++i)
    ub.row(i) *= (s(i) > cut) ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * ub;
}

inline Mat pseudo_inverse(const Mat& a) {
  return pinv_solve(a, Mat::Identity(a.rows(), a.rows()));
}

// Spectral decomposition kept above the rank threshold: returns the columns
// u_j / sqrt(lambda_j) of a PSD matrix, so frame^T * a * frame = identity.
// Small negative eigenvalues from roundoff are treated as zero.
inline Mat psd_orthonormal_frame(const Mat& a, int* rank_out = nullptr) {
  if (a.rows() == 0) {
    if (rank_out) *rank_out = 0;
    return Mat(0, 0);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  const Vec& ev = es.eigenvalues();
  double cut = rank_cutoff(ev.size() ? std::abs(ev(ev.size() - 1)) : 0.0);
  int r = 0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > cut) ++r;
  Mat frame(a.rows(), r);
  int c = 0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > cut) frame.col(c++) = es.eigenvectors().col(i) / std::sqrt(ev(i));
  if (rank_out) *rank_out = r;
  return frame;
}

// Smallest eigenvalue of the pencil (a, b) over directions where b is
// positive; a symmetric, b PSD. Null directions of b cost nothing in the
// denominator but still shift a, so they are minimized out first through the
// Schur complement of a on null(b); plain projection onto range(b) would
// overestimate the minimum. Returns +inf when b has rank zero and -inf when
// a is genuinely indefinite on null(b), where no finite bound exists.
inline double pencil_min_eigenvalue(const Mat& a, const Mat& b) {
  Eigen::SelfAdjointEigenSolver<Mat> eb(0.5 * (b + b.transpose()));
  const Vec& ev = eb.eigenvalues();
  const int n = static_cast<int>(ev.size());
  if (n == 0) return std::numeric_limits<double>::infinity();
  double bmax = std::max(ev(n - 1), 0.0);
  double bcut = std::max(tol::rank_rel * bmax, tol::rank_floor);
  int rank = 0;
  for (int k = 0; k < n; ++k)
    if (ev(k) > bcut) ++rank;
  if (rank == 0) return std::numeric_limits<double>::infinity();
  const int n0 = n - rank;
  Mat v1(n, rank), v0(n, n0);
  Vec lam1(rank);
  for (int k = 0, c1 = 0, c0 = 0; k < n; ++k) {
    if (ev(k) > bcut) {
      lam1(c1) = ev(k);
      v1.col(c1++) = eb.eigenvectors().col(k);
    } else {
      v0.col(c0++) = eb.eigenvectors().col(k);
    }
  }
  Mat sym = 0.5 * (a + a.transpose());
  Mat a11 = v1.transpose() * sym * v1;
  if (n0 > 0) {
    Mat a10 = v1.transpose() * sym * v0;
    Mat a00 = v0.transpose() * sym * v0;
    Eigen::SelfAdjointEigenSolver<Mat> e0(0.5 * (a00 + a00.transpose()));
    const Vec& w = e0.eigenvalues();
    double ascale = std::max(std::abs(w(0)), std::abs(w(n0 - 1)));
    double acut = std::max(tol::rank_rel * ascale, tol::rank_floor);
    if (w(0) < -acut) return -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n0; ++k)
      if (w(k) > acut) {
        Vec col = a10 * e0.eigenvectors().col(k);
        a11 -= (col * col.transpose()) / w(k);
      }
  }
  Vec scale = lam1.cwiseSqrt().cwiseInverse();
  Mat m = scale.asDiagonal() * a11 * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  return es.eigenvalues()(0);
}

// Smallest `want` eigenpairs of a sparse symmetric PSD matrix, via
// shift-invert Lanczos with full reorthogonalization. Falls back to a dense
// solve below `dense_cap`. Start vector comes from the given seed, so the
// result is deterministic.
struct EigenPairs {
  Vec values;
  Mat vectors;
  bool converged = true;
};

// Operator norm of a symmetric sparse matrix by power iteration with a
// fixed-seed start, so callers stay deterministic.
inline double sym_opnorm_estimate(const SpMat& s, std::uint64_t seed = 17) {
  const int n = static_cast<int>(s.rows());
  if (n == 0 || s.nonZeros() == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = gauss(rng);
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < 40; ++it) {
    Vec w = s * v;
    lam = w.norm();
    if (lam == 0.0) return 0.0;
    v = w / lam;
  }
  return lam;
}

inline EigenPairs smallest_eigenpairs(const SpMat& s, int want,
                                      std::uint64_t seed = 1,
                                      int dense_cap = 3072) {
  const int n = static_cast<int>(s.rows());
  want = std::min(want, n);
  EigenPairs out;
  if (n <= dense_cap) {
    Eigen::SelfAdjointEigenSolver<Mat> es{Mat(s)};
    out.values = es.eigenvalues().head(want);
    out.vectors = es.eigenvectors().leftCols(want);
    return out;
  }
  // Shift slightly below zero so (s - sigma I) stays definite for PSD s.
  // The shift must be tiny relative to the low end of the spectrum, not the
  // entry scale, or the inverted spectrum flattens and Lanczos stalls; the
  // operator norm times a small factor keeps sigma far below the first
  // nonzero eigenvalue of the graph operators used here.
  double scale = sym_opnorm_estimate(s);
  if (scale == 0.0) {
    out.values = Vec::Zero(want);
    out.vectors = Mat::Identity(n, want);
    return out;
  }
  double sigma = -1e-8 * scale;
  SpMat shifted = s;
  SpMat ident(n, n);
  ident.setIdentity();
  shifted -= sigma * ident;
  Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
  if (ldlt.info() != Eigen::Success)
    throw computation_error("eigen solve: shift-invert factorization failed");

  const int m = std::min(n, std::max(6 * want + 20, 60));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = gauss(rng);
  v.normalize();

  Mat basis(n, m);
  Vec alpha(m), beta(m);
  Vec prev = Vec::Zero(n);
  double beta_prev = 0.0;
  int built = 0;
  for (int j = 0; j < m; ++j) {
    basis.col(j) = v;
    ++built;
    Vec w = ldlt.solve(v);
    alpha(j) = v.dot(w);
    w -= alpha(j) * v + beta_prev * prev;
    // Full reorthogonalization keeps the basis clean for clustered spectra.
    w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    beta_prev = w.norm();
    beta(j) = beta_prev;
    if (beta_prev < 1e-13) break;
    prev = basis.col(j);
    v = w / beta_prev;
  }
  Mat tri = Mat::Zero(built, built);
  for (int j = 0; j < built; ++j) {
    tri(j, j) = alpha(j);
    if (j + 1 < built) tri(j, j + 1) = tri(j + 1, j) = beta(j);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(tri);
  // Largest eigenvalues of the inverse are the smallest of s.
  out.values = Vec(want);
  out.vectors = Mat(n, want);
  if (built < want) {
    out.converged = false;
    return out;
  }
  for (int k = 0; k < want; ++k) {
    int idx = built - 1 - k;
    double theta = es.eigenvalues()(idx);
    out.values(k) = sigma + 1.0 / theta;
    out.vectors.col(k) = basis.leftCols(built) * es.eigenvectors().col(idx);
    out.vectors.col(k).normalize();
  }
  // Residual check; refine eigenvalues by Rayleigh quotient.
  for (int k = 0; k < want; ++k) {
    Vec x = out.vectors.col(k);
    Vec sx = s * x;
    out.values(k) = x.dot(sx);
    if ((sx - out.values(k) * x).norm() > 1e-9 * scale)
      out.converged = false;
  }
  return out;
}

}  // namespace gammacalc
