#pragma once

// FiniteMMSpace: a finite metric measure space presented by positive point
// weights m and a sparse Markov generator L with row sums zero, nonnegative
// off-diagonal entries and m-symmetry m_i L_ij = m_j L_ji. Everything in the
// calculus factors through (m, L); the distance table is optional metadata.
//
// Core operators: the m-weighted inner product, the carre du champ
//   gamma(f,g) = (L(fg) - f Lg - g Lf) / 2,
// Dirichlet energy, the heat semigroup of L (implicit Euler or spectral),
// and low-frequency eigenfunctions of -L used as generator frames.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "gammacalc/linalg.hpp"
#include "gammacalc/util.hpp"

namespace gammacalc {

using SpMatR = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct FiniteMMSpace {
  int n = 0;
  Vec m;        // strictly positive point weights
  SpMatR gen;   // generator L, row-major for per-point neighbor loops
  Mat dist;     // optional symmetric distance table (empty if absent)
  // Builder metadata: known intrinsic dimension (frame sizing) and natural
  // coordinate fields contributed by embedded builders (columns).
  int intrinsic_dim = 3;
  Mat coord_fields;
  std::string label;
  std::vector<std::string> warnings;

  bool has_dist() const { return dist.rows() == n && n > 0; }
};

using SpacePtr = std::shared_ptr<const FiniteMMSpace>;

// Invariant check: positive measure, row sums zero, Markov signs,
// m-symmetry within builder rounding, and metric axioms when dist present.
inline void validate_space(const FiniteMMSpace& s, double sym_tol = 1e-12) {
  if (s.n <= 0 || s.m.size() != s.n || s.gen.rows() != s.n ||
      s.gen.cols() != s.n)
    throw usage_error("space: inconsistent sizes");
  for (int i = 0; i < s.n; ++i)
    if (!(s.m(i) > 0.0)) throw usage_error("space: nonpositive measure weight");
  double scale = 0.0;
  for (int i = 0; i < s.gen.outerSize(); ++i)
    for (SpMatR::InnerIterator it(s.gen, i); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  scale = std::max(scale, 1.0);
  Mat w = Mat::Zero(0, 0);
  for (int i = 0; i < s.n; ++i) {
    double row_sum = 0.0;
    for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
      row_sum += it.value();
      if (it.col() != i && it.value() < -1e-14 * scale)
        throw usage_error("space: negative off-diagonal generator entry");
    }
    if (std::abs(row_sum) > 1e-10 * scale)
      throw usage_error("space: generator row sum not zero");
  }
  SpMat ml = s.m.asDiagonal() * SpMat(s.gen);
  SpMat defect = ml - SpMat(ml.transpose());
  double msym = 0.0;
  for (int k = 0; k < defect.outerSize(); ++k)
    for (SpMat::InnerIterator it(defect, k); it; ++it)
      msym = std::max(msym, std::abs(it.value()));
  double mscale = s.m.maxCoeff() * scale;
  if (msym > sym_tol * mscale)
    throw usage_error("space: generator is not m-symmetric (relative defect " +
                      std::to_string(msym / mscale) + ")");
  if (s.dist.size() > 0) {
    if (s.dist.rows() != s.n || s.dist.cols() != s.n)
      throw usage_error("space: distance table has wrong shape");
    for (int i = 0; i < s.n; ++i) {
      if (std::abs(s.dist(i, i)) > 1e-12)
        throw usage_error("space: nonzero distance diagonal");
      for (int j = 0; j < s.n; ++j) {
        if (s.dist(i, j) < -1e-12 ||
            std::abs(s.dist(i, j) - s.dist(j, i)) > 1e-10)
          throw usage_error("space: distance table not symmetric nonnegative");
      }
    }
  }
}

inline void require_field(const FiniteMMSpace& s, const ScalarField& f,
                          const char* what) {
  if (f.size() != s.n)
    throw usage_error(std::string(what) + ": field length does not match space");
}

// m-weighted pairing <f,g> = sum f_i g_i m_i and integral of a field.
inline double inner_m(const FiniteMMSpace& s, const ScalarField& f,
                      const ScalarField& g) {
  require_field(s, f, "inner_m");
  require_field(s, g, "inner_m");
  double acc = 0.0;  // sequential sum: deterministic
  for (int i = 0; i < s.n; ++i) acc += f(i) * g(i) * s.m(i);
  return acc;
}

inline double integrate(const FiniteMMSpace& s, const ScalarField& f) {
  require_field(s, f, "integrate");
  double acc = 0.0;
  for (int i = 0; i < s.n; ++i) acc += f(i) * s.m(i);
  return acc;
}

inline double norm_m(const FiniteMMSpace& s, const ScalarField& f) {
  return std::sqrt(std::max(0.0, inner_m(s, f, f)));
}

inline ScalarField apply_generator(const FiniteMMSpace& s,
                                   const ScalarField& f) {
  require_field(s, f, "apply_generator");
  return s.gen * f;
}

// gamma(f,g) = (L(fg) - f Lg - g Lf)/2; symmetric, gamma(f,f) >= 0 by the
// Markov sign conditions.
inline ScalarField carre_du_champ(const FiniteMMSpace& s, const ScalarField& f,
                                  const ScalarField& g) {
  require_field(s, f, "carre_du_champ");
  require_field(s, g, "carre_du_champ");
  ScalarField fg = f.cwiseProduct(g);
  return 0.5 * (s.gen * fg - f.cwiseProduct(s.gen * g) -
                g.cwiseProduct(s.gen * f));
}

// E(f) = (1/2) integral of gamma(f,f) = -(1/2) <f, Lf>_m.
inline double dirichlet_energy(const FiniteMMSpace& s, const ScalarField& f) {
  require_field(s, f, "dirichlet_energy");
  return -0.5 * inner_m(s, f, s.gen * f);
}

// Heat flow schemes. Implicit Euler is the default: unconditionally stable
// and maximum-principle-preserving on Markov generators. Spectral uses a
// full symmetric eigendecomposition and is refused above the size cap.
struct HeatScheme {
  enum Kind { implicit_euler, spectral } kind = implicit_euler;
  int steps = 32;           // implicit Euler substeps
  int spectral_cap = 5000;  // refuse dense decomposition above this n
};

inline ScalarField heat_flow(const FiniteMMSpace& s, const ScalarField& f,
                             double t, const HeatScheme& scheme = {}) {
  require_field(s, f, "heat_flow");
  if (t < 0) throw usage_error("heat_flow: negative time");
  if (t == 0) return f;
  if (scheme.kind == HeatScheme::implicit_euler) {
    int steps = std::max(1, scheme.steps);
    double dt = t / steps;
    SpMat sys(s.n, s.n);
    sys.setIdentity();
    sys -= dt * SpMat(s.gen);
    Eigen::SparseLU<SpMat> lu(sys);
    if (lu.info() != Eigen::Success)
      throw computation_error("heat_flow: implicit system is singular");
    ScalarField u = f;
    for (int k = 0; k < steps; ++k) u = lu.solve(u);
    return u;
  }
  if (s.n > scheme.spectral_cap)
    throw usage_error("heat_flow: spectral scheme refused above size cap");
  // Symmetrize with the measure: S = D^{1/2} L D^{-1/2}.
  Vec sq = s.m.cwiseSqrt();
  Mat sym = sq.asDiagonal() * Mat(s.gen) * sq.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec w = sq.cwiseProduct(f);
  Vec coef = es.eigenvectors().transpose() * w;
  for (int i = 0; i < s.n; ++i) coef(i) *= std::exp(t * es.eigenvalues()(i));
  return (es.eigenvectors() * coef).cwiseQuotient(sq);
}

// First `count` eigenfunctions of -L, ascending eigenvalue, m-orthonormal.
struct EigenFunctions {
  Vec values;  // eigenvalues of -L, ascending
  Mat fields;  // n x count, columns m-orthonormal
};

inline EigenFunctions laplacian_eigenfunctions(const FiniteMMSpace& s,
                                               int count,
                                               std::uint64_t seed = 13) {
  count = std::min(count, s.n);
  Vec sq = s.m.cwiseSqrt();
  SpMat sym = (sq.asDiagonal() * SpMat(s.gen) * sq.cwiseInverse().asDiagonal());
  SpMat psd = SpMat(-0.5 * (sym + SpMat(sym.transpose())));
  EigenPairs pairs = smallest_eigenpairs(psd, count, seed);
  if (!pairs.converged)
    throw computation_error("eigenfunctions: Lanczos did not converge");
  EigenFunctions out;
  out.values = pairs.values;
  out.fields = sq.cwiseInverse().asDiagonal() * pairs.vectors;
  return out;
}

}  // namespace gammacalc
