#pragma once

// Second-order calculus: Gamma_2, the trilinear form H[f], pointwise
// reconstruction of Hessians and covariant derivatives in the reduced
// cotangent coordinates, Lie brackets, and per-point curvature lower bounds
// from the Gamma_2 >= K Gamma pencil.
//
// Reconstruction pattern: a symmetric tensor A on the reduced fiber is
// determined by its values on generator gradients, A(dg_a, dg_b) = H_ab.
// With Ghat = Phi^T G (reduced generator matrix) the equation reads
// Ghat^T A Ghat = H, and because Ghat^+ = Phi the minimum-norm solution is
// simply A = Phi^T H Phi; the unrepresentable part P H P - H (P the
// projection onto range(G)) is the reported residual.

#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "gammacalc/first_order.hpp"

namespace gammacalc {

inline ScalarField gamma2(const FiniteMMSpace& s, const ScalarField& f,
                          const ScalarField& g) {
  Vec gfg = carre_du_champ(s, f, g);
  Vec lf = apply_generator(s, f), lg = apply_generator(s, g);
  return 0.5 * (apply_generator(s, gfg) - carre_du_champ(s, f, lg) -
                carre_du_champ(s, g, lf));
}

// H[f](g,h) = 1/2 (Gamma(Gamma(f,g),h) + Gamma(Gamma(f,h),g) - Gamma(f,Gamma(g,h)))
inline ScalarField h_form(const FiniteMMSpace& s, const ScalarField& f,
                          const ScalarField& g, const ScalarField& h) {
  return 0.5 * (carre_du_champ(s, carre_du_champ(s, f, g), h) +
                carre_du_champ(s, carre_du_champ(s, f, h), g) -
                carre_du_champ(s, f, carre_du_champ(s, g, h)));
}

struct Hessian {
  TensorSection tensor;   // symmetric, reduced coordinates
  ScalarField residual;   // Frobenius norm of the unrepresentable part
};

// Caches generator pair fields and generator Hessians; everything second
// order and above reconstructs against these.
class SecondOrder {
 public:
  explicit SecondOrder(CotangentPtr ct) : ct_(std::move(ct)) {
    const auto& c = *ct_;
    const int r = static_cast<int>(c.gens.cols());
    gamma_pairs_.resize(static_cast<size_t>(r) * r);
    for (int a = 0; a < r; ++a)
      for (int b = a; b < r; ++b) {
        Vec g = carre_du_champ(*c.space, c.gens.col(a), c.gens.col(b));
        gamma_pairs_[static_cast<size_t>(a) * r + b] = g;
        gamma_pairs_[static_cast<size_t>(b) * r + a] = g;
      }
    gen_hess_.reserve(r);
    for (int a = 0; a < r; ++a) gen_hess_.push_back(hessian(c.gens.col(a)));
  }

  const CotangentBundle& ct() const { return *ct_; }
  CotangentPtr ct_ptr() const { return ct_; }
  const Vec& gamma_pair(int a, int b) const {
    return gamma_pairs_[static_cast<size_t>(a) * ct_->gens.cols() + b];
  }
  const Hessian& gen_hessian(int a) const { return gen_hess_[a]; }

  // Per-point r x r matrices H_ab = H[f](g_a, g_b)(i).
  std::vector<Mat> h_matrices(const ScalarField& f) const {
    const auto& c = *ct_;
    const auto& s = *c.space;
    const int n = s.n, r = static_cast<int>(c.gens.cols());
    Mat gfa(n, r);  // Gamma(f, g_a)
    for (int a = 0; a < r; ++a)
      gfa.col(a) = carre_du_champ(s, f, c.gens.col(a));
    std::vector<Mat> h(n, Mat::Zero(r, r));
    for (int a = 0; a < r; ++a)
      for (int b = a; b < r; ++b) {
        Vec t = 0.5 * (carre_du_champ(s, gfa.col(a), c.gens.col(b)) +
                       carre_du_champ(s, gfa.col(b), c.gens.col(a)) -
                       carre_du_champ(s, f, gamma_pair(a, b)));
        for (int i = 0; i < n; ++i) {
          h[i](a, b) = t(i);
          h[i](b, a) = t(i);
        }
      }
    return h;
  }

  Hessian hessian(const ScalarField& f) const {
    require_field(*ct_->space, f, "hessian");
    std::vector<Mat> h = h_matrices(f);
    return reconstruct_symmetric(h);
  }

  // Covariant derivative of X as the (0,2)-tensor with
  //   nabla X (dg_c, dg_d) = Gamma(<X, dg_d>, g_c) - Hess g_d(X, dg_c),
  // rows = direction of derivation.
  TensorSection covariant_derivative(const Section& x,
                                     ScalarField* residual = nullptr) const {
    const auto& c = *ct_;
    if (x.bundle != c.reduced)
      throw usage_error("covariant_derivative: section not in this bundle");
    require_section(x, "covariant_derivative");
    const auto& s = *c.space;
    const int n = s.n, r = static_cast<int>(c.gens.cols());
    Mat u(n, r);  // u_d = <X, dg_d>
    for (int i = 0; i < n; ++i)
      u.row(i) = (c.gen_reduced[i].transpose() * x.coeffs[i]).transpose();
    std::vector<Mat> rhs(n, Mat::Zero(r, r));
    for (int d = 0; d < r; ++d) {
      Vec ud = u.col(d);
      for (int cgen = 0; cgen < r; ++cgen) {
        Vec t = carre_du_champ(s, ud, c.gens.col(cgen));
        for (int i = 0; i < n; ++i) rhs[i](cgen, d) = t(i);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < r; ++d) {
        Vec hx = gen_hess_[d].tensor.coeffs[i] * x.coeffs[i];
        rhs[i].col(d) -= c.gen_reduced[i].transpose() * hx;
      }
    }
    TensorSection t = zero_tensor(c.reduced, c.reduced);
    if (residual) residual->resize(n);
    for (int i = 0; i < n; ++i) {
      t.coeffs[i] = c.frame[i].transpose() * rhs[i] * c.frame[i];
      if (residual) {
        Mat p = c.frame[i] * c.gen_reduced[i];
        (*residual)(i) = (p.transpose() * rhs[i] * p - rhs[i]).norm();
      }
    }
    return t;
  }

  // nabla_X Y in reduced coordinates: <nabla_X Y, w> = (nabla Y):(x (x) w).
  Section directional_derivative(const TensorSection& nabla_y,
                                 const Section& x) const {
    Section out = zero_section(ct_->reduced);
    for (int i = 0; i < ct_->space->n; ++i)
      out.coeffs[i] = nabla_y.coeffs[i].transpose() * x.coeffs[i];
    return out;
  }

  Section lie_bracket(const Section& x, const Section& y) const {
    TensorSection nx = covariant_derivative(x);
    TensorSection ny = covariant_derivative(y);
    Section out = zero_section(ct_->reduced);
    for (int i = 0; i < ct_->space->n; ++i)
      out.coeffs[i] = ny.coeffs[i].transpose() * x.coeffs[i] -
                      nx.coeffs[i].transpose() * y.coeffs[i];
    return out;
  }

  // [grad g_a, grad g_b](i) from cached generator Hessians; gradients of
  // functions have symmetric covariant derivative, so the bracket is the
  // difference of Hessian contractions.
  Vec generator_bracket(int a, int b, int i) const {
    const auto& c = *ct_;
    return gen_hess_[b].tensor.coeffs[i] * c.gen_reduced[i].col(a) -
           gen_hess_[a].tensor.coeffs[i] * c.gen_reduced[i].col(b);
  }

 private:
  Hessian reconstruct_symmetric(const std::vector<Mat>& h) const {
    const auto& c = *ct_;
    const int n = c.space->n;
    Hessian out;
    out.tensor = zero_tensor(c.reduced, c.reduced);
    out.residual.resize(n);
    for (int i = 0; i < n; ++i) {
      Mat a = c.frame[i].transpose() * h[i] * c.frame[i];
      out.tensor.coeffs[i] = 0.5 * (a + a.transpose());
      Mat p = c.frame[i] * c.gen_reduced[i];  // projection onto range(G_i)
      out.residual(i) = (p.transpose() * h[i] * p - h[i]).norm();
    }
    return out;
  }

  CotangentPtr ct_;
  std::vector<Vec> gamma_pairs_;
  std::vector<Hessian> gen_hess_;
};

// ---- curvature lower bounds ------------------------------------------------

struct CurvatureEstimate {
  ScalarField k_field;   // per-point K*(i); +inf on Gamma-rank-0 points
  double k_star = std::numeric_limits<double>::infinity();
  std::string method;    // "exact" or "restricted"
  bool upper_bound = false;  // restricted pencils can only raise the minimum
  double n_param = 0.0;      // CD(K,N) dimension, 0 = infinity
};

namespace detail {

// Exact per-point solve. Both forms at i read nothing outside the closed
// 2-ball: the Gamma form sees one-ring differences and the Gamma_2 form sees
// the Gamma forms of one-ring points. The pencil is therefore assembled in
// full over the 2-ball coordinates; the singular-denominator reduction
// (functions that cost nothing in Gamma but lower Gamma_2, like locally
// linear ones) happens inside pencil_min_eigenvalue.
inline double k_star_at_point(const FiniteMMSpace& s, int i, double n_param) {
  std::vector<int> ball;
  std::unordered_map<int, int> loc;
  auto add = [&](int v) {
    if (loc.emplace(v, static_cast<int>(ball.size())).second) ball.push_back(v);
  };
  add(i);
  std::vector<int> ring1;
  bool has_edge = false;
  for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
    int j = static_cast<int>(it.col());
    add(j);
    if (j != i) ring1.push_back(j);
    if (j != i && it.value() > 0.0) has_edge = true;
  }
  if (!has_edge) return std::numeric_limits<double>::infinity();
  for (int j : ring1)
    for (SpMatR::InnerIterator it(s.gen, j); it; ++it)
      add(static_cast<int>(it.col()));
  const int ns = static_cast<int>(ball.size());
  const int li = 0;  // ball[0] == i

  auto rank1 = [&](Mat& m, int p, int q, double c) {
    // m += c * (e_p - e_q)(e_p - e_q)^T
    m(p, p) += c;
    m(q, q) += c;
    m(p, q) -= c;
    m(q, p) -= c;
  };

  // Gamma form at i: 1/2 sum_j L_ij (u_j - u_i)^2.
  Mat b = Mat::Zero(ns, ns);
  for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
    int j = static_cast<int>(it.col());
    if (j != i) rank1(b, loc.at(j), li, 0.5 * it.value());
  }

  // Gamma_2 form: 1/2 L[Gamma(u,u)](i) - Gamma(u, Lu)(i). The first part is
  // 1/2 sum_j L_ij Gamma_j (diagonal included), each Gamma_j a sum of edge
  // rank-ones; the second is sym[(e_j - e_i)(r_j - r_i)^T] over one-ring
  // edges, with r_j the local row of L at j.
  Mat a = Mat::Zero(ns, ns);
  for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
    int j = static_cast<int>(it.col());
    double w_ij = it.value();
    for (SpMatR::InnerIterator it2(s.gen, j); it2; ++it2) {
      int k = static_cast<int>(it2.col());
      if (k != j) rank1(a, loc.at(k), loc.at(j), 0.25 * w_ij * it2.value());
    }
  }
  Vec ri = Vec::Zero(ns);
  for (SpMatR::InnerIterator it(s.gen, i); it; ++it)
    ri(loc.at(static_cast<int>(it.col()))) = it.value();
  for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
    int j = static_cast<int>(it.col());
    if (j == i) continue;
    double w_ij = it.value();
    Vec dr = -ri;
    for (SpMatR::InnerIterator it2(s.gen, j); it2; ++it2)
      dr(loc.at(static_cast<int>(it2.col()))) += it2.value();
    int lj = loc.at(j);
    for (int q = 0; q < ns; ++q) {
      double c = 0.25 * w_ij * dr(q);
      a(lj, q) -= c;
      a(q, lj) -= c;
      a(li, q) += c;
      a(q, li) += c;
    }
  }
  if (n_param > 0.0) a -= (ri * ri.transpose()) / n_param;

  return pencil_min_eigenvalue(a, b);
}

}  // namespace detail

// K*(i) = largest K with Gamma_2 >= K Gamma at i over the test space; global
// value is the min. For n <= cap the solve is exact (see above); beyond the
// cap the pencil is restricted to the span of the supplied fields plus their
// pairwise products, which can only raise minima: an upper bound on K*.
inline CurvatureEstimate curvature_estimate(const FiniteMMSpace& s,
                                            double n_param = 0.0,
                                            int cap = 2000,
                                            const Mat* restrict_fields = nullptr) {
  if (n_param < 0.0) throw usage_error("curvature_estimate: N must be positive");
  CurvatureEstimate out;
  out.n_param = n_param;
  out.k_field.resize(s.n);
  if (s.n <= cap) {
    out.method = "exact";
    parallel_for(s.n, [&](int i) {
      out.k_field(i) = detail::k_star_at_point(s, i, n_param);
    });
  } else {
    if (!restrict_fields)
      throw usage_error(
          "curvature_estimate: size cap exceeded; supply restriction fields "
          "or raise the cap");
    out.method = "restricted";
    out.upper_bound = true;
    const Mat& g = *restrict_fields;
    const int r = static_cast<int>(g.cols());
    std::vector<Vec> basis;
    for (int a = 0; a < r; ++a) basis.push_back(g.col(a));
    for (int a = 0; a < r; ++a)
      for (int b = a; b < r; ++b)
        basis.push_back(g.col(a).cwiseProduct(g.col(b)));
    const int nb = static_cast<int>(basis.size());
    std::vector<Vec> lbasis(nb);
    for (int a = 0; a < nb; ++a) lbasis[a] = apply_generator(s, basis[a]);
    // Blocked over points so the per-point Gram stacks stay in memory.
    int block = std::max(64, static_cast<int>(6'000'000 / (2LL * nb * nb)));
    for (int start = 0; start < s.n; start += block) {
      int len = std::min(block, s.n - start);
      std::vector<Mat> q(len, Mat(nb, nb)), rm(len, Mat(nb, nb));
      for (int a = 0; a < nb; ++a)
        for (int b = a; b < nb; ++b) {
          Vec gq = carre_du_champ(s, basis[a], basis[b]);
          Vec gr = 0.5 * (apply_generator(s, gq) -
                          carre_du_champ(s, basis[a], lbasis[b]) -
                          carre_du_champ(s, basis[b], lbasis[a]));
          for (int t = 0; t < len; ++t) {
            double rv = gr(start + t);
            if (n_param > 0.0)
              rv -= lbasis[a](start + t) * lbasis[b](start + t) / n_param;
            q[t](a, b) = gq(start + t);
            q[t](b, a) = gq(start + t);
            rm[t](a, b) = rv;
            rm[t](b, a) = rv;
          }
        }
      parallel_for(len, [&](int t) {
        out.k_field(start + t) = pencil_min_eigenvalue(rm[t], q[t]);
      });
    }
  }
  out.k_star = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s.n; ++i) out.k_star = std::min(out.k_star, out.k_field(i));
  return out;
}

}  // namespace gammacalc
