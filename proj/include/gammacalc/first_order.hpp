#pragma once

// First-order calculus: the cotangent module built from the carre du champ.
//
// A generating family g_1..g_r of functions induces at every point the Gram
// G_i(a,b) = Gamma(g_a,g_b)(i), PSD by the Markov property. The fiber at i is
// the span of {dg_a} modulo the Gram null space; we store it in reduced
// orthonormal coordinates: a frame Phi_i (r x d_i, Phi^T G Phi = I) fixes an
// isometry onto R^{d_i}, so every downstream bundle has identity Grams.
// In these coordinates the differential needs no linear solve:
//   (df)^(i) = Phi_i^T gamma_f(i),  gamma_f(i)_a = Gamma(f, g_a)(i),
// and <df,dg>(i) = Gamma(f,g)(i) exactly whenever both differentials lie in
// the generated span (gamma vectors always lie in range(G_i), Cauchy-Schwarz
// for the quadratic form).

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "gammacalc/module.hpp"

namespace gammacalc {

struct CotangentBundle {
  SpacePtr space;
  Mat gens;     // n x r generating functions, one per column
  Mat gens_L;   // L applied to each generator
  std::vector<Mat> gram;         // r x r carre-du-champ Gram per point
  std::vector<Mat> frame;        // r x d_i, columns G_i-orthonormal
  std::vector<Mat> gen_reduced;  // d_i x r, column a = reduced dg_a(i)
  Eigen::VectorXi dim_loc;       // fiber rank = rank of G_i
  BundlePtr reduced;             // identity-Gram bundle carrying all sections
};

using CotangentPtr = std::shared_ptr<const CotangentBundle>;

inline CotangentPtr build_cotangent(SpacePtr space, Mat gen_fields) {
  if (gen_fields.cols() == 0)
    throw usage_error("build_cotangent: empty generator list");
  if (gen_fields.rows() != space->n)
    throw usage_error("build_cotangent: generator length != space size");
  auto ct = std::make_shared<CotangentBundle>();
  const int n = space->n, r = static_cast<int>(gen_fields.cols());
  ct->gens = std::move(gen_fields);
  ct->gens_L.resize(n, r);
  for (int a = 0; a < r; ++a)
    ct->gens_L.col(a) = apply_generator(*space, ct->gens.col(a));

  // Pairwise carre du champ, then per-point Grams and frames.
  std::vector<Vec> pair_fields(static_cast<size_t>(r) * r);
  for (int a = 0; a < r; ++a)
    for (int b = a; b < r; ++b) {
      Vec gab = 0.5 * (apply_generator(*space,
                                       ct->gens.col(a).cwiseProduct(ct->gens.col(b))) -
                       ct->gens.col(a).cwiseProduct(ct->gens_L.col(b)) -
                       ct->gens.col(b).cwiseProduct(ct->gens_L.col(a)));
      pair_fields[static_cast<size_t>(a) * r + b] = gab;
      pair_fields[static_cast<size_t>(b) * r + a] = gab;
    }
  ct->gram.resize(n);
  ct->frame.resize(n);
  ct->gen_reduced.resize(n);
  ct->dim_loc.resize(n);
  for (int i = 0; i < n; ++i) {
    Mat g(r, r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b)
        g(a, b) = pair_fields[static_cast<size_t>(a) * r + b](i);
    g = 0.5 * (g + g.transpose()).eval();
    int rank = 0;
    Mat phi = psd_orthonormal_frame(g, &rank);
    ct->gram[i] = g;
    ct->frame[i] = phi;
    ct->gen_reduced[i] = phi.transpose() * g;
    ct->dim_loc(i) = rank;
  }
  ct->reduced = euclidean_bundle(space, ct->dim_loc);
  ct->space = std::move(space);
  return ct;
}

// Auto generator frame: low-frequency eigenfunctions of -L (constant mode
// dropped) plus the builder's embedded coordinate fields when present.
inline Mat auto_generators(const FiniteMMSpace& s, int count = 0) {
  if (count <= 0) count = std::min(s.n, 3 * s.intrinsic_dim + 2);
  int coord = static_cast<int>(s.coord_fields.cols());
  int want = std::min(count + 1, s.n);  // +1 for the constant we drop
  EigenFunctions ef = laplacian_eigenfunctions(s, want);
  int keep = static_cast<int>(ef.fields.cols()) - 1;
  Mat gens(s.n, coord + std::max(keep, 0));
  if (coord) gens.leftCols(coord) = s.coord_fields;
  for (int a = 0; a < keep; ++a) gens.col(coord + a) = ef.fields.col(a + 1);
  if (gens.cols() == 0)
    throw computation_error("auto_generators: no usable generator fields");
  return gens;
}

inline CotangentPtr build_cotangent_auto(SpacePtr space, int count = 0) {
  Mat gens = auto_generators(*space, count);
  return build_cotangent(std::move(space), std::move(gens));
}

// gamma_f(i)_a = Gamma(f, g_a)(i), the pairing vector the differential is
// built from; always in range(G_i).
inline Mat pairing_fields(const CotangentBundle& ct, const ScalarField& f) {
  const int r = static_cast<int>(ct.gens.cols());
  Mat gf(ct.space->n, r);
  Vec lf = apply_generator(*ct.space, f);
  for (int a = 0; a < r; ++a)
    gf.col(a) = 0.5 * (apply_generator(*ct.space,
                                       f.cwiseProduct(ct.gens.col(a))) -
                       f.cwiseProduct(ct.gens_L.col(a)) -
                       ct.gens.col(a).cwiseProduct(lf));
  return gf;
}

// Span defect Gamma(f,f) - |df|^2 >= 0; zero exactly on the generated span.
inline Section differential_projected(const CotangentBundle& ct,
                                      const ScalarField& f,
                                      ScalarField* defect = nullptr) {
  require_field(*ct.space, f, "differential");
  Mat gf = pairing_fields(ct, f);
  Vec gff = carre_du_champ(*ct.space, f, f);
  Section df = zero_section(ct.reduced);
  if (defect) defect->resize(ct.space->n);
  for (int i = 0; i < ct.space->n; ++i) {
    df.coeffs[i] = ct.frame[i].transpose() * gf.row(i).transpose();
    if (defect) (*defect)(i) = gff(i) - df.coeffs[i].squaredNorm();
  }
  return df;
}

inline Section differential(const CotangentBundle& ct, const ScalarField& f) {
  ScalarField defect;
  Section df = differential_projected(ct, f, &defect);
  Vec gff = carre_du_champ(*ct.space, f, f);
  double scale = std::max(gff.cwiseAbs().maxCoeff(), tol::scale_floor);
  std::vector<int> bad;
  for (int i = 0; i < ct.space->n; ++i)
    if (defect(i) > tol::diff_norm * scale) bad.push_back(i);
  if (!bad.empty()) {
    std::string msg = "differential: function leaves the generated span at " +
                      std::to_string(bad.size()) + " point(s):";
    for (size_t k = 0; k < bad.size() && k < 8; ++k)
      msg += " " + std::to_string(bad[k]);
    if (bad.size() > 8) msg += " ...";
    msg += " (add generators)";
    throw computation_error(msg);
  }
  return df;
}

// Identity-Gram fibers make the Riesz isomorphism the identity on
// coefficients; the gradient of f IS its differential in reduced coordinates.
inline Section gradient(const CotangentBundle& ct, const ScalarField& f) {
  return differential(ct, f);
}

// Minimum-norm generator coefficients representing a reduced section:
// c(i) = Phi_i x(i), the unique lift in range(G_i).
inline Mat generator_lift(const CotangentBundle& ct, const Section& v) {
  if (v.bundle != ct.reduced)
    throw usage_error("generator_lift: section not in this cotangent bundle");
  require_section(v, "generator_lift");
  Mat c(ct.space->n, ct.gens.cols());
  for (int i = 0; i < ct.space->n; ++i)
    c.row(i) = (ct.frame[i] * v.coeffs[i]).transpose();
  return c;
}

// Exact weighted adjoint of the differential: with X = sum_a c_a grad g_a,
//   div X = sum_a Gamma(c_a, g_a) + c_a . L g_a,
// which satisfies int f div X dm = -int <X, df> dm for every f, by
// m-symmetry of L alone. Lift-independent because gamma vectors live in
// range(G_i). In particular div(grad f) = Lf exactly for f in the span.
inline ScalarField divergence(const CotangentBundle& ct, const Section& x) {
  Mat c = generator_lift(ct, x);
  ScalarField out = ScalarField::Zero(ct.space->n);
  for (int a = 0; a < ct.gens.cols(); ++a) {
    Vec ca = c.col(a);
    out += carre_du_champ(*ct.space, ca, ct.gens.col(a)) +
           ca.cwiseProduct(ct.gens_L.col(a));
  }
  return out;
}

// ---- pullback of 1-forms ---------------------------------------------------

// Dense-class representation omega = sum_j weight_j * d(func_j). Pullback on
// expressions is plain composition, so (phi o psi)* = psi* o phi* holds to
// machine precision; evaluation into a cotangent bundle happens last.
struct FormExpression {
  std::vector<ScalarField> weight, func;
};

inline FormExpression expression_of_differential(const ScalarField& f, int n) {
  FormExpression e;
  e.weight.push_back(ScalarField::Ones(n));
  e.func.push_back(f);
  return e;
}

inline FormExpression compose_expression(const PointMap& phi,
                                         const FormExpression& e) {
  FormExpression out;
  const int ny = phi.source->n;
  for (size_t j = 0; j < e.func.size(); ++j) {
    ScalarField w(ny), f(ny);
    for (int y = 0; y < ny; ++y) {
      w(y) = e.weight[j](phi.assign[y]);
      f(y) = e.func[j](phi.assign[y]);
    }
    out.weight.push_back(std::move(w));
    out.func.push_back(std::move(f));
  }
  return out;
}

// Evaluation takes the minimum-norm representative of each formal
// differential: composed functions can leave the generated span (meshes have
// more neighbor directions than generators), and the projection is applied
// identically to both sides of any composition identity.
inline Section evaluate_expression(const CotangentBundle& ct,
                                   const FormExpression& e) {
  Section out = zero_section(ct.reduced);
  for (size_t j = 0; j < e.func.size(); ++j) {
    Section dfj = differential_projected(ct, e.func[j]);
    out = axpy(1.0, out, 1.0, mul_function(e.weight[j], dfj));
  }
  return out;
}

// Minimum-norm expression of a reduced 1-form over the generators.
inline FormExpression section_to_expression(const CotangentBundle& ct,
                                            const Section& v) {
  Mat c = generator_lift(ct, v);
  FormExpression e;
  for (int a = 0; a < c.cols(); ++a) {
    e.weight.push_back(c.col(a));
    e.func.push_back(ct.gens.col(a));
  }
  return e;
}

struct PullbackReport {
  double lipschitz = std::numeric_limits<double>::quiet_NaN();
  double bound_violation = 0.0;  // max(|phi* w|(y) - Lip*|w|(phi(y)), 0)
};

// phi: Y -> X, omega a 1-form on X (reduced coords of ct_x). Returns the
// 1-form on Y; the Lipschitz bound |phi* w| <= Lip(phi) |w| o phi is a
// diagnostic, not a promise, for graph generators.
inline Section map_pullback_forms(const PointMap& phi,
                                  const CotangentBundle& ct_x,
                                  const CotangentBundle& ct_y,
                                  const Section& omega,
                                  PullbackReport* report = nullptr) {
  if (ct_x.space != phi.target || ct_y.space != phi.source)
    throw usage_error("map_pullback_forms: spaces do not match the map");
  FormExpression e = section_to_expression(ct_x, omega);
  Section pulled = evaluate_expression(ct_y, compose_expression(phi, e));
  if (report) {
    report->lipschitz = phi.lipschitz;
    report->bound_violation = 0.0;
    if (std::isfinite(phi.lipschitz)) {
      ScalarField ny = pointwise_norm(pulled), nx = pointwise_norm(omega);
      for (int y = 0; y < phi.source->n; ++y)
        report->bound_violation = std::max(
            report->bound_violation,
            ny(y) - phi.lipschitz * nx(phi.assign[y]));
    }
  }
  return pulled;
}

// Differential of the map: d(phi)(v) lives in the pullback of T_X and is the
// per-point least-squares solution of the duality system
//   <dg_a(phi(y)), u(y)> = <d(g_a o phi)(y), v(y)>   for every generator a.
inline Section map_differential(const PointMap& phi,
                                const CotangentBundle& ct_y,
                                const CotangentBundle& ct_x,
                                const Section& v,
                                ScalarField* residual = nullptr) {
  if (ct_x.space != phi.target || ct_y.space != phi.source)
    throw usage_error("map_differential: spaces do not match the map");
  if (v.bundle != ct_y.reduced)
    throw usage_error("map_differential: section not in the source bundle");
  const int r = static_cast<int>(ct_x.gens.cols());
  std::vector<Section> pulled_gens;
  pulled_gens.reserve(r);
  for (int a = 0; a < r; ++a) {
    ScalarField ga(phi.source->n);
    for (int y = 0; y < phi.source->n; ++y)
      ga(y) = ct_x.gens(phi.assign[y], a);
    pulled_gens.push_back(differential_projected(ct_y, ga));
  }
  BundlePtr out_bundle = pullback_module(phi, ct_x.reduced);
  Section out = zero_section(out_bundle);
  if (residual) residual->resize(phi.source->n);
  for (int y = 0; y < phi.source->n; ++y) {
    int x = phi.assign[y];
    Mat a = ct_x.gen_reduced[x].transpose();  // r x d_x
    Vec rhs(r);
    for (int g = 0; g < r; ++g)
      rhs(g) = pulled_gens[g].coeffs[y].dot(v.coeffs[y]);
    Vec u = pinv_solve(a, rhs);
    out.coeffs[y] = u;
    if (residual) (*residual)(y) = (a * u - rhs).norm();
  }
  return out;
}

}  // namespace gammacalc
