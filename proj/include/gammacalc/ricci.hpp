#pragma once
// Measure-valued Ricci curvature at finite scale, realized as a density
// against m:
//
//   Ric(X,Y) = (1/2) L<X,Y> + (1/2)<X, D_H Y> + (1/2)<Y, D_H X> - grad X : grad Y
//
// with D_H the Hodge Laplacian on 1-forms (vector and covector fields are
// identified; the reduced fibers carry identity Grams so the musical
// isomorphism is the identity on coefficients). Integrating the density
// kills the L-term exactly (row sums vanish), which gives the total
//
//   Ric(X,Y)(whole space) = int <dX,dY> + dX dY - grad X : grad Y dm
//                         = 2 E_H - 2 E_C  on the diagonal,
//
// so the classical energy comparison E_C <= E_H - (K/2)|X|^2 and the
// total-variation bound become checkable reports. The N-dimensional
// correction R_N and the carre-du-champ key lemma (the mu-measure and its
// Cauchy-Schwarz consequence) live here as well. Everything is a plain
// field; singular parts of the smooth theory have no finite counterpart.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gammacalc/hodge.hpp"

namespace gammacalc {

struct RicciField {
  ScalarField density;  // density of Ric(X,Y) against m
  double total = 0.0;   // integral of the density
};

struct RicciTotalCheck {
  double measure_side = 0.0;  // int density dm
  double energy_side = 0.0;   // int <dX,dY> + dX dY - grad X : grad Y dm
  double residual = 0.0;
  double scale = 0.0;  // sum of constituent magnitudes, floored
};

struct RicciBoundEntry {
  double k_ric = 0.0;       // inf density / |X|^2 over supported points
  double field_norm2 = 0.0; // |X|^2 in L^2
  double energy_c = 0.0;    // (1/2) int |grad X|_HS^2 dm
  double energy_h = 0.0;    // (1/2) int |dX|^2 + |dX|^2 dm
  double eh_ec_slack = 0.0; // E_H - (K/2)|X|^2 - E_C, expected >= 0
  double tv_total = 0.0;    // int |density| dm on the diagonal
  double tv_bound = 0.0;    // 2 (E_H + K^- |X|^2)
  double tv_slack = 0.0;    // bound minus total
};

struct RicciBoundReport {
  double k_reference = 0.0;  // curvature lower bound fed to the checks
  double k_ric_min = 0.0;    // worst inf-ratio across fields
  std::vector<RicciBoundEntry> fields;
};

struct NRicciReport {
  RicciField field;            // Ric_N(X,Y) density
  ScalarField r_n;             // subtracted correction
  ScalarField trace_defect_x;  // tr grad X - div X
  ScalarField trace_defect_y;
  ScalarField bochner_gap;     // |grad X|^2 + R_N(X,X) - (div X)^2 / N
  std::vector<int> violation_points;  // gap below the residual allowance
  double violation_mass = 0.0;
  double n_param = 0.0;        // 0 encodes N = infinity
};

struct KeyLemmaReport {
  ScalarField mu_density;  // rho, the density of the mu-measure
  ScalarField lhs;         // squared pairing sum (Cauchy-Schwarz left side)
  ScalarField rhs;         // rho times the Gram-square of the h fields
  ScalarField slack;       // rhs - lhs
  std::vector<int> violation_points;
  double violation_mass = 0.0;
  ScalarField bochner_lhs;  // (1/2) L |X|^2 for X = sum g_a grad f_a
  ScalarField bochner_rhs;  // |grad X|_HS^2 - <X, D_H X> + K |X|^2
  std::vector<int> bochner_violations;
  double bochner_violation_mass = 0.0;
  double k_used = 0.0;
};

// Bound-check context: shares the cached second-order reconstructions and
// the assembled Hodge operators.
class RicciOps {
 public:
  explicit RicciOps(std::shared_ptr<const HodgeComplex> hodge)
      : hodge_(std::move(hodge)) {
    if (!hodge_) throw usage_error("ricci: null hodge complex");
  }

  const HodgeComplex& hodge() const { return *hodge_; }
  const SecondOrder& second_order() const { return hodge_->second_order(); }
  const CotangentBundle& ct() const { return hodge_->ct(); }
  const FiniteMMSpace& space() const { return *ct().space; }

  RicciField ricci(const Section& x, const Section& y) const {
    require_vector(x, "ricci");
    require_vector(y, "ricci");
    const auto& s = space();
    ScalarField xy = dual_pairing(x, y);
    Section lx = hodge_->hodge_laplacian(1, x);
    Section ly = hodge_->hodge_laplacian(1, y);
    TensorSection cx = second_order().covariant_derivative(x);
    TensorSection cy = second_order().covariant_derivative(y);
    RicciField out;
    out.density = 0.5 * apply_generator(s, xy) +
                  0.5 * dual_pairing(x, ly) + 0.5 * dual_pairing(y, lx) -
                  hs_dot(cx, cy);
    out.total = integrate(s, out.density);
    return out;
  }

  RicciTotalCheck ricci_total_check(const Section& x, const Section& y) const {
    require_vector(x, "ricci_total_check");
    require_vector(y, "ricci_total_check");
    const auto& s = space();
    RicciTotalCheck rep;
    rep.measure_side = ricci(x, y).total;
    Section dx = hodge_->exterior_derivative(1, x);
    Section dy = hodge_->exterior_derivative(1, y);
    double dd = hodge_->weighted_dot(2, dx, dy);
    ScalarField cox = hodge_->form_to_scalar(hodge_->codifferential(1, x));
    ScalarField coy = hodge_->form_to_scalar(hodge_->codifferential(1, y));
    double cc = inner_m(s, cox, coy);
    TensorSection cvx = second_order().covariant_derivative(x);
    TensorSection cvy = second_order().covariant_derivative(y);
    double gg = integrate(s, hs_dot(cvx, cvy));
    rep.energy_side = dd + cc - gg;
    rep.residual = std::abs(rep.measure_side - rep.energy_side);
    rep.scale = std::max(std::abs(dd) + std::abs(cc) + std::abs(gg),
                         tol::scale_floor);
    return rep;
  }

  // Per-field curvature bound diagnostics against a reference lower bound
  // (expected to come from the K* estimate on the same space).
  RicciBoundReport ricci_bound_report(const std::vector<Section>& fields,
                                      double k_reference) const {
    const auto& s = space();
    RicciBoundReport rep;
    rep.k_reference = k_reference;
    rep.k_ric_min = std::numeric_limits<double>::infinity();
    const double kminus = std::max(0.0, -k_reference);
    for (const auto& x : fields) {
      require_vector(x, "ricci_bound_report");
      RicciBoundEntry e;
      RicciField rf = ricci(x, x);
      ScalarField n2 = pointwise_norm(x).array().square().matrix();
      double peak = n2.maxCoeff();
      e.k_ric = std::numeric_limits<double>::infinity();
      for (int i = 0; i < s.n; ++i)
        if (n2(i) > 1e-10 * peak && peak > 0.0)
          e.k_ric = std::min(e.k_ric, rf.density(i) / n2(i));
      e.field_norm2 = integrate(s, n2);
      TensorSection cv = second_order().covariant_derivative(x);
      e.energy_c = 0.5 * integrate(s, hs_dot(cv, cv));
      e.energy_h = hodge_->hodge_energy(1, x);
      e.eh_ec_slack =
          e.energy_h - 0.5 * k_reference * e.field_norm2 - e.energy_c;
      e.tv_total = integrate(s, rf.density.cwiseAbs());
      e.tv_bound = 2.0 * (e.energy_h + kminus * e.field_norm2);
      e.tv_slack = e.tv_bound - e.tv_total;
      rep.k_ric_min = std::min(rep.k_ric_min, e.k_ric);
      rep.fields.push_back(e);
    }
    return rep;
  }

  // Dimensional correction: R_N(X,Y) = defect_X defect_Y / (N - dim_loc)
  // where dim_loc < N, zero where equal; N = 0 is the infinity sentinel.
  NRicciReport ricci_n(const Section& x, const Section& y, double n_param) const {
    require_vector(x, "ricci_n");
    require_vector(y, "ricci_n");
    if (n_param < 0.0) throw usage_error("ricci_n: negative dimension bound");
    const auto& s = space();
    const auto& c = ct();
    const bool finite_n = n_param > 0.0 &&
                          n_param != std::numeric_limits<double>::infinity();
    if (finite_n)
      for (int i = 0; i < s.n; ++i)
        if (static_cast<double>(c.dim_loc(i)) > n_param)
          throw usage_error(
              "ricci_n: dimension bound below local dimension at point " +
              std::to_string(i));
    NRicciReport rep;
    rep.n_param = finite_n ? n_param : 0.0;
    ScalarField resx, resy;
    TensorSection cvx = second_order().covariant_derivative(x, &resx);
    TensorSection cvy = second_order().covariant_derivative(y, &resy);
    ScalarField divx = divergence(c, x), divy = divergence(c, y);
    rep.trace_defect_x.resize(s.n);
    rep.trace_defect_y.resize(s.n);
    for (int i = 0; i < s.n; ++i) {
      rep.trace_defect_x(i) = cvx.coeffs[i].trace() - divx(i);
      rep.trace_defect_y(i) = cvy.coeffs[i].trace() - divy(i);
    }
    rep.r_n = ScalarField::Zero(s.n);
    if (finite_n)
      for (int i = 0; i < s.n; ++i)
        if (static_cast<double>(c.dim_loc(i)) < n_param)
          rep.r_n(i) = rep.trace_defect_x(i) * rep.trace_defect_y(i) /
                       (n_param - c.dim_loc(i));
    rep.field = ricci(x, y);
    rep.field.density -= rep.r_n;
    rep.field.total = integrate(s, rep.field.density);
    // Pointwise Bochner-type trace inequality for X itself:
    //   |grad X|^2 + R_N(X,X) >= (div X)^2 / N.
    ScalarField hs2 = hs_dot(cvx, cvx);
    rep.bochner_gap.resize(s.n);
    for (int i = 0; i < s.n; ++i) {
      double rnxx = 0.0;
      if (finite_n && static_cast<double>(c.dim_loc(i)) < n_param)
        rnxx = rep.trace_defect_x(i) * rep.trace_defect_x(i) /
               (n_param - c.dim_loc(i));
      double lower = finite_n ? divx(i) * divx(i) / n_param : 0.0;
      rep.bochner_gap(i) = hs2(i) + rnxx - lower;
      double scale = hs2(i) + std::abs(rnxx) + lower + tol::scale_floor;
      double allow = tol::exact_class * scale + 10.0 * resx(i) * scale;
      if (rep.bochner_gap(i) < -allow) {
        rep.violation_points.push_back(i);
        rep.violation_mass += s.m(i);
      }
    }
    return rep;
  }

  // Key lemma: the mu-measure density for the family X = sum_a g_a grad f_a,
  //
  //   rho = sum_{a,b} g_a g_b (gamma2(f_a,f_b) - K Gamma(f_a,f_b))
  //       + 2 g_a H[f_a](f_b, g_b)
  //       + (Gamma(f_a,f_b) Gamma(g_a,g_b) + Gamma(f_a,g_b) Gamma(g_a,f_b)) / 2,
  //
  // its Cauchy-Schwarz consequence against test fields h_j,
  //
  //   | sum_{a,j} Gamma(f_a,h_j) Gamma(g_a,h_j) + g_a H[f_a](h_j,h_j) |^2
  //     <= rho * sum_{j,j'} Gamma(h_j,h_j')^2,
  //
  // and the rewritten Bochner form L|X|^2/2 >= |grad X|^2 - <X,D_H X> + K|X|^2.
  // The density and both Cauchy-Schwarz sides are pure carre-du-champ
  // algebra (no reconstruction); the rewrite uses the assembled operators.
  KeyLemmaReport key_lemma_report(const std::vector<ScalarField>& f_list,
                                  const std::vector<ScalarField>& g_list,
                                  const std::vector<ScalarField>& h_list,
                                  double k) const {
    if (f_list.size() != g_list.size())
      throw usage_error("key_lemma_report: f/g lists differ in length");
    if (f_list.empty() || h_list.empty())
      throw usage_error("key_lemma_report: empty field list");
    const auto& s = space();
    for (const auto& f : f_list) require_field(s, f, "key_lemma_report");
    for (const auto& g : g_list) require_field(s, g, "key_lemma_report");
    for (const auto& h : h_list) require_field(s, h, "key_lemma_report");
    KeyLemmaReport rep;
    rep.k_used = k;
    const int nf = static_cast<int>(f_list.size());
    const int nh = static_cast<int>(h_list.size());
    rep.mu_density = ScalarField::Zero(s.n);
    for (int a = 0; a < nf; ++a)
      for (int b = 0; b < nf; ++b) {
        ScalarField gfab = carre_du_champ(s, f_list[a], f_list[b]);
        rep.mu_density +=
            g_list[a].cwiseProduct(g_list[b]).cwiseProduct(
                gamma2(s, f_list[a], f_list[b]) - k * gfab) +
            2.0 * g_list[a].cwiseProduct(
                      h_form(s, f_list[a], f_list[b], g_list[b])) +
            0.5 * (gfab.cwiseProduct(
                       carre_du_champ(s, g_list[a], g_list[b])) +
                   carre_du_champ(s, f_list[a], g_list[b])
                       .cwiseProduct(carre_du_champ(s, g_list[a], f_list[b])));
      }
    ScalarField pairing = ScalarField::Zero(s.n);
    for (int a = 0; a < nf; ++a)
      for (int j = 0; j < nh; ++j)
        pairing += carre_du_champ(s, f_list[a], h_list[j])
                       .cwiseProduct(carre_du_champ(s, g_list[a], h_list[j])) +
                   g_list[a].cwiseProduct(
                       h_form(s, f_list[a], h_list[j], h_list[j]));
    ScalarField gram2 = ScalarField::Zero(s.n);
    for (int j = 0; j < nh; ++j)
      for (int jp = 0; jp < nh; ++jp)
        gram2 += carre_du_champ(s, h_list[j], h_list[jp]).array().square().matrix();
    rep.lhs = pairing.array().square().matrix();
    rep.rhs = rep.mu_density.cwiseProduct(gram2);
    rep.slack = rep.rhs - rep.lhs;
    for (int i = 0; i < s.n; ++i) {
      double scale = std::max({std::abs(rep.lhs(i)), std::abs(rep.rhs(i)),
                               tol::scale_floor});
      if (rep.slack(i) < -tol::exact_class * scale) {
        rep.violation_points.push_back(i);
        rep.violation_mass += s.m(i);
      }
    }
    Section xf = zero_section(ct().reduced);
    for (int a = 0; a < nf; ++a)
      xf = axpy(1.0, xf, 1.0,
                mul_function(g_list[a], differential(ct(), f_list[a])));
    ScalarField x2 = pointwise_norm(xf).array().square().matrix();
    rep.bochner_lhs = 0.5 * apply_generator(s, x2);
    ScalarField cres;
    TensorSection cv = second_order().covariant_derivative(xf, &cres);
    Section lap = hodge_->hodge_laplacian(1, xf);
    rep.bochner_rhs =
        hs_dot(cv, cv) - dual_pairing(xf, lap) + k * x2;
    for (int i = 0; i < s.n; ++i) {
      double scale = std::max({std::abs(rep.bochner_lhs(i)),
                               std::abs(rep.bochner_rhs(i)), tol::scale_floor});
      double allow = tol::exact_class * scale + 10.0 * cres(i) * scale;
      if (rep.bochner_lhs(i) < rep.bochner_rhs(i) - allow) {
        rep.bochner_violations.push_back(i);
        rep.bochner_violation_mass += s.m(i);
      }
    }
    return rep;
  }

 private:
  void require_vector(const Section& v, const char* what) const {
    require_section(v, what);
    if (v.bundle != ct().reduced)
      throw usage_error(std::string(what) +
                        ": section is not a vector field of this space");
  }

  std::shared_ptr<const HodgeComplex> hodge_;
};

// Deterministic sample fields for bound reports: projected gradients of the
// lowest nonconstant eigenfunctions, every other one scaled by the first
// eigenfunction as a cutoff so the family is not gradient-only.
inline std::vector<Section> auto_sample_fields(const SecondOrder& so,
                                               int count = 4,
                                               std::uint64_t seed = 13) {
  if (count < 1) throw usage_error("auto_sample_fields: count must be >= 1");
  const auto& c = so.ct();
  const auto& s = *c.space;
  EigenFunctions eig = laplacian_eigenfunctions(s, std::min(s.n, count + 2), seed);
  std::vector<Section> out;
  ScalarField cutoff;
  for (int k = 0; k < count; ++k) {
    int col = std::min(k + 1, static_cast<int>(eig.fields.cols()) - 1);
    ScalarField f = eig.fields.col(col);
    Section x = differential_projected(c, f);
    if (k == 0) {
      double peak = f.cwiseAbs().maxCoeff();
      cutoff = ScalarField::Ones(s.n) + f / std::max(peak, tol::scale_floor);
    }
    if (k % 2 == 1) x = mul_function(cutoff, x);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace gammacalc
