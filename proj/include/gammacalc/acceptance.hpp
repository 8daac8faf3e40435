#pragma once

// Primary acceptance suite: nine self-contained criteria covering the whole
// engine. Every criterion is a pure function of the seed, and the rendered
// report carries no timing or environment data, so two runs with the same
// seed produce byte-identical output; criterion 9 checks exactly that by
// re-running the first eight from scratch. Wall-clock budgets are enforced
// by the test harness, not in here.
//
//   1  exact algebra on random instances at machine tolerance
//   2  frozen values on the three-point path
//   3  cohomology of the flat 2-torus and the 2-sphere by two routes
//   4  curvature lower bounds: flat torus near zero, unit sphere near one
//   5  integrated Hessian bound  int |Hess f|^2 <= int ((Lf)^2 - K Gamma(f))
//   6  first-order convergence of diffusion-class identity residuals
//   7  upwind transport: conservation, compression bound, rotation accuracy
//   8  harmonic 1-forms bounded by the pointwise dimension
//   9  byte-identical reports across repeated runs

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gammacalc/builders.hpp"
#include "gammacalc/flow.hpp"
#include "gammacalc/hodge.hpp"
#include "gammacalc/mesh.hpp"
#include "gammacalc/ricci.hpp"
#include "gammacalc/verify.hpp"

namespace gammacalc {
namespace acceptance {

struct CriterionResult {
  int index = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

// Deterministic number formatting for report text.
inline std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

namespace detail {

inline double rel(double resid, double scale) {
  return std::abs(resid) / std::max(std::abs(scale), tol::scale_floor);
}

// Tracks the worst relative residual seen and which check produced it.
struct Worst {
  double value = 0.0;
  std::string where;
  void add(const std::string& name, double r) {
    if (r > value) {
      value = r;
      where = name;
    }
  }
};

// Connected weighted graph: a ring plus random chords, random conductances
// and masses. m_i L_ij = c_ij is symmetric by construction.
inline SpacePtr random_space(std::mt19937_64& rng) {
  const int n = 8 + static_cast<int>(rng() % 43);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  FiniteMMSpace s;
  s.n = n;
  s.m.resize(n);
  for (int i = 0; i < n; ++i) s.m(i) = unif(rng);
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    edges.insert(std::minmax(i, (i + 1) % n));
  for (int e = 0; e < n / 2; ++e) {
    int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n);
    if (i != j) edges.insert(std::minmax(i, j));
  }
  std::vector<Trip> trips;
  Vec diag = Vec::Zero(n);
  for (const auto& [i, j] : edges) {
    double c = unif(rng);
    trips.emplace_back(i, j, c / s.m(i));
    trips.emplace_back(j, i, c / s.m(j));
    diag(i) -= c / s.m(i);
    diag(j) -= c / s.m(j);
  }
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag(i));
  s.gen.resize(n, n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  s.intrinsic_dim = 1;
  s.label = "random";
  validate_space(s);
  return std::make_shared<const FiniteMMSpace>(std::move(s));
}

inline ScalarField random_field(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  ScalarField f(n);
  for (int i = 0; i < n; ++i) f(i) = nd(rng);
  return f;
}

inline Section random_section(std::mt19937_64& rng, const BundlePtr& b) {
  std::normal_distribution<double> nd;
  Section v = zero_section(b);
  for (auto& c : v.coeffs)
    for (int k = 0; k < c.size(); ++k) c(k) = nd(rng);
  return v;
}

inline std::vector<int> random_assign(std::mt19937_64& rng, int n_from,
                                      int n_to) {
  std::vector<int> a(n_from);
  for (int& x : a) x = static_cast<int>(rng() % n_to);
  return a;
}

}  // namespace detail

class PrimarySuite {
 public:
  explicit PrimarySuite(std::uint64_t seed = 1) : seed_(seed) {}

  static constexpr int criterion_count = 9;

  static const char* criterion_name(int k) {
    static const char* names[criterion_count] = {
        "exact-algebra",    "path3-values",  "cohomology",
        "curvature-bounds", "hessian-bound", "convergence-orders",
        "transport",        "dimension-bound", "determinism"};
    if (k < 1 || k > criterion_count)
      throw usage_error("acceptance: criterion index out of range");
    return names[k - 1];
  }

  CriterionResult run_criterion(int k) {
    switch (k) {
      case 1: return c1_exact_algebra();
      case 2: return c2_path3_values();
      case 3: return c3_cohomology();
      case 4: return c4_curvature_bounds();
      case 5: return c5_hessian_bound();
      case 6: return c6_convergence_orders();
      case 7: return c7_transport();
      case 8: return c8_dimension_bound();
      case 9: return c9_determinism(nullptr);
      default:
        throw usage_error("acceptance: criterion index out of range");
    }
  }

  std::vector<CriterionResult> run_all() {
    std::vector<CriterionResult> rows;
    for (int k = 1; k <= 8; ++k) rows.push_back(run_criterion(k));
    rows.push_back(c9_determinism(&rows));
    return rows;
  }

 private:
  std::uint64_t seed_;

  // Shared contexts; built once, reused by criteria 3, 4, 5 and 8.
  std::shared_ptr<const SecondOrder> torus32_, sphere3_;
  std::vector<HodgeReport> torus_reports_, sphere_reports_;
  double k_torus32_ = std::numeric_limits<double>::quiet_NaN();
  double k_sphere3_ = std::numeric_limits<double>::quiet_NaN();

  static std::shared_ptr<const SecondOrder> coord_context(FiniteMMSpace s) {
    auto sp = std::make_shared<const FiniteMMSpace>(std::move(s));
    CotangentPtr ct = build_cotangent(sp, sp->coord_fields);
    return std::make_shared<const SecondOrder>(std::move(ct));
  }

  const SecondOrder& torus32() {
    if (!torus32_) torus32_ = coord_context(grid_torus(2, 32));
    return *torus32_;
  }

  const SecondOrder& sphere3() {
    if (!sphere3_) sphere3_ = coord_context(icosphere(3));
    return *sphere3_;
  }

  double k_star_of(const FiniteMMSpace& s, double& cache) {
    if (std::isnan(cache)) cache = curvature_estimate(s, 0.0, s.n).k_star;
    return cache;
  }

  // ---- criterion 1 ---------------------------------------------------------

  CriterionResult c1_exact_algebra() {
    detail::Worst worst;
    const int instances = 200;
    for (int inst = 0; inst < instances; ++inst) {
      std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ULL + inst);
      SpacePtr sp = detail::random_space(rng);
      const auto& s = *sp;
      const int n = s.n;
      const int r = 2 + inst % 3;
      Mat gens(n, r);
      for (int a = 0; a < r; ++a) gens.col(a) = detail::random_field(rng, n);
      CotangentPtr ct = build_cotangent(sp, gens);

      ScalarField f = detail::random_field(rng, n);
      ScalarField g = detail::random_field(rng, n);
      ScalarField w = detail::random_field(rng, n);

      // Integration by parts and bilinearity of the carre du champ.
      {
        double lhs = integrate(s, carre_du_champ(s, f, g));
        double rhs = -inner_m(s, f, apply_generator(s, g));
        double scale = integrate(s, carre_du_champ(s, f, f)) +
                       integrate(s, carre_du_champ(s, g, g)) + 1.0;
        worst.add("gamma-parts", detail::rel(lhs - rhs, scale));
        Vec polar = carre_du_champ(s, f + g, f + g) -
                    carre_du_champ(s, f, f) - carre_du_champ(s, g, g) -
                    2.0 * carre_du_champ(s, f, g);
        worst.add("gamma-polarization",
                  detail::rel(polar.cwiseAbs().maxCoeff(), scale));
      }

      // Module axioms on reduced 1-forms.
      Section v = differential_projected(*ct, f);
      Section u = differential_projected(*ct, g);
      {
        ScalarField nv = pointwise_norm(v), nu = pointwise_norm(u);
        double scale = nv.maxCoeff() + nu.maxCoeff() + 1.0;
        Section fv = mul_function(w, v);
        ScalarField nfv = pointwise_norm(fv);
        double md = (nfv - w.cwiseAbs().cwiseProduct(nv)).cwiseAbs().maxCoeff();
        worst.add("module-homogeneity", detail::rel(md, scale));

        ScalarField np = pointwise_norm(axpy(1.0, v, 1.0, u));
        ScalarField nm = pointwise_norm(axpy(1.0, v, -1.0, u));
        Vec para = np.cwiseProduct(np) + nm.cwiseProduct(nm) -
                   2.0 * nv.cwiseProduct(nv) - 2.0 * nu.cwiseProduct(nu);
        worst.add("parallelogram",
                  detail::rel(para.cwiseAbs().maxCoeff(), scale * scale));

        double mn = module_norm(v);
        double in = integrate(s, nv.cwiseProduct(nv));
        worst.add("norm-consistency", detail::rel(mn * mn - in, in + 1.0));

        Vec cs = dual_pairing(v, u).cwiseAbs() - nv.cwiseProduct(nu);
        worst.add("cauchy-schwarz",
                  detail::rel(std::max(cs.maxCoeff(), 0.0), scale * scale));
      }

      // Wedge alternation in the exterior square.
      {
        BundlePtr ext2 = exterior_power(ct->reduced, 2);
        Section vw = wedge({v, u}, ext2);
        Section uv = wedge({u, v}, ext2);
        Section vv = wedge({v, v}, ext2);
        double scale = module_norm(vw) + 1.0;
        worst.add("wedge-antisymmetry",
                  detail::rel(module_norm(axpy(1.0, vw, 1.0, uv)), scale));
        worst.add("wedge-alternation",
                  detail::rel(module_norm(vv), scale));
      }

      // Exterior calculus and Ricci assembly on every other instance.
      if (inst % 2 == 0) {
        auto so = std::make_shared<const SecondOrder>(ct);
        auto h = std::make_shared<const HodgeComplex>(so);
        Section f0 = h->scalar_to_form(f);
        Section eta = detail::random_section(rng, h->form_bundle(1));
        double lhs = h->weighted_dot(1, h->exterior_derivative(0, f0), eta);
        double rhs = h->weighted_dot(0, f0, h->codifferential(1, eta));
        double scale = std::abs(lhs) + std::abs(rhs) +
                       module_norm(f0) * module_norm(eta) + 1.0;
        worst.add("adjoint-d0", detail::rel(lhs - rhs, scale));
        if (h->max_degree() >= 2 && h->form_space_dim(2) > 0) {
          Section omega = detail::random_section(rng, h->form_bundle(1));
          Section xi = detail::random_section(rng, h->form_bundle(2));
          double l2 = h->weighted_dot(2, h->exterior_derivative(1, omega), xi);
          double r2 = h->weighted_dot(1, omega, h->codifferential(2, xi));
          double sc2 = std::abs(l2) + std::abs(r2) +
                       module_norm(omega) * module_norm(xi) + 1.0;
          worst.add("adjoint-d1", detail::rel(l2 - r2, sc2));
        }

        RicciOps ric(h);
        Section x = v;
        Section y = mul_function(w, u);
        Section z = differential_projected(*ct, w);
        RicciField rxy = ric.ricci(x, y);
        RicciField ryx = ric.ricci(y, x);
        double rs = rxy.density.cwiseAbs().maxCoeff() + 1.0;
        worst.add("ricci-symmetry",
                  detail::rel((rxy.density - ryx.density).cwiseAbs().maxCoeff(),
                              rs));
        const double a = 0.75, b = -1.5;
        RicciField rlin = ric.ricci(axpy(a, x, b, z), y);
        RicciField rz = ric.ricci(z, y);
        Vec lin = rlin.density - a * rxy.density - b * rz.density;
        double ls = rxy.density.cwiseAbs().maxCoeff() +
                    rz.density.cwiseAbs().maxCoeff() + 1.0;
        worst.add("ricci-bilinearity",
                  detail::rel(lin.cwiseAbs().maxCoeff(), ls));
      }

      // Pullback functoriality through a chain of random point maps.
      if (inst % 5 == 0) {
        SpacePtr mid = detail::random_space(rng);
        SpacePtr top = detail::random_space(rng);
        PointMap psi = make_point_map(sp, mid,
                                      detail::random_assign(rng, n, mid->n));
        PointMap phi = make_point_map(mid, top,
                                      detail::random_assign(rng, mid->n, top->n));
        FormExpression e;
        e.weight = {detail::random_field(rng, top->n),
                    detail::random_field(rng, top->n)};
        e.func = {detail::random_field(rng, top->n),
                  detail::random_field(rng, top->n)};
        FormExpression once = compose_expression(compose(phi, psi), e);
        FormExpression twice = compose_expression(psi, compose_expression(phi, e));
        Mat eval_gens(n, 2);
        eval_gens.col(0) = once.func[0];
        eval_gens.col(1) = once.func[1];
        CotangentPtr ct_eval = build_cotangent(sp, eval_gens);
        Section sa = evaluate_expression(*ct_eval, once);
        Section sb = evaluate_expression(*ct_eval, twice);
        double scale = module_norm(sa) + 1.0;
        worst.add("pullback-functoriality",
                  detail::rel(module_norm(axpy(1.0, sa, -1.0, sb)), scale));
      }
    }

    CriterionResult res;
    res.index = 1;
    res.name = criterion_name(1);
    res.passed = worst.value <= tol::exact_class;
    res.detail = std::to_string(instances) + " instances, worst relative " +
                 num(worst.value) + " (" + worst.where + "), tolerance " +
                 num(tol::exact_class);
    return res;
  }

  // ---- criterion 2 ---------------------------------------------------------

  CriterionResult c2_path3_values() {
    auto sp = std::make_shared<const FiniteMMSpace>(path_space(3));
    const auto& s = *sp;
    Mat gens(3, 2);
    gens.col(0) << 0, 1, 2;
    gens.col(1) << 0, 0, 1;
    CotangentPtr ct = build_cotangent(sp, gens);
    ScalarField f(3);
    f << 0, 1, 3;

    Vec gamma = carre_du_champ(s, f, f);
    Vec gamma_ref(3);
    gamma_ref << 0.5, 2.5, 2.0;
    double d_gamma = (gamma - gamma_ref).cwiseAbs().maxCoeff();

    Vec lf = apply_generator(s, f);
    Vec lf_ref(3);
    lf_ref << 1.0, 1.0, -2.0;
    double d_lf = (lf - lf_ref).cwiseAbs().maxCoeff();

    double d_int = std::abs(integrate(s, gamma) - 5.0);

    Eigen::VectorXi dim_ref(3);
    dim_ref << 1, 2, 1;
    bool dims_ok = (ct->dim_loc.array() == dim_ref.array()).all();

    const double tolerance = 1e-10;
    CriterionResult res;
    res.index = 2;
    res.name = criterion_name(2);
    res.passed = dims_ok && d_gamma <= tolerance && d_lf <= tolerance &&
                 d_int <= tolerance;
    res.detail = "gamma diff " + num(d_gamma) + ", Lf diff " + num(d_lf) +
                 ", integral diff " + num(d_int) + ", dim_loc " +
                 std::string(dims_ok ? "(1,2,1)" : "mismatch") +
                 ", tolerance " + num(tolerance);
    return res;
  }

  // ---- criterion 3 ---------------------------------------------------------

  void compute_cohomology() {
    if (!torus_reports_.empty()) return;
    auto ht = std::make_shared<const HodgeComplex>(torus32_);
    torus_reports_.push_back(ht->harmonic_basis(0, 1));
    torus_reports_.push_back(ht->harmonic_basis(1, 2));
    torus_reports_.push_back(ht->harmonic_basis(2, 1));
    auto hs = std::make_shared<const HodgeComplex>(sphere3_);
    sphere_reports_.push_back(hs->harmonic_basis(0, 1));
    sphere_reports_.push_back(hs->harmonic_basis(1, 1));
  }

  CriterionResult c3_cohomology() {
    torus32();
    sphere3();
    compute_cohomology();
    const int want[3] = {1, 2, 1};
    bool ok = true;
    std::ostringstream d;
    d << "torus betti";
    for (int k = 0; k < 3; ++k) {
      const auto& rep = torus_reports_[k];
      ok = ok && !rep.inconclusive && rep.betti_eigen == want[k] &&
           rep.betti_rank == want[k] && rep.gap_ratio >= tol::gap_ratio_min;
      d << " " << rep.betti_eigen << "/" << rep.betti_rank << " (gap "
        << num(rep.gap_ratio, 3) << ")";
    }
    const auto& s0 = sphere_reports_[0];
    const auto& s1 = sphere_reports_[1];
    ok = ok && !s0.inconclusive && s0.betti_eigen == 1 && s0.betti_rank == 1;
    ok = ok && !s1.inconclusive && s1.betti_eigen == 0 && s1.betti_rank == 0 &&
         s1.gap_ratio >= tol::gap_ratio_min;
    d << "; sphere H0 " << s0.betti_eigen << "/" << s0.betti_rank << " H1 "
      << s1.betti_eigen << "/" << s1.betti_rank << " (gap "
      << num(s1.gap_ratio, 3) << ")";

    CriterionResult res;
    res.index = 3;
    res.name = criterion_name(3);
    res.passed = ok;
    res.detail = d.str();
    return res;
  }

  // ---- criterion 4 ---------------------------------------------------------

  CriterionResult c4_curvature_bounds() {
    std::vector<int> tres = {16, 32, 64};
    std::vector<double> kt;
    for (int r : tres) {
      if (r == 32) {
        kt.push_back(k_star_of(*torus32().ct().space, k_torus32_));
      } else {
        FiniteMMSpace s = grid_torus(2, r);
        kt.push_back(curvature_estimate(s, 0.0, s.n).k_star);
      }
    }
    // Monotonicity is checked above an absolute floor: the exact estimates on
    // flat tori land within solver fuzz of zero, where ordering is noise.
    const double floor = 1e-6;
    bool torus_ok = std::abs(kt[2]) <= 0.1 &&
                    std::abs(kt[1]) <= std::abs(kt[0]) + floor &&
                    std::abs(kt[2]) <= std::abs(kt[1]) + floor;

    std::vector<int> subs = {2, 3, 4};
    std::vector<double> ks;
    for (int sd : subs) {
      if (sd == 3) {
        ks.push_back(k_star_of(*sphere3().ct().space, k_sphere3_));
      } else {
        FiniteMMSpace s = icosphere(sd);
        ks.push_back(curvature_estimate(s, 0.0, s.n).k_star);
      }
    }
    bool sphere_ok = ks[2] >= 0.75 && ks[2] <= 1.25 &&
                     std::abs(ks[1] - 1.0) <= std::abs(ks[0] - 1.0) + 1e-12 &&
                     std::abs(ks[2] - 1.0) <= std::abs(ks[1] - 1.0) + 1e-12;

    CriterionResult res;
    res.index = 4;
    res.name = criterion_name(4);
    res.passed = torus_ok && sphere_ok;
    res.detail = "torus K* " + num(kt[0]) + ", " + num(kt[1]) + ", " +
                 num(kt[2]) + " at res 16/32/64; sphere K* " + num(ks[0]) +
                 ", " + num(ks[1]) + ", " + num(ks[2]) + " at subdiv 2/3/4";
    return res;
  }

  // ---- criterion 5 ---------------------------------------------------------

  CriterionResult c5_hessian_bound() {
    struct Case {
      const SecondOrder* so;
      double k;
      const char* tag;
    };
    torus32();
    sphere3();
    Case cases[2] = {
        {&torus32(), k_star_of(*torus32().ct().space, k_torus32_), "torus"},
        {&sphere3(), k_star_of(*sphere3().ct().space, k_sphere3_), "sphere"}};
    const double slack = 0.05, t_reg = 0.1;
    double worst_margin = -std::numeric_limits<double>::infinity();
    bool ok = true;
    for (const auto& c : cases) {
      const auto& s = *c.so->ct().space;
      std::mt19937_64 rng(seed_ * 0x2545F4914F6CDD1DULL +
                          (c.so == &torus32() ? 11 : 29));
      for (int t = 0; t < 20; ++t) {
        ScalarField f = heat_flow(s, detail::random_field(rng, s.n), t_reg);
        Hessian hess = c.so->hessian(f);
        double lhs = integrate(s, hs_dot(hess.tensor, hess.tensor));
        Vec lf = apply_generator(s, f);
        Vec gff = carre_du_champ(s, f, f);
        double rhs = inner_m(s, lf, lf) - c.k * integrate(s, gff);
        double allow = slack * std::max(std::abs(lhs), std::abs(rhs));
        double margin = (lhs - rhs) / std::max(std::abs(rhs), tol::scale_floor);
        worst_margin = std::max(worst_margin, margin);
        ok = ok && lhs <= rhs + allow;
      }
    }
    CriterionResult res;
    res.index = 5;
    res.name = criterion_name(5);
    res.passed = ok;
    res.detail = "40 heat-regularized fields, worst (lhs-rhs)/rhs " +
                 num(worst_margin) + ", slack " + num(slack);
    return res;
  }

  // ---- criterion 6 ---------------------------------------------------------

  CriterionResult c6_convergence_orders() {
    std::vector<RuleId> rules = {
        RuleId::chain_rule,   RuleId::leibniz_d,       RuleId::grad_product,
        RuleId::torsion_free, RuleId::metric_compat,   RuleId::d_squared,
        RuleId::hess_leibniz, RuleId::hodge_sign,      RuleId::ricci_tensoriality,
        RuleId::flow_derivative};
    StudyTable table = convergence_study(
        [](int res) { return coord_context(grid_torus(2, res)); },
        {8, 16, 32, 64}, rules);
    bool ok = true;
    std::ostringstream d;
    for (size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      bool row_ok = row.exact_floor || row.order >= 0.9;
      ok = ok && row_ok;
      if (i) d << ", ";
      d << row.rule << " "
        << (row.exact_floor ? std::string("exact") : num(row.order, 3));
    }
    CriterionResult res;
    res.index = 6;
    res.name = criterion_name(6);
    res.passed = ok;
    res.detail = "fitted orders: " + d.str();
    return res;
  }

  // ---- criterion 7 ---------------------------------------------------------

  CriterionResult c7_transport() {
    std::ostringstream d;
    bool ok = true;
    double worst_drift = 0.0;

    // Divergence-free translation field on the torus: the compression bound
    // is exactly 1 and upwind transport never raises the maximum.
    {
      auto so = coord_context(grid_torus(2, 64));
      CotangentPtr ct = so->ct_ptr();
      const auto& s = *ct->space;
      Section dsin = differential(*ct, ct->gens.col(1));
      Section dcos = differential(*ct, ct->gens.col(0));
      Section x = axpy(1.0, mul_function(ct->gens.col(0), dsin), -1.0,
                       mul_function(ct->gens.col(1), dcos));
      ScalarField rho0 = ScalarField::Ones(s.n) + 0.5 * ct->gens.col(0);
      double rate = gammacalc::detail::transport_op(*ct, x).max_rate;
      const double horizon = 0.5;
      int steps = static_cast<int>(std::ceil(horizon * rate / 0.85)) + 1;
      DensityCurve curve = lagrangian_flow(ct, {x}, rho0, horizon, steps);
      double ratio = 0.0;
      for (size_t k = 0; k < curve.compression.size(); ++k)
        ratio = std::max(ratio, curve.compression[k] / curve.bound[k]);
      ok = ok && ratio <= 1.05;
      worst_drift = std::max(worst_drift, curve.max_mass_drift);
      d << "divfree comp/bound " << num(ratio);

      // Gradient field on the same torus.
      ScalarField pot = 0.3 * ct->gens.col(0);
      Section xg = differential(*ct, pot);
      double rate_g = gammacalc::detail::transport_op(*ct, xg).max_rate;
      const double hg = 0.05;
      int steps_g = static_cast<int>(std::ceil(hg * rate_g / 0.85)) + 1;
      DensityCurve cg = lagrangian_flow(ct, {xg}, rho0, hg, steps_g);
      double ratio_g = 0.0;
      for (size_t k = 0; k < cg.compression.size(); ++k)
        ratio_g = std::max(ratio_g, cg.compression[k] / cg.bound[k]);
      ok = ok && ratio_g <= 1.05;
      worst_drift = std::max(worst_drift, cg.max_mass_drift);
      d << ", gradient comp/bound " << num(ratio_g);
    }

    // Unit rotation on the 64-cycle over one full period.
    {
      auto sp = std::make_shared<const FiniteMMSpace>(cycle_space(64));
      const auto& s = *sp;
      Mat gens(s.n, 2);
      for (int i = 0; i < s.n; ++i) {
        double th = 2.0 * M_PI * i / s.n;
        gens(i, 0) = std::cos(th);
        gens(i, 1) = std::sin(th);
      }
      CotangentPtr ct = build_cotangent(sp, gens);
      Section x = axpy(1.0, mul_function(ct->gens.col(0),
                                         differential(*ct, ct->gens.col(1))),
                       -1.0, mul_function(ct->gens.col(1),
                                          differential(*ct, ct->gens.col(0))));
      ScalarField rho0 = ScalarField::Ones(s.n) + ct->gens.col(0);
      double u = std::sin(2.0 * M_PI / s.n);
      double period = s.n / u;
      double rate = gammacalc::detail::transport_op(*ct, x).max_rate;
      int steps = static_cast<int>(std::ceil(period * rate / 0.89)) + 1;
      DensityCurve curve = lagrangian_flow(ct, {x}, rho0, period, steps);
      double l1 = integrate(s, (curve.rho.back() - rho0).cwiseAbs()) /
                  integrate(s, rho0);
      ok = ok && l1 <= 0.15;
      worst_drift = std::max(worst_drift, curve.max_mass_drift);
      d << ", rotation L1 error " << num(l1);
    }

    ok = ok && worst_drift <= tol::flow_mass;
    d << ", worst mass drift " << num(worst_drift);

    CriterionResult res;
    res.index = 7;
    res.name = criterion_name(7);
    res.passed = ok;
    res.detail = d.str();
    return res;
  }

  // ---- criterion 8 ---------------------------------------------------------

  CriterionResult c8_dimension_bound() {
    torus32();
    sphere3();
    compute_cohomology();
    int b1_t = torus_reports_[1].betti_rank;
    int b1_s = sphere_reports_[1].betti_rank;
    int dim_t = torus32().ct().dim_loc.minCoeff();
    int dim_s = sphere3().ct().dim_loc.minCoeff();
    double kt = k_star_of(*torus32().ct().space, k_torus32_);
    double ksp = k_star_of(*sphere3().ct().space, k_sphere3_);
    bool ok = b1_t <= dim_t && b1_s <= dim_s;
    CriterionResult res;
    res.index = 8;
    res.name = criterion_name(8);
    res.passed = ok;
    res.detail = "torus dim H1 " + std::to_string(b1_t) + " <= " +
                 std::to_string(dim_t) + " (K* " + num(kt) + "); sphere dim H1 " +
                 std::to_string(b1_s) + " <= " + std::to_string(dim_s) +
                 " (K* " + num(ksp) + ")";
    return res;
  }

  // ---- criterion 9 ---------------------------------------------------------

  CriterionResult c9_determinism(const std::vector<CriterionResult>* baseline) {
    std::vector<CriterionResult> first;
    if (baseline) {
      first.assign(baseline->begin(), baseline->begin() + 8);
    } else {
      PrimarySuite p1(seed_);
      for (int k = 1; k <= 8; ++k) first.push_back(p1.run_criterion(k));
    }
    PrimarySuite p2(seed_);
    std::vector<CriterionResult> second;
    for (int k = 1; k <= 8; ++k) second.push_back(p2.run_criterion(k));
    std::string ra = render_rows(first), rb = render_rows(second);
    CriterionResult res;
    res.index = 9;
    res.name = criterion_name(9);
    res.passed = (ra == rb);
    res.detail = res.passed
                     ? "two full runs rendered " +
                           std::to_string(ra.size()) + " identical bytes"
                     : "reports differ";
    return res;
  }

 public:
  static std::string render_rows(const std::vector<CriterionResult>& rows) {
    std::ostringstream os;
    for (const auto& r : rows)
      os << "criterion " << r.index << " " << std::left << std::setw(20)
         << r.name << (r.passed ? " PASS  " : " FAIL  ") << r.detail << "\n";
    return os.str();
  }
};

inline std::string render_report(const std::vector<CriterionResult>& rows,
                                 std::uint64_t seed) {
  std::ostringstream os;
  os << "gamma-calc primary acceptance suite, seed " << seed << "\n";
  os << PrimarySuite::render_rows(rows);
  int passed = 0;
  for (const auto& r : rows) passed += r.passed ? 1 : 0;
  os << "result " << passed << "/" << rows.size() << " criteria passed\n";
  return os.str();
}

}  // namespace acceptance
}  // namespace gammacalc
