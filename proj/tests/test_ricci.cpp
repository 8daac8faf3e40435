// Ricci operators: symmetry and bilinearity of the density, the exact
// integrated identity, bound reports, the dimensional correction, and the
// Cauchy-Schwarz consequence of the mu-measure density.

#include <catch_amalgamated.hpp>

#include <cmath>

#include "gammacalc/builders.hpp"
#include "gammacalc/ricci.hpp"

using namespace gammacalc;

namespace {

struct Ctx {
  std::shared_ptr<const FiniteMMSpace> sp;
  std::shared_ptr<const SecondOrder> so;
  std::shared_ptr<const HodgeComplex> hc;
};

Ctx make_ctx(const FiniteMMSpace& raw, const Mat& gens) {
  Ctx c;
  c.sp = std::make_shared<const FiniteMMSpace>(raw);
  c.so = std::make_shared<const SecondOrder>(build_cotangent(c.sp, gens));
  c.hc = std::make_shared<const HodgeComplex>(c.so);
  return c;
}

const Ctx& torus8() {
  static Ctx c = [] {
    FiniteMMSpace t = grid_torus(2, 8);
    return make_ctx(t, t.coord_fields);
  }();
  return c;
}

}  // namespace

TEST_CASE("ricci density is symmetric and bilinear") {
  const Ctx& c = torus8();
  RicciOps ops(c.hc);
  const auto& s = *c.sp;
  Section x = mul_function(ScalarField::Ones(s.n) + 0.3 * s.coord_fields.col(2),
                           differential_projected(c.so->ct(), s.coord_fields.col(0)));
  Section y = differential_projected(c.so->ct(), s.coord_fields.col(3));
  Section z = differential_projected(c.so->ct(), s.coord_fields.col(1));

  RicciField rxy = ops.ricci(x, y);
  RicciField ryx = ops.ricci(y, x);
  REQUIRE((rxy.density - ryx.density).cwiseAbs().maxCoeff() <= 1e-12);

  RicciField rlin = ops.ricci(axpy(1.0, x, 2.0, z), y);
  RicciField rz = ops.ricci(z, y);
  double scale = rxy.density.cwiseAbs().maxCoeff() +
                 rz.density.cwiseAbs().maxCoeff() + 1.0;
  REQUIRE((rlin.density - rxy.density - 2.0 * rz.density).cwiseAbs().maxCoeff() <=
          1e-11 * scale);

  // Scalars are not vector fields of the complex.
  Section bad = zero_section(c.hc->form_bundle(0));
  REQUIRE_THROWS_AS(ops.ricci(bad, y), usage_error);
}

TEST_CASE("integrated ricci identity holds to machine precision") {
  const Ctx& c = torus8();
  RicciOps ops(c.hc);
  const auto& s = *c.sp;
  Section x = mul_function(ScalarField::Ones(s.n) + 0.3 * s.coord_fields.col(2),
                           differential_projected(c.so->ct(), s.coord_fields.col(0)));
  RicciTotalCheck chk = ops.ricci_total_check(x, x);
  REQUIRE(chk.scale > 1.0);
  REQUIRE(chk.residual <= 1e-10 * chk.scale);

  // A one-dimensional chain with a bespoke frame exercises mixed fiber ranks.
  FiniteMMSpace p4raw = path_space(4);
  Mat gens(4, 2);
  gens.col(0) << 0, 1, 2, 3;
  gens.col(1) << 0, 0, 1, 3;
  Ctx p4 = make_ctx(p4raw, gens);
  RicciOps ops4(p4.hc);
  Section u = differential_projected(p4.so->ct(), gens.col(0));
  Section v = differential_projected(p4.so->ct(), gens.col(1));
  RicciTotalCheck chk4 = ops4.ricci_total_check(u, v);
  REQUIRE(chk4.residual <= 1e-10 * chk4.scale);
}

TEST_CASE("bound report carries per-field energies and the worst ratio") {
  const Ctx& c = torus8();
  RicciOps ops(c.hc);
  std::vector<Section> fields = auto_sample_fields(*c.so, 3);
  REQUIRE(fields.size() == 3);

  // The sampler is deterministic for a fixed seed.
  std::vector<Section> again = auto_sample_fields(*c.so, 3);
  for (size_t a = 0; a < fields.size(); ++a)
    for (int i = 0; i < c.sp->n; ++i)
      REQUIRE((fields[a].coeffs[i] - again[a].coeffs[i]).cwiseAbs().maxCoeff() ==
              0.0);

  RicciBoundReport rep = ops.ricci_bound_report(fields, 0.0);
  REQUIRE(rep.k_reference == 0.0);
  REQUIRE(rep.fields.size() == 3);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& e : rep.fields) {
    REQUIRE(e.field_norm2 > 0.0);
    REQUIRE(e.energy_c >= 0.0);
    REQUIRE(e.energy_h >= 0.0);
    REQUIRE(std::isfinite(e.k_ric));
    // The report's slacks are consistent with its own totals.
    REQUIRE(e.tv_slack == Catch::Approx(e.tv_bound - e.tv_total).margin(1e-9));
    REQUIRE(e.eh_ec_slack ==
            Catch::Approx(e.energy_h - e.energy_c).margin(1e-9 * (1.0 + e.energy_h)));
    worst = std::min(worst, e.k_ric);
  }
  REQUIRE(rep.k_ric_min == Catch::Approx(worst).margin(1e-12));
  REQUIRE_THROWS_AS(auto_sample_fields(*c.so, 0), usage_error);
}

TEST_CASE("dimensional correction respects the local dimension") {
  const Ctx& c = torus8();
  RicciOps ops(c.hc);
  const auto& s = *c.sp;
  Section x = mul_function(ScalarField::Ones(s.n) + 0.3 * s.coord_fields.col(2),
                           differential_projected(c.so->ct(), s.coord_fields.col(0)));
  Section y = differential_projected(c.so->ct(), s.coord_fields.col(3));

  REQUIRE_THROWS_AS(ops.ricci_n(x, y, -1.0), usage_error);
  // Every fiber here has rank four, so a bound of three is inadmissible.
  REQUIRE_THROWS_AS(ops.ricci_n(x, y, 3.0), usage_error);

  // At N equal to the fiber rank the correction term vanishes identically,
  // and the infinity sentinel reproduces the uncorrected density.
  NRicciReport n4 = ops.ricci_n(x, y, 4.0);
  REQUIRE(n4.r_n.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(n4.violation_mass == 0.0);
  REQUIRE(n4.bochner_gap.minCoeff() > 0.0);
  NRicciReport ninf = ops.ricci_n(x, y, 0.0);
  REQUIRE(ninf.n_param == 0.0);
  REQUIRE((ninf.field.density - ops.ricci(x, y).density).cwiseAbs().maxCoeff() ==
          0.0);

  // The trace of the reconstructed gradient is not the divergence at finite
  // scale; the defect is O(1) and the report must surface it, not hide it.
  REQUIRE(n4.trace_defect_x.cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("mu-measure density satisfies its Cauchy-Schwarz consequence") {
  const Ctx& c = torus8();
  RicciOps ops(c.hc);
  const auto& s = *c.sp;
  KeyLemmaReport rep = ops.key_lemma_report(
      {s.coord_fields.col(0), s.coord_fields.col(3)},
      {ScalarField::Ones(s.n), s.coord_fields.col(1)},
      {s.coord_fields.col(2)}, 0.0);
  REQUIRE(rep.k_used == 0.0);
  REQUIRE(rep.violation_points.empty());
  REQUIRE(rep.violation_mass == 0.0);
  REQUIRE(rep.slack.minCoeff() > 0.0);
  // The torus is curvature-flat, so the rewritten Bochner inequality at
  // K = 0 holds pointwise as well.
  REQUIRE(rep.bochner_violations.empty());
  REQUIRE(rep.bochner_violation_mass == 0.0);

  REQUIRE_THROWS_AS(
      ops.key_lemma_report({s.coord_fields.col(0)}, {}, {s.coord_fields.col(2)},
                           0.0),
      usage_error);
  REQUIRE_THROWS_AS(
      ops.key_lemma_report({s.coord_fields.col(0)},
                           {ScalarField::Ones(s.n)}, {}, 0.0),
      usage_error);
}
