// Upwind Lagrangian transport: conservation, positivity, the CFL guard,
// the exponential compression bound, and the weak derivative identity.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gammacalc/builders.hpp"
#include "gammacalc/flow.hpp"

using namespace gammacalc;

namespace {

struct FlowCtx {
  std::shared_ptr<const FiniteMMSpace> sp;
  CotangentPtr ct;
};

FlowCtx torus8() {
  FlowCtx c;
  c.sp = std::make_shared<const FiniteMMSpace>(grid_torus(2, 8));
  c.ct = build_cotangent(c.sp, c.sp->coord_fields);
  return c;
}

// Angular field of one torus factor: c grad(s) - s grad(c) translates along
// the axis and is divergence-free up to solver fuzz.
Section angular(const CotangentBundle& ct, int axis) {
  return axpy(1.0, mul_function(ct.gens.col(2 * axis),
                                differential(ct, ct.gens.col(2 * axis + 1))),
              -1.0, mul_function(ct.gens.col(2 * axis + 1),
                                 differential(ct, ct.gens.col(2 * axis))));
}

int cfl_steps(const CotangentBundle& ct, const Section& x, double horizon,
              double target) {
  double rate = detail::transport_op(ct, x).max_rate;
  return static_cast<int>(std::ceil(horizon * rate / target)) + 1;
}

}  // namespace

TEST_CASE("transport conserves mass and keeps the density nonnegative") {
  FlowCtx c = torus8();
  ScalarField rho0 = ScalarField::Ones(c.sp->n) + 0.5 * c.ct->gens.col(0);
  Section x = differential(*c.ct, 0.25 * (c.ct->gens.col(0) + c.ct->gens.col(2)));
  int steps = cfl_steps(*c.ct, x, 0.2, 0.5);
  DensityCurve curve = lagrangian_flow(c.ct, {x}, rho0, 0.2, steps);

  REQUIRE(curve.times.size() == static_cast<size_t>(steps) + 1);
  REQUIRE(curve.rho.size() == curve.times.size());
  REQUIRE(curve.cfl <= 0.9);
  REQUIRE(curve.max_mass_drift <= 1e-12);
  double mass0 = curve.mass.front();
  for (size_t k = 0; k < curve.rho.size(); ++k) {
    REQUIRE(curve.rho[k].minCoeff() >= 0.0);
    REQUIRE(curve.mass[k] == Catch::Approx(mass0).epsilon(1e-12));
    // The monotone scheme stays under the exponential divergence bound.
    REQUIRE(curve.compression[k] <= curve.bound[k] * (1.0 + 1e-12));
  }
}

TEST_CASE("divergence-free transport cannot raise the maximum") {
  FlowCtx c = torus8();
  Section x = angular(*c.ct, 0);
  REQUIRE(divergence(*c.ct, x).cwiseAbs().maxCoeff() <= 1e-10);
  ScalarField rho0 = ScalarField::Ones(c.sp->n) + 0.5 * c.ct->gens.col(0);
  int steps = cfl_steps(*c.ct, x, 0.5, 0.85);
  DensityCurve curve = lagrangian_flow(c.ct, {x}, rho0, 0.5, steps);
  for (size_t k = 0; k < curve.compression.size(); ++k) {
    REQUIRE(curve.bound[k] <= 1.0 + 1e-8);
    REQUIRE(curve.compression[k] <= 1.0 + 1e-12);
  }
  REQUIRE(curve.max_mass_drift <= 1e-12);
}

TEST_CASE("rotation on the ring returns to the initial profile") {
  auto sp = std::make_shared<const FiniteMMSpace>(cycle_space(16));
  Mat gens(sp->n, 2);
  for (int i = 0; i < sp->n; ++i) {
    double th = 2.0 * M_PI * i / sp->n;
    gens(i, 0) = std::cos(th);
    gens(i, 1) = std::sin(th);
  }
  CotangentPtr ct = build_cotangent(sp, gens);
  Section x = axpy(1.0, mul_function(ct->gens.col(0),
                                     differential(*ct, ct->gens.col(1))),
                   -1.0, mul_function(ct->gens.col(1),
                                      differential(*ct, ct->gens.col(0))));
  ScalarField rho0 = ScalarField::Ones(sp->n) + ct->gens.col(0);
  // Pointwise speed of the angular field is sin(2 pi / n), so one period of
  // the embedded rotation takes n / sin(2 pi / n) time units.
  double period = sp->n / std::sin(2.0 * M_PI / sp->n);
  int steps = cfl_steps(*ct, x, period, 0.89);
  DensityCurve curve = lagrangian_flow(ct, {x}, rho0, period, steps);
  double l1 = integrate(*sp, (curve.rho.back() - rho0).cwiseAbs()) /
              integrate(*sp, rho0);
  REQUIRE(l1 < 0.15);
  REQUIRE(curve.max_mass_drift <= 1e-12);
}

TEST_CASE("CFL guard and input validation reject bad flows") {
  FlowCtx c = torus8();
  ScalarField rho0 = ScalarField::Ones(c.sp->n);
  Section x = differential(*c.ct, c.ct->gens.col(0));

  // One step over a long horizon exceeds dt * rate = 0.9; the error names
  // the number of steps that would be admissible.
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {x}, rho0, 50.0, 1),
                    computation_error);
  REQUIRE_THROWS_WITH(lagrangian_flow(c.ct, {x}, rho0, 50.0, 1),
                      Catch::Matchers::ContainsSubstring("steps"));

  ScalarField neg = rho0;
  neg(3) = -0.5;
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {x}, neg, 0.1, 10), usage_error);
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {x}, rho0, -1.0, 10), usage_error);
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {x}, rho0, 0.1, 0), usage_error);
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {}, rho0, 0.1, 10), usage_error);
  REQUIRE_THROWS_AS(lagrangian_flow(c.ct, {x, x}, rho0, 0.1, 10), usage_error);
  REQUIRE_THROWS_AS(
      lagrangian_flow(c.ct, {x}, ScalarField::Zero(c.sp->n), 0.1, 10),
      usage_error);
  REQUIRE_THROWS_AS(lagrangian_flow(nullptr, {x}, rho0, 0.1, 10), usage_error);
}

TEST_CASE("weak derivative identity holds at the scheme's spatial floor") {
  FlowCtx c = torus8();
  ScalarField rho0 = ScalarField::Ones(c.sp->n) + 0.5 * c.ct->gens.col(0);
  Section x = differential(*c.ct, 0.25 * (c.ct->gens.col(0) + c.ct->gens.col(2)));
  int steps = cfl_steps(*c.ct, x, 0.2, 0.5);
  DensityCurve curve = lagrangian_flow(c.ct, {x}, rho0, 0.2, steps);

  FlowDerivativeReport rep = flow_derivative_check(curve, c.ct->gens.col(0));
  REQUIRE(rep.residual.size() == curve.rho.size() - 2);
  REQUIRE(rep.scale > 1.0);
  // Upwind diffusion leaves an O(h) residual that time refinement cannot
  // remove; at this resolution it sits near a third of the signal.
  REQUIRE(rep.max_residual / rep.scale < 0.6);
  REQUIRE(rep.mean_residual <= rep.max_residual);

  DensityCurve two = lagrangian_flow(c.ct, {x}, rho0, 0.2, 2);
  REQUIRE_THROWS_AS(flow_derivative_check(two, c.ct->gens.col(0)),
                    usage_error);
}

TEST_CASE("per-step field lists reproduce the single-field flow") {
  FlowCtx c = torus8();
  ScalarField rho0 = ScalarField::Ones(c.sp->n) + 0.5 * c.ct->gens.col(0);
  Section x = differential(*c.ct, 0.25 * (c.ct->gens.col(0) + c.ct->gens.col(2)));
  int steps = cfl_steps(*c.ct, x, 0.2, 0.5);
  DensityCurve one = lagrangian_flow(c.ct, {x}, rho0, 0.2, steps);
  std::vector<Section> seq(steps, x);
  DensityCurve many = lagrangian_flow(c.ct, seq, rho0, 0.2, steps);
  for (size_t k = 0; k < one.rho.size(); ++k)
    REQUIRE((one.rho[k] - many.rho[k]).cwiseAbs().maxCoeff() == 0.0);
  FlowDerivativeReport rep = flow_derivative_check(many, c.ct->gens.col(0));
  REQUIRE(std::isfinite(rep.max_residual));
}
