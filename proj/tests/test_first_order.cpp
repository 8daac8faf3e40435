// Cotangent module: differentials, fiber dimensions against the Gram-rank
// oracle, the divergence adjunction, and pullback of 1-form expressions.

#include <catch_amalgamated.hpp>

#include <random>

#include "gammacalc/builders.hpp"
#include "gammacalc/first_order.hpp"
#include "oracles.hpp"

using namespace gammacalc;

namespace {

ScalarField noise(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(n);
  for (int i = 0; i < n; ++i) f(i) = nd(rng);
  return f;
}

}  // namespace

TEST_CASE("path(3) fibers have the frozen dimensions") {
  auto sp = std::make_shared<const FiniteMMSpace>(path_space(3));
  Mat gens(3, 2);
  gens.col(0) << 0, 1, 2;
  gens.col(1) << 0, 0, 1;
  CotangentPtr ct = build_cotangent(sp, gens);

  Eigen::VectorXi expect(3);
  expect << 1, 2, 1;
  REQUIRE((ct->dim_loc.array() == expect.array()).all());
  for (int i = 0; i < 3; ++i)
    REQUIRE(oracle::gram_rank(*sp, gens, i) == ct->dim_loc(i));
}

TEST_CASE("fiber ranks match the Gram-rank oracle on reference builders") {
  SECTION("torus") {
    auto sp = std::make_shared<const FiniteMMSpace>(grid_torus(2, 8));
    CotangentPtr ct = build_cotangent(sp, sp->coord_fields);
    // Four angle generators over a two-dimensional lattice: the per-point
    // Gram carries two strong and two weak directions, all genuinely above
    // the rank threshold, so every fiber has dimension four.
    REQUIRE(ct->dim_loc.minCoeff() == 4);
    REQUIRE(ct->dim_loc.maxCoeff() == 4);
    for (int i : {0, 5, 37}) {
      REQUIRE(oracle::gram_rank(*sp, sp->coord_fields, i) == ct->dim_loc(i));
    }
  }
  SECTION("sphere mesh") {
    auto sp = std::make_shared<const FiniteMMSpace>(icosphere(1));
    CotangentPtr ct = build_cotangent(sp, sp->coord_fields);
    REQUIRE(ct->dim_loc.minCoeff() == 3);
    REQUIRE(ct->dim_loc.maxCoeff() == 3);
    for (int i : {0, 11, 40})
      REQUIRE(oracle::gram_rank(*sp, sp->coord_fields, i) == ct->dim_loc(i));
  }
  SECTION("cycle") {
    auto sp = std::make_shared<const FiniteMMSpace>(cycle_space(16));
    CotangentPtr ct = build_cotangent_auto(sp);
    REQUIRE(ct->dim_loc.minCoeff() >= 1);
    REQUIRE(ct->dim_loc.maxCoeff() <= 2);
  }
}

TEST_CASE("differential norm equals the carre du champ on the span") {
  auto sp = std::make_shared<const FiniteMMSpace>(grid_torus(2, 8));
  CotangentPtr ct = build_cotangent(sp, sp->coord_fields);

  // Any generator combination stays inside the span, so the projection
  // defect vanishes and |df|^2 reproduces Gamma(f,f) pointwise.
  ScalarField f = ct->gens.col(0) + 0.5 * ct->gens.col(3);
  ScalarField defect;
  Section df = differential_projected(*ct, f, &defect);
  Vec gff = carre_du_champ(*sp, f, f);
  double scale = gff.maxCoeff();
  REQUIRE(defect.cwiseAbs().maxCoeff() / scale < 1e-10);

  ScalarField nf = pointwise_norm(df);
  REQUIRE((nf.cwiseProduct(nf) - gff).cwiseAbs().maxCoeff() / scale < 1e-10);

  // Polarization: <df, dg> = Gamma(f,g) pointwise on the span.
  ScalarField g = ct->gens.col(1).cwiseProduct(ct->gens.col(2));
  Section dg = differential_projected(*ct, g);
  Vec gfg = carre_du_champ(*sp, f, g);
  REQUIRE((dual_pairing(df, dg) - gfg).cwiseAbs().maxCoeff() / scale < 1e-8);

  // A frame spanning only the first axis cannot represent fields that vary
  // along the second; the checked differential refuses them.
  CotangentPtr half = build_cotangent(sp, sp->coord_fields.leftCols(2));
  REQUIRE_THROWS_AS(differential(*half, sp->coord_fields.col(2)),
                    computation_error);
  REQUIRE_NOTHROW(differential(*half, sp->coord_fields.col(1)));
}

TEST_CASE("divergence is the exact weighted adjoint of d") {
  auto sp = std::make_shared<const FiniteMMSpace>(grid_torus(2, 6));
  CotangentPtr ct = build_cotangent(sp, sp->coord_fields);

  ScalarField w = ScalarField::Ones(sp->n) + 0.3 * ct->gens.col(2);
  Section x = mul_function(w, differential_projected(*ct, ct->gens.col(0)));
  ScalarField divx = divergence(*ct, x);

  for (int k = 0; k < 4; ++k) {
    ScalarField f = heat_flow(*sp, noise(sp->n, 100 + k), 0.01);
    double lhs = inner_m(*sp, f, divx);
    double rhs = -integrate(*sp, dual_pairing(x, differential_projected(*ct, f)));
    double scale = std::abs(lhs) + std::abs(rhs) + 1.0;
    REQUIRE(std::abs(lhs - rhs) / scale < 1e-11);
  }

  // div grad f = Lf exactly for functions in the generator span.
  ScalarField f = ct->gens.col(0) - 2.0 * ct->gens.col(3);
  ScalarField dg = divergence(*ct, gradient(*ct, f));
  Vec lf = apply_generator(*sp, f);
  REQUIRE((dg - lf).cwiseAbs().maxCoeff() /
              (lf.cwiseAbs().maxCoeff() + 1.0) < 1e-10);
}

TEST_CASE("auto generators give an m-orthonormal nonconstant tail") {
  FiniteMMSpace s = cycle_space(12);
  Mat gens = auto_generators(s, 4);
  REQUIRE(gens.cols() == 4);
  for (int a = 0; a < gens.cols(); ++a) {
    // No constant component: orthogonal to 1 in the m-inner product.
    double c = inner_m(s, gens.col(a), ScalarField::Ones(s.n));
    REQUIRE(std::abs(c) < 1e-8);
  }
}

TEST_CASE("expression pullback is functorial to machine precision") {
  auto a = std::make_shared<const FiniteMMSpace>(path_space(6));
  auto b = std::make_shared<const FiniteMMSpace>(cycle_space(5));
  auto c = std::make_shared<const FiniteMMSpace>(path_space(4));
  PointMap psi = make_point_map(a, b, {0, 1, 2, 3, 4, 0});
  PointMap phi = make_point_map(b, c, {0, 1, 2, 3, 1});

  FormExpression e;
  e.weight = {noise(c->n, 3), noise(c->n, 5)};
  e.func = {noise(c->n, 7), noise(c->n, 9)};

  FormExpression once = compose_expression(compose(phi, psi), e);
  FormExpression twice = compose_expression(psi, compose_expression(phi, e));

  Mat gens(a->n, 2);
  gens.col(0) = once.func[0];
  gens.col(1) = once.func[1];
  CotangentPtr ct = build_cotangent(a, gens);
  Section sa = evaluate_expression(*ct, once);
  Section sb = evaluate_expression(*ct, twice);
  REQUIRE(module_norm(axpy(1.0, sa, -1.0, sb)) /
              (module_norm(sa) + 1.0) < 1e-12);
}

TEST_CASE("form pullback lands in the source module with a Lipschitz report") {
  auto src = std::make_shared<const FiniteMMSpace>(cycle_space(10));
  auto dst = std::make_shared<const FiniteMMSpace>(cycle_space(5));
  std::vector<int> assign(10);
  for (int i = 0; i < 10; ++i) assign[i] = i / 2;
  PointMap phi = make_point_map(src, dst, assign);
  REQUIRE(phi.compression == Catch::Approx(2.0));
  REQUIRE(std::isfinite(phi.lipschitz));

  CotangentPtr ct_dst = build_cotangent_auto(dst);
  CotangentPtr ct_src = build_cotangent_auto(src);
  ScalarField f = noise(dst->n, 21);
  Section df = differential_projected(*ct_dst, f);
  PullbackReport rep;
  Section pulled = map_pullback_forms(phi, *ct_dst, *ct_src, df, &rep);
  REQUIRE(pulled.bundle == ct_src->reduced);
  REQUIRE(rep.lipschitz == Catch::Approx(phi.lipschitz));
  REQUIRE(rep.bound_violation >= 0.0);
}
