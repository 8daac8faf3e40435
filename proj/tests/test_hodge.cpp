// de Rham complex: adjointness of d and delta, Betti numbers by both the
// spectral and the rank route, and the orthogonal Hodge decomposition.

#include <catch_amalgamated.hpp>

#include <cmath>

#include "gammacalc/builders.hpp"
#include "gammacalc/hodge.hpp"

using namespace gammacalc;

namespace {

std::shared_ptr<const HodgeComplex> complex_for(const FiniteMMSpace& raw,
                                                bool coords) {
  auto sp = std::make_shared<const FiniteMMSpace>(raw);
  Mat gens = coords ? sp->coord_fields : auto_generators(*sp, 4);
  auto so = std::make_shared<const SecondOrder>(build_cotangent(sp, gens));
  return std::make_shared<const HodgeComplex>(so);
}

std::shared_ptr<const HodgeComplex> torus8() {
  static auto h = complex_for(grid_torus(2, 8), true);
  return h;
}

double form_norm(const HodgeComplex& h, int k, const Section& w) {
  return std::sqrt(h.weighted_dot(k, w, w));
}

// Angular 1-form of the first lattice axis: c d(s) - s d(c) winds once
// around the factor circle and has pointwise norm |d theta|.
Section winding_form(const HodgeComplex& h, int axis) {
  const auto& ct = h.ct();
  const ScalarField c = ct.space->coord_fields.col(2 * axis);
  const ScalarField s = ct.space->coord_fields.col(2 * axis + 1);
  return axpy(1.0, mul_function(c, differential_projected(ct, s)), -1.0,
              mul_function(s, differential_projected(ct, c)));
}

}  // namespace

TEST_CASE("exterior derivative and codifferential are weighted adjoints") {
  auto h = torus8();
  const auto& s = *h->ct().space;
  ScalarField phi = s.coord_fields.col(0) + 0.37 * s.coord_fields.col(3);
  Section b1 = axpy(
      1.0, differential_projected(h->ct(), s.coord_fields.col(1)), 0.4,
      mul_function(s.coord_fields.col(2),
                   differential_projected(h->ct(), s.coord_fields.col(0))));

  Section f0 = h->scalar_to_form(phi);
  double lhs0 = h->weighted_dot(1, h->exterior_derivative(0, f0), b1);
  double rhs0 = h->weighted_dot(0, f0, h->codifferential(1, b1));
  double scale0 = form_norm(*h, 0, f0) * form_norm(*h, 1, b1);
  REQUIRE(std::abs(lhs0 - rhs0) <= 1e-12 * scale0);

  Section b2 = h->exterior_derivative(1, b1);
  Section w1 = differential_projected(h->ct(), s.coord_fields.col(2));
  double lhs1 = h->weighted_dot(2, h->exterior_derivative(1, w1), b2);
  double rhs1 = h->weighted_dot(1, w1, h->codifferential(2, b2));
  double scale1 = form_norm(*h, 1, w1) * form_norm(*h, 2, b2);
  REQUIRE(std::abs(lhs1 - rhs1) <= 1e-12 * scale1);

  // Adjointness makes the Hodge Laplacian nonnegative with the Dirichlet
  // energy identity <Lap w, w> = |dw|^2 + |delta w|^2.
  double quad = h->weighted_dot(1, h->hodge_laplacian(1, b1), b1);
  Section db = h->exterior_derivative(1, b1);
  Section cb = h->codifferential(1, b1);
  double energy = h->weighted_dot(2, db, db) + h->weighted_dot(0, cb, cb);
  REQUIRE(quad == Catch::Approx(energy).epsilon(1e-12));
  REQUIRE(quad >= -1e-10);
  REQUIRE(h->hodge_energy(1, b1) == Catch::Approx(0.5 * energy).epsilon(1e-12));
}

TEST_CASE("codifferential of a differential is the negative generator") {
  auto check = [](const HodgeComplex& h) {
    const auto& s = *h.ct().space;
    ScalarField f = h.ct().gens.col(0) + 0.3 * h.ct().gens.col(h.ct().gens.cols() - 1);
    Section df = h.exterior_derivative(0, h.scalar_to_form(f));
    ScalarField back = h.form_to_scalar(h.codifferential(1, df));
    ScalarField lf = apply_generator(s, f);
    REQUIRE((back + lf).cwiseAbs().maxCoeff() <=
            1e-11 * (lf.cwiseAbs().maxCoeff() + 1.0));
  };
  check(*torus8());
  check(*complex_for(cycle_space(16), false));
}

TEST_CASE("scalar forms round-trip and degrees are guarded") {
  auto h = torus8();
  const auto& s = *h->ct().space;
  ScalarField f = s.coord_fields.col(1);
  REQUIRE((h->form_to_scalar(h->scalar_to_form(f)) - f).cwiseAbs().maxCoeff() ==
          0.0);
  Section df = h->exterior_derivative(0, h->scalar_to_form(f));
  REQUIRE_THROWS_AS(h->form_to_scalar(df), usage_error);
  REQUIRE_THROWS_AS(h->harmonic_basis(h->max_degree() + 2, 2), usage_error);
  // Codifferential on functions is zero by convention.
  REQUIRE(form_norm(*h, 0, h->codifferential(0, h->scalar_to_form(f))) == 0.0);
}

TEST_CASE("harmonic space of the ring has dimension one") {
  auto h = complex_for(cycle_space(8), false);
  std::vector<Section> basis;
  HodgeReport rep = h->harmonic_basis(1, 3, &basis);
  REQUIRE_FALSE(rep.inconclusive);
  REQUIRE(rep.betti_eigen == 1);
  REQUIRE(rep.betti_rank == 1);
  REQUIRE(rep.gap_ratio > 1e6);
  REQUIRE(basis.size() == 1);
  REQUIRE(form_norm(*h, 1, basis[0]) == Catch::Approx(1.0).epsilon(1e-10));
  // Near-kernel eigenvalue bounds the representative's Dirichlet energy.
  REQUIRE(form_norm(*h, 2, h->exterior_derivative(1, basis[0])) < 1e-6);
  // d o d does not vanish at finite scale; the rank route absorbs it.
  REQUIRE(rep.d2_defect > 1e-3);
}

TEST_CASE("harmonic space of the torus matches the two winding classes") {
  auto h = torus8();
  int expected[3] = {1, 2, 1};
  for (int k = 0; k <= 2; ++k) {
    HodgeReport rep = h->harmonic_basis(k, k == 1 ? 4 : 3);
    INFO("degree " << k);
    REQUIRE_FALSE(rep.inconclusive);
    REQUIRE(rep.betti_eigen == expected[k]);
    REQUIRE(rep.betti_rank == expected[k]);
    REQUIRE(rep.gap_ratio > 1e6);
  }
}

TEST_CASE("sphere mesh has trivial first cohomology") {
  auto h = complex_for(build_space("icosphere:1"), false);
  HodgeReport r1 = h->harmonic_basis(1, 3);
  REQUIRE_FALSE(r1.inconclusive);
  REQUIRE(r1.betti_eigen == 0);
  REQUIRE(r1.betti_rank == 0);
  REQUIRE(r1.gap_ratio > 1e3);
  HodgeReport r0 = h->harmonic_basis(0, 2);
  REQUIRE(r0.betti_eigen == 1);
  REQUIRE(r0.betti_rank == 1);
}

TEST_CASE("winding form is coclosed but not closed at finite scale") {
  auto h = torus8();
  Section w = winding_form(*h, 0);
  double nw = form_norm(*h, 1, w);
  REQUIRE(nw > 1.0);
  // Coclosedness only needs the exact adjoint structure of the divergence.
  REQUIRE(form_norm(*h, 0, h->codifferential(1, w)) <= 1e-10 * nw);
  // Closedness needs the product rule for d, which carries an O(1)
  // square-gradient defect here, so dw is far from zero. The discrete
  // harmonic representatives of the winding classes are eigenvectors of the
  // Hodge Laplacian instead, and this form is weighted-orthogonal to them.
  double ratio = form_norm(*h, 2, h->exterior_derivative(1, w)) / nw;
  REQUIRE(ratio > 3.0);
  REQUIRE(ratio < 7.0);
  std::vector<Section> basis;
  h->harmonic_basis(1, 4, &basis);
  REQUIRE(basis.size() == 2);
  for (const Section& b : basis)
    REQUIRE(std::abs(h->weighted_dot(1, w, b)) <= 1e-8 * nw);
}

TEST_CASE("hodge decomposition is orthogonal and complete") {
  auto h = torus8();
  const auto& s = *h->ct().space;
  std::vector<Section> basis;
  h->harmonic_basis(1, 4, &basis);
  ScalarField phi = s.coord_fields.col(0) + 0.37 * s.coord_fields.col(3);
  Section dphi = h->exterior_derivative(0, h->scalar_to_form(phi));

  SECTION("a form assembled from the parts is recovered exactly") {
    Section w = axpy(1.0, dphi, 1.0, basis[0]);
    w = axpy(1.0, w, 0.5, basis[1]);
    HodgeDecomposition dec = h->hodge_decompose(1, w, 4);
    REQUIRE(dec.ortho_residual <= 1e-12);
    REQUIRE(dec.recon_residual <= 1e-10);
    REQUIRE(h->weighted_dot(1, dec.harmonic, dec.harmonic) ==
            Catch::Approx(1.25).epsilon(1e-8));
    Section ed = axpy(1.0, dec.exact, -1.0, dphi);
    REQUIRE(form_norm(*h, 1, ed) <= 1e-10 * form_norm(*h, 1, dphi));
  }

  SECTION("a generic form splits with machine-level residuals") {
    Section w = axpy(
        1.0, differential_projected(h->ct(), s.coord_fields.col(1)), 0.7,
        winding_form(*h, 0));
    w = axpy(1.0, w, 0.4,
             mul_function(s.coord_fields.col(2),
                          differential_projected(h->ct(), s.coord_fields.col(0))));
    HodgeDecomposition dec = h->hodge_decompose(1, w, 4);
    REQUIRE(dec.ortho_residual <= 1e-12);
    REQUIRE(dec.recon_residual <= 1e-10);
    double n2 = h->weighted_dot(1, w, w);
    REQUIRE(h->weighted_dot(1, dec.exact, dec.exact) +
                h->weighted_dot(1, dec.coexact, dec.coexact) +
                h->weighted_dot(1, dec.harmonic, dec.harmonic) ==
            Catch::Approx(n2).epsilon(1e-8));
  }
}
