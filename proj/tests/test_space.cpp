// Space layer: generator algebra against dense oracles, spectral
// decomposition, and the heat semigroup contract.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gammacalc/builders.hpp"
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

TEST_CASE("path generator matches the dense oracle on frozen values") {
  FiniteMMSpace s = path_space(3);
  Vec f = oracle::Path3::f();

  Vec lf = apply_generator(s, f);
  REQUIRE((lf - oracle::Path3::lf()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((Mat(s.gen) * f - lf).cwiseAbs().maxCoeff() < 1e-12);

  Vec g = carre_du_champ(s, f, f);
  REQUIRE((g - oracle::Path3::gamma_ff()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((g - oracle::gamma(s, f, f)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(integrate(s, g) == Catch::Approx(oracle::Path3::integral));
}

TEST_CASE("carre du champ agrees with the dense definition") {
  for (const auto& s : {grid_torus(2, 8), cycle_space(17), path_space(9)}) {
    ScalarField f = noise(s.n, 11), g = noise(s.n, 13);
    Vec lib = carre_du_champ(s, f, g);
    Vec ref = oracle::gamma(s, f, g);
    double scale = ref.cwiseAbs().maxCoeff() + 1.0;
    REQUIRE((lib - ref).cwiseAbs().maxCoeff() / scale < 1e-12);

    // Integration by parts closes exactly at finite n.
    double lhs = integrate(s, lib);
    double rhs = -inner_m(s, f, apply_generator(s, g));
    REQUIRE(std::abs(lhs - rhs) / (std::abs(rhs) + 1.0) < 1e-12);
  }
}

TEST_CASE("space validation rejects broken inputs") {
  FiniteMMSpace s = path_space(4);
  REQUIRE_NOTHROW(validate_space(s));

  SECTION("nonpositive measure") {
    s.m(1) = 0.0;
    REQUIRE_THROWS_AS(validate_space(s), usage_error);
  }
  SECTION("asymmetric conductance") {
    // Keep the row sum zero so the m-symmetry check is the one that trips.
    s.gen.coeffRef(0, 1) += 1.0;
    s.gen.coeffRef(0, 0) -= 1.0;
    REQUIRE_THROWS_AS(validate_space(s), usage_error);
  }
  SECTION("nonzero row sum") {
    s.gen.coeffRef(2, 2) += 0.5;
    REQUIRE_THROWS_AS(validate_space(s), usage_error);
  }
}

TEST_CASE("builder spec strings round through build_space") {
  REQUIRE(build_space("path:5").n == 5);
  REQUIRE(build_space("cycle:12").n == 12);
  REQUIRE(build_space("grid_torus:2,6").n == 36);
  REQUIRE(build_space("icosphere:1").n == 42);
  REQUIRE_THROWS_AS(build_space("klein:4"), usage_error);
  REQUIRE_THROWS_AS(build_space("grid_torus:2"), usage_error);
  REQUIRE_THROWS_AS(build_space("path:x"), usage_error);
}

TEST_CASE("json space io preserves the generator") {
  FiniteMMSpace s = cycle_space(9);
  FiniteMMSpace t = space_from_json(space_to_json(s));
  REQUIRE(t.n == s.n);
  REQUIRE((t.m - s.m).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE((Mat(t.gen) - Mat(s.gen)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("laplacian eigenfunctions are m-orthonormal and ordered") {
  FiniteMMSpace s = cycle_space(8);
  EigenFunctions eig = laplacian_eigenfunctions(s, 6);

  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      double dot = inner_m(s, eig.fields.col(a), eig.fields.col(b));
      REQUIRE(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
  REQUIRE(std::abs(eig.values(0)) < 1e-10);
  REQUIRE(eig.fields.col(0).maxCoeff() - eig.fields.col(0).minCoeff() < 1e-10);
  for (int a = 1; a < 6; ++a) REQUIRE(eig.values(a) >= eig.values(a - 1) - 1e-12);

  // The 8-cycle's first nonzero eigenvalue is 2 - sqrt(2) exactly.
  REQUIRE(eig.values(1) == Catch::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-10));
  REQUIRE(eig.values(2) == Catch::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("heat flow conserves mass and obeys the maximum principle") {
  FiniteMMSpace s = grid_torus(2, 8);
  ScalarField f = noise(s.n, 7);
  ScalarField u = heat_flow(s, f, 0.3);

  REQUIRE(std::abs(integrate(s, u) - integrate(s, f)) /
              std::abs(integrate(s, f) + 1.0) <
          tol::heat_mass);
  REQUIRE(u.maxCoeff() <= f.maxCoeff() + 1e-10);
  REQUIRE(u.minCoeff() >= f.minCoeff() - 1e-10);

  // Dirichlet energy is non-increasing along the semigroup.
  double e0 = integrate(s, carre_du_champ(s, f, f));
  double e1 = integrate(s, carre_du_champ(s, u, u));
  REQUIRE(e1 <= e0 + 1e-10);

  // Semigroup property within the implicit-Euler tolerance.
  ScalarField two = heat_flow(s, heat_flow(s, f, 0.15), 0.15);
  REQUIRE((two - u).cwiseAbs().maxCoeff() < 0.05 * f.cwiseAbs().maxCoeff());
}

TEST_CASE("unit sphere spectrum approaches the smooth values") {
  FiniteMMSpace s = icosphere(2);
  EigenFunctions eig = laplacian_eigenfunctions(s, 5);
  // First nonconstant band of the unit sphere sits at 2 with multiplicity 3.
  for (int a = 1; a <= 3; ++a)
    REQUIRE(eig.values(a) == Catch::Approx(2.0).margin(0.05));
}
