// Module layer: pointwise-normed section spaces, tensor squares, exterior
// powers, generated submodules, and pullbacks along point maps.

#include <catch_amalgamated.hpp>

#include <random>

#include "gammacalc/builders.hpp"
#include "gammacalc/module.hpp"
#include "oracles.hpp"

using namespace gammacalc;

namespace {

struct Fixture {
  SpacePtr sp;
  BundlePtr b;
  std::mt19937_64 rng{42};

  Fixture() {
    sp = std::make_shared<const FiniteMMSpace>(cycle_space(11));
    // Mixed fiber dimensions with non-identity Grams exercise the general
    // paths; point 0 gets an empty fiber on purpose.
    Eigen::VectorXi dims(sp->n);
    std::vector<Mat> gram(sp->n);
    for (int i = 0; i < sp->n; ++i) {
      dims(i) = i == 0 ? 0 : 1 + i % 3;
      Mat a = Mat::Random(dims(i), dims(i) + 1);
      gram[i] = a * a.transpose() + 0.1 * Mat::Identity(dims(i), dims(i));
    }
    b = make_bundle(sp, dims, gram);
  }

  Section rand_section() {
    std::normal_distribution<double> nd;
    Section v = zero_section(b);
    for (auto& c : v.coeffs)
      for (int k = 0; k < c.size(); ++k) c(k) = nd(rng);
    return v;
  }

  ScalarField rand_field() {
    std::normal_distribution<double> nd;
    ScalarField f(sp->n);
    for (int i = 0; i < sp->n; ++i) f(i) = nd(rng);
    return f;
  }
};

}  // namespace

TEST_CASE("bundle construction rejects malformed Grams") {
  auto sp = std::make_shared<const FiniteMMSpace>(path_space(3));
  Eigen::VectorXi dims = Eigen::VectorXi::Constant(3, 2);
  std::vector<Mat> gram(3, Mat::Identity(2, 2));

  SECTION("asymmetric") {
    gram[1] << 1.0, 0.5, -0.5, 1.0;
    REQUIRE_THROWS_AS(make_bundle(sp, dims, gram), usage_error);
  }
  SECTION("indefinite") {
    gram[2] << 1.0, 0.0, 0.0, -1.0;
    REQUIRE_THROWS_AS(make_bundle(sp, dims, gram), usage_error);
  }
  SECTION("shape mismatch") {
    gram[0] = Mat::Identity(3, 3);
    REQUIRE_THROWS_AS(make_bundle(sp, dims, gram), usage_error);
  }
}

TEST_CASE_METHOD(Fixture, "pointwise norm satisfies the module axioms") {
  Section v = rand_section(), w = rand_section();
  ScalarField f = rand_field();

  ScalarField nv = pointwise_norm(v), nw = pointwise_norm(w);
  REQUIRE(nv.minCoeff() >= 0.0);
  REQUIRE(nv(0) == 0.0);  // empty fiber

  // |f v| = |f| |v| pointwise.
  ScalarField nfv = pointwise_norm(mul_function(f, v));
  REQUIRE((nfv - f.cwiseAbs().cwiseProduct(nv)).cwiseAbs().maxCoeff() < 1e-12);

  // Parallelogram law, the Hilbertian signature.
  ScalarField np = pointwise_norm(axpy(1.0, v, 1.0, w));
  ScalarField nm = pointwise_norm(axpy(1.0, v, -1.0, w));
  Vec defect = np.cwiseProduct(np) + nm.cwiseProduct(nm) -
               2.0 * nv.cwiseProduct(nv) - 2.0 * nw.cwiseProduct(nw);
  REQUIRE(defect.cwiseAbs().maxCoeff() < 1e-10);

  // Cauchy-Schwarz for the pointwise pairing.
  Vec cs = dual_pairing(v, w).cwiseAbs() - nv.cwiseProduct(nw);
  REQUIRE(cs.maxCoeff() < 1e-12);

  // The module norm is the m-weighted L2 norm of the pointwise norm.
  double mn = module_norm(v);
  REQUIRE(mn * mn == Catch::Approx(integrate(*sp, nv.cwiseProduct(nv))));
}

TEST_CASE_METHOD(Fixture, "riesz duality inverts the pairing") {
  Section v = rand_section(), w = rand_section();
  DualFunctional lv = riesz_dual(v);
  ScalarField applied = lv(w);
  REQUIRE((applied - dual_pairing(v, w)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE_METHOD(Fixture, "tensor squares contract consistently") {
  Section a = rand_section(), bb = rand_section(), c = rand_section(),
          d = rand_section();
  TensorSection ab = tensor_of(a, bb);

  // <a (x) b, c (x) d>_HS = <a,c> <b,d> pointwise.
  ScalarField lhs = hs_dot(ab, tensor_of(c, d));
  ScalarField rhs = dual_pairing(a, c).cwiseProduct(dual_pairing(bb, d));
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

  // Symmetric/antisymmetric split reassembles and is HS-orthogonal.
  TensorSection sym = tensor_sym(ab), asym = tensor_asym(ab);
  ScalarField cross = hs_dot(sym, asym);
  REQUIRE(cross.cwiseAbs().maxCoeff() < 1e-10);
  for (int i = 0; i < sp->n; ++i) {
    Mat re = sym.coeffs[i] + asym.coeffs[i] - ab.coeffs[i];
    REQUIRE(re.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE_METHOD(Fixture, "wedge is alternating and antisymmetric") {
  Section v = rand_section(), w = rand_section();
  BundlePtr ext2 = exterior_power(b, 2);
  for (int i = 0; i < sp->n; ++i)
    REQUIRE(ext2->dims(i) == (b->dims(i) * (b->dims(i) - 1)) / 2);
  Section vw = wedge({v, w}, ext2);
  Section wv = wedge({w, v}, ext2);
  Section vv = wedge({v, v}, ext2);
  double scale = module_norm(vw) + 1.0;
  REQUIRE(module_norm(axpy(1.0, vw, 1.0, wv)) / scale < 1e-12);
  REQUIRE(module_norm(vv) / scale < 1e-12);

  // |v ^ w|^2 = |v|^2 |w|^2 - <v,w>^2 in the induced Gram.
  ScalarField n2 = pointwise_norm(vw).array().square().matrix();
  ScalarField ref = (pointwise_norm(v).array().square() *
                         pointwise_norm(w).array().square() -
                     dual_pairing(v, w).array().square())
                        .matrix();
  REQUIRE((n2 - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE_METHOD(Fixture, "generated submodules report fiber ranks") {
  Section v = rand_section(), w = rand_section();
  GeneratedSubmodule sub = generated_submodule({v, w, axpy(2.0, v, -1.0, w)});
  for (int i = 0; i < sp->n; ++i) {
    REQUIRE(sub.rank(i) <= std::min<int>(2, b->dims(i)));
    if (b->dims(i) >= 2) REQUIRE(sub.rank(i) == 2);  // generic sections
    // Frame columns are Gram-orthonormal.
    Mat gtg = sub.frame[i].transpose() * b->gram[i] * sub.frame[i];
    REQUIRE((gtg - Mat::Identity(sub.rank(i), sub.rank(i)))
                .cwiseAbs()
                .maxCoeff() < 1e-8);
  }

  DimensionalDecomposition dec = dimensional_decomposition(*b);
  int covered = 0;
  for (const auto& [rank, pts] : dec.classes) covered += static_cast<int>(pts.size());
  REQUIRE(covered == sp->n);
  for (int i = 0; i < sp->n; ++i) REQUIRE(dec.dim_loc(i) == b->dims(i));
}

TEST_CASE_METHOD(Fixture, "pullbacks preserve pointwise norms") {
  auto src = std::make_shared<const FiniteMMSpace>(path_space(7));
  std::vector<int> assign = {3, 1, 4, 1, 5, 9, 2};
  PointMap phi = make_point_map(src, sp, assign);
  REQUIRE(phi.compression > 0.0);

  Section v = rand_section();
  BundlePtr pulled = pullback_module(phi, b);
  Section pv = pullback_section(phi, v, pulled);
  ScalarField nv = pointwise_norm(v), npv = pointwise_norm(pv);
  for (int y = 0; y < src->n; ++y)
    REQUIRE(npv(y) == Catch::Approx(nv(assign[y])).margin(1e-14));

  // Composition of assignments matches pullback of pullback.
  auto mid = sp;
  PointMap idm = make_point_map(mid, mid,
                                [&] {
                                  std::vector<int> id(mid->n);
                                  for (int i = 0; i < mid->n; ++i) id[i] = i;
                                  return id;
                                }());
  PointMap chained = compose(idm, phi);
  REQUIRE(chained.assign == phi.assign);
}

TEST_CASE_METHOD(Fixture, "section json io round-trips") {
  Section v = rand_section();
  nlohmann::json j = section_to_json(v);
  Section back = section_from_json(j, b);
  for (int i = 0; i < sp->n; ++i)
    REQUIRE((back.coeffs[i] - v.coeffs[i]).cwiseAbs().maxCoeff() < 1e-14);
}
