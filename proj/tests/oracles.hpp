#pragma once

// Independent dense reference implementations for the test suites. Nothing
// here reuses the library's operator plumbing beyond the space struct
// itself: the generator is densified and the bilinear forms are evaluated
// straight from their definitions, so agreement with the library is a real
// cross-check rather than a tautology. Frozen constants were computed by
// hand on the three-point path and are asserted against both sides.

#include <Eigen/Dense>

#include "gammacalc/space.hpp"

namespace oracle {

using gammacalc::FiniteMMSpace;
using gammacalc::Mat;
using gammacalc::Vec;

inline Mat dense_generator(const FiniteMMSpace& s) { return Mat(s.gen); }

// Gamma(f,g) = (L(fg) - f Lg - g Lf) / 2 from the dense generator.
inline Vec gamma(const FiniteMMSpace& s, const Vec& f, const Vec& g) {
  Mat L = dense_generator(s);
  return 0.5 * (L * f.cwiseProduct(g) - f.cwiseProduct(L * g) -
                g.cwiseProduct(L * f));
}

// Gamma_2(f,g) = (L Gamma(f,g) - Gamma(f,Lg) - Gamma(g,Lf)) / 2.
inline Vec gamma2(const FiniteMMSpace& s, const Vec& f, const Vec& g) {
  Mat L = dense_generator(s);
  return 0.5 * (L * gamma(s, f, g) - gamma(s, f, L * g) - gamma(s, g, L * f));
}

// H[f](g,h) = (Gamma(Gamma(f,g),h) + Gamma(Gamma(f,h),g) - Gamma(f,Gamma(g,h))) / 2.
inline Vec h_form(const FiniteMMSpace& s, const Vec& f, const Vec& g,
                  const Vec& h) {
  return 0.5 * (gamma(s, gamma(s, f, g), h) + gamma(s, gamma(s, f, h), g) -
                gamma(s, f, gamma(s, g, h)));
}

inline double integrate(const FiniteMMSpace& s, const Vec& f) {
  return s.m.dot(f);
}

// Per-point rank of the Gamma Gram matrix of a generator frame, the oracle
// for dim_loc. Uses the same relative threshold contract as the library.
inline int gram_rank(const FiniteMMSpace& s, const Mat& gens, int i,
                     double rel = 1e-8, double floor = 1e-14) {
  const int r = static_cast<int>(gens.cols());
  Mat g(r, r);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b)
      g(a, b) = gamma(s, gens.col(a), gens.col(b))(i);
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  double top = es.eigenvalues().cwiseAbs().maxCoeff();
  double thr = std::max(rel * top, floor);
  int rank = 0;
  for (int a = 0; a < r; ++a)
    if (es.eigenvalues()(a) > thr) ++rank;
  return rank;
}

// Frozen three-point path values for f = (0, 1, 3): unit conductances and
// unit masses give Lf = (1, 1, -2), Gamma(f,f) = ((1)^2/2, (1+4)/2, (2)^2/2)
// = (0.5, 2.5, 2.0), and the integral 0.5 + 2.5 + 2.0 = 5.
struct Path3 {
  static Vec f() {
    Vec v(3);
    v << 0, 1, 3;
    return v;
  }
  static Vec gamma_ff() {
    Vec v(3);
    v << 0.5, 2.5, 2.0;
    return v;
  }
  static Vec lf() {
    Vec v(3);
    v << 1.0, 1.0, -2.0;
    return v;
  }
  static constexpr double integral = 5.0;
};

}  // namespace oracle
