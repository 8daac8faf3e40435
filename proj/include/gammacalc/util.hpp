#pragma once

// Shared aliases, central tolerances, error types and the thread pool used
// by per-point loops. Every tolerance that a test or report depends on lives
// here; nothing downstream hardcodes its own.

#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gammacalc {

using Vec   = Eigen::VectorXd;
using Mat   = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Trip  = Eigen::Triplet<double>;

// A scalar field is a length-n vector of point values.
using ScalarField = Eigen::VectorXd;

namespace tol {
// Algebraic identities that finite linear algebra forces, relative scale.
inline constexpr double algebraic = 1e-10;
// Spectral and rank decisions on normalized operators, absolute.
inline constexpr double spectral = 1e-8;
// Rank threshold: singular values below rank_rel * (largest sv, floored)
// count as zero.
inline constexpr double rank_rel   = 1e-8;
inline constexpr double rank_floor = 1e-14;
// Exact-class verification rules assert at this relative level.
inline constexpr double exact_class = 1e-8;
// Residual scale normalization floor.
inline constexpr double scale_floor = 1e-14;
// Heat flow mass conservation, relative.
inline constexpr double heat_mass = 1e-10;
// Transport mass conservation per step, relative.
inline constexpr double flow_mass = 1e-9;
// Differential norm consistency |df|^2 vs carre du champ, relative.
inline constexpr double diff_norm = 1e-9;
// Eigen-gap ratio below which a harmonic-dimension report is inconclusive.
inline constexpr double gap_ratio_min = 10.0;
// Hodge eigenvalues below harmonic_rel * operator norm count as harmonic;
// exact kernel modes land around 1e-15 relative after the eigensolve, while
// the lowest genuine modes of mesh complexes stay above 1e-6 relative.
inline constexpr double harmonic_rel = 1e-12;
}  // namespace tol

// Usage-level problems (bad arguments, malformed files): CLI exit code 2.
struct usage_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// Computation-level failures (rank deficiency, non-convergence): exit code 1.
struct computation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Worker count: GAMMA_CALC_THREADS if set, else hardware concurrency.
inline int thread_count() {
  if (const char* env = std::getenv("GAMMA_CALC_THREADS")) {
    int k = std::atoi(env);
    if (k >= 1) return k;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

// Parallel loop over [0, n). Each index writes only its own output slots, so
// results are identical for any thread count; reductions stay sequential.
inline void parallel_for(std::ptrdiff_t n,
                         const std::function<void(std::ptrdiff_t)>& body) {
  int workers = thread_count();
  if (workers <= 1 || n < 64) {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::ptrdiff_t lo = w * chunk, hi = std::min<std::ptrdiff_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::ptrdiff_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gammacalc
