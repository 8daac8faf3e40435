#pragma once

// Finite realization of L2-normed Hilbert modules: per-point inner-product
// fibers (dimension + symmetric PSD Gram), sections with one coefficient
// vector per point, tensor squares, exterior powers and pullbacks along
// point maps. Degenerate (PSD, not PD) fibers are first-class citizens; the
// quotient by the Gram null space is applied lazily in dual pairings and
// least-squares reconstructions.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

#include <json.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "gammacalc/linalg.hpp"
#include "gammacalc/space.hpp"

namespace gammacalc {

struct FiberBundle {
  SpacePtr space;
  Eigen::VectorXi dims;    // per-point fiber dimension, >= 0
  std::vector<Mat> gram;   // symmetric PSD d_i x d_i inner products
};

using BundlePtr = std::shared_ptr<const FiberBundle>;

inline BundlePtr make_bundle(SpacePtr space, Eigen::VectorXi dims,
                             std::vector<Mat> gram) {
  auto b = std::make_shared<FiberBundle>();
  b->space = std::move(space);
  b->dims = std::move(dims);
  b->gram = std::move(gram);
  const int n = b->space->n;
  if (b->dims.size() != n || static_cast<int>(b->gram.size()) != n)
    throw usage_error("bundle: per-point tables must match the space size");
  for (int i = 0; i < n; ++i) {
    const Mat& g = b->gram[i];
    if (g.rows() != b->dims(i) || g.cols() != b->dims(i))
      throw usage_error("bundle: Gram shape mismatch");
    if (g.size() > 0) {
      double scale = g.cwiseAbs().maxCoeff();
      if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
        throw usage_error("bundle: Gram not symmetric");
      Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
      if (es.eigenvalues()(0) < -1e-10 * std::max(scale, 1.0))
        throw usage_error("bundle: Gram has a significantly negative eigenvalue");
    }
  }
  return b;
}

// Fiber bundle with identity Grams (orthonormal frames everywhere).
inline BundlePtr euclidean_bundle(SpacePtr space, const Eigen::VectorXi& dims) {
  std::vector<Mat> gram(space->n);
  for (int i = 0; i < space->n; ++i)
    gram[i] = Mat::Identity(dims(i), dims(i));
  return make_bundle(std::move(space), dims, std::move(gram));
}

struct Section {
  BundlePtr bundle;
  std::vector<Vec> coeffs;  // length d_i per point
};

inline Section zero_section(BundlePtr b) {
  Section v;
  v.coeffs.resize(b->space->n);
  for (int i = 0; i < b->space->n; ++i) v.coeffs[i] = Vec::Zero(b->dims(i));
  v.bundle = std::move(b);
  return v;
}

inline void require_same_bundle(const Section& v, const Section& w,
                                const char* what) {
  if (v.bundle != w.bundle)
    throw usage_error(std::string(what) + ": sections live in different bundles");
}

inline void require_section(const Section& v, const char* what) {
  if (!v.bundle) throw usage_error(std::string(what) + ": empty section");
  const int n = v.bundle->space->n;
  if (static_cast<int>(v.coeffs.size()) != n)
    throw usage_error(std::string(what) + ": wrong number of points");
  for (int i = 0; i < n; ++i)
    if (v.coeffs[i].size() != v.bundle->dims(i))
      throw usage_error(std::string(what) + ": coefficient length mismatch");
}

// |v|(i) = sqrt(v^T G_i v); the module norm is the m-weighted L2 norm of it.
inline ScalarField pointwise_norm(const Section& v) {
  require_section(v, "pointwise_norm");
  const int n = v.bundle->space->n;
  ScalarField out(n);
  for (int i = 0; i < n; ++i) {
    double q = v.coeffs[i].size()
                   ? v.coeffs[i].dot(v.bundle->gram[i] * v.coeffs[i])
                   : 0.0;
    out(i) = std::sqrt(std::max(0.0, q));
  }
  return out;
}

inline double module_norm(const Section& v) {
  ScalarField pn = pointwise_norm(v);
  return std::sqrt(std::max(0.0, inner_m(*v.bundle->space, pn, pn)));
}

inline Section mul_function(const ScalarField& f, const Section& v) {
  require_section(v, "mul_function");
  require_field(*v.bundle->space, f, "mul_function");
  Section out = v;
  for (int i = 0; i < v.bundle->space->n; ++i) out.coeffs[i] *= f(i);
  return out;
}

inline Section axpy(double a, const Section& v, double b, const Section& w) {
  require_same_bundle(v, w, "axpy");
  Section out = v;
  for (size_t i = 0; i < out.coeffs.size(); ++i)
    out.coeffs[i] = a * v.coeffs[i] + b * w.coeffs[i];
  return out;
}

// Pointwise dual pairing <v,w>(i) = v^T G_i w. The Riesz functional of v is
// exactly this pairing; its dual norm equals |v| (the Gram null space never
// contributes, which is the lazy quotient).
inline ScalarField dual_pairing(const Section& v, const Section& w) {
  require_same_bundle(v, w, "dual_pairing");
  const int n = v.bundle->space->n;
  ScalarField out(n);
  for (int i = 0; i < n; ++i)
    out(i) = v.coeffs[i].size()
                 ? v.coeffs[i].dot(v.bundle->gram[i] * w.coeffs[i])
                 : 0.0;
  return out;
}

struct DualFunctional {
  Section rep;
  ScalarField operator()(const Section& w) const {
    return dual_pairing(rep, w);
  }
  ScalarField norm() const { return pointwise_norm(rep); }
};

inline DualFunctional riesz_dual(Section v) { return DualFunctional{std::move(v)}; }

// ---- tensor squares ------------------------------------------------------

struct TensorSection {
  BundlePtr left, right;
  std::vector<Mat> coeffs;  // d_i(left) x d_i(right) per point
};

inline TensorSection zero_tensor(BundlePtr left, BundlePtr right) {
  if (left->space != right->space)
    throw usage_error("tensor: factor bundles on different spaces");
  TensorSection t;
  t.coeffs.resize(left->space->n);
  for (int i = 0; i < left->space->n; ++i)
    t.coeffs[i] = Mat::Zero(left->dims(i), right->dims(i));
  t.left = std::move(left);
  t.right = std::move(right);
  return t;
}

inline TensorSection tensor_of(const Section& v, const Section& w) {
  if (v.bundle->space != w.bundle->space)
    throw usage_error("tensor: sections on different spaces");
  TensorSection t;
  t.left = v.bundle;
  t.right = w.bundle;
  t.coeffs.resize(v.bundle->space->n);
  for (int i = 0; i < v.bundle->space->n; ++i)
    t.coeffs[i] = v.coeffs[i] * w.coeffs[i].transpose();
  return t;
}

inline TensorSection tensor_transpose(const TensorSection& a) {
  TensorSection t;
  t.left = a.right;
  t.right = a.left;
  t.coeffs.resize(a.coeffs.size());
  for (size_t i = 0; i < a.coeffs.size(); ++i)
    t.coeffs[i] = a.coeffs[i].transpose();
  return t;
}

inline void require_square_tensor(const TensorSection& a, const char* what) {
  if (a.left != a.right)
    throw usage_error(std::string(what) + ": needs both factors equal");
}

inline TensorSection tensor_sym(const TensorSection& a) {
  require_square_tensor(a, "tensor_sym");
  TensorSection t = a;
  for (auto& c : t.coeffs) c = 0.5 * (c + c.transpose()).eval();
  return t;
}

inline TensorSection tensor_asym(const TensorSection& a) {
  require_square_tensor(a, "tensor_asym");
  TensorSection t = a;
  for (auto& c : t.coeffs) c = 0.5 * (c - c.transpose()).eval();
  return t;
}

// Hilbert-Schmidt pairing (A:B)(i) = tr(G_left A G_right B^T).
inline ScalarField hs_dot(const TensorSection& a, const TensorSection& b) {
  if (a.left != b.left || a.right != b.right)
    throw usage_error("hs_dot: tensor sections on different bundles");
  const int n = a.left->space->n;
  ScalarField out(n);
  for (int i = 0; i < n; ++i)
    out(i) = a.coeffs[i].size()
                 ? (a.left->gram[i] * a.coeffs[i] * a.right->gram[i] *
                    b.coeffs[i].transpose())
                       .trace()
                 : 0.0;
  return out;
}

inline ScalarField hs_norm(const TensorSection& a) {
  ScalarField q = hs_dot(a, a);
  return q.cwiseMax(0.0).cwiseSqrt();
}

// Tensor-product bundle with the Kronecker pairing. Section coefficients
// correspond to vec(A^T) per point (row-major over the left index).
inline BundlePtr tensor_product(const BundlePtr& b1, const BundlePtr& b2) {
  if (b1->space != b2->space)
    throw usage_error("tensor_product: bundles on different spaces");
  const int n = b1->space->n;
  Eigen::VectorXi dims(n);
  std::vector<Mat> gram(n);
  for (int i = 0; i < n; ++i) {
    dims(i) = b1->dims(i) * b2->dims(i);
    gram[i] = Eigen::kroneckerProduct(b1->gram[i], b2->gram[i]);
  }
  return make_bundle(b1->space, dims, std::move(gram));
}

inline Section tensor_as_section(const TensorSection& a,
                                 const BundlePtr& pair_bundle) {
  Section v;
  v.bundle = pair_bundle;
  v.coeffs.resize(a.coeffs.size());
  for (size_t i = 0; i < a.coeffs.size(); ++i) {
    Mat row_major = a.coeffs[i].transpose();
    v.coeffs[i] = Eigen::Map<Vec>(row_major.data(), row_major.size());
  }
  return v;
}

// ---- exterior powers -----------------------------------------------------

inline long long binomial(int d, int k) {
  if (k < 0 || k > d) return 0;
  long long r = 1;
  for (int i = 0; i < k; ++i) r = r * (d - i) / (i + 1);
  return r;
}

// Lexicographic k-subsets of {0..d-1}; memoized, the fiber bases of
// exterior powers index into these.
inline const std::vector<std::vector<int>>& k_subsets(int d, int k) {
  static std::map<std::pair<int, int>, std::vector<std::vector<int>>> memo;
  auto it = memo.find({d, k});
  if (it != memo.end()) return it->second;
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k);
  std::function<void(int, int)> rec = [&](int start, int pos) {
    if (pos == k) {
      out.push_back(cur);
      return;
    }
    for (int v = start; v < d; ++v) {
      cur[pos] = v;
      rec(v + 1, pos + 1);
    }
  };
  if (k >= 0 && k <= d) rec(0, 0);
  return memo.emplace(std::pair<int, int>{d, k}, std::move(out)).first->second;
}

// <v_1^...^v_k, w_1^...^w_k> = det(<v_i, w_j>): the Gram of the k-th
// exterior power is the matrix of k x k minors of the fiber Gram.
inline BundlePtr exterior_power(const BundlePtr& b, int k) {
  if (k < 0) throw usage_error("exterior_power: negative degree");
  const int n = b->space->n;
  Eigen::VectorXi dims(n);
  std::vector<Mat> gram(n);
  for (int i = 0; i < n; ++i) {
    int d = b->dims(i);
    const auto& subs = k_subsets(d, k);
    int dk = static_cast<int>(subs.size());
    dims(i) = dk;
    Mat g(dk, dk);
    Mat minor(k, k);
    for (int a = 0; a < dk; ++a)
      for (int c = 0; c < dk; ++c) {
        for (int p = 0; p < k; ++p)
          for (int q = 0; q < k; ++q)
            minor(p, q) = b->gram[i](subs[a][p], subs[c][q]);
        g(a, c) = (k == 0) ? 1.0 : minor.determinant();
      }
    gram[i] = g;
  }
  return make_bundle(b->space, dims, std::move(gram));
}

// Alternating multilinear wedge: coefficient on subset S is the minor of the
// stacked coefficient matrix with rows S.
inline Section wedge(const std::vector<Section>& vs, const BundlePtr& ext) {
  if (vs.empty()) throw usage_error("wedge: no factors");
  const int k = static_cast<int>(vs.size());
  const BundlePtr& base = vs[0].bundle;
  for (const auto& v : vs) require_same_bundle(v, vs[0], "wedge");
  const int n = base->space->n;
  Section out = zero_section(ext);
  for (int i = 0; i < n; ++i) {
    int d = base->dims(i);
    const auto& subs = k_subsets(d, k);
    Mat stack(d, k);
    for (int c = 0; c < k; ++c) stack.col(c) = vs[c].coeffs[i];
    Mat minor(k, k);
    for (size_t a = 0; a < subs.size(); ++a) {
      for (int p = 0; p < k; ++p) minor.row(p) = stack.row(subs[a][p]);
      out.coeffs[i](static_cast<int>(a)) = minor.determinant();
    }
  }
  return out;
}

// ---- generated submodules and dimensional decomposition -------------------

struct GeneratedSubmodule {
  Eigen::VectorXi rank;     // per-point rank of the generator span under G_i
  std::vector<Mat> frame;   // d_i x rank_i, G_i-orthonormal columns
};

inline GeneratedSubmodule generated_submodule(const std::vector<Section>& gens) {
  if (gens.empty()) throw usage_error("generated_submodule: no generators");
  const BundlePtr& b = gens[0].bundle;
  for (const auto& g : gens) require_same_bundle(g, gens[0], "generated_submodule");
  const int n = b->space->n, r = static_cast<int>(gens.size());
  GeneratedSubmodule out;
  out.rank.resize(n);
  out.frame.resize(n);
  for (int i = 0; i < n; ++i) {
    Mat c(b->dims(i), r);
    for (int a = 0; a < r; ++a) c.col(a) = gens[a].coeffs[i];
    Mat k = c.transpose() * b->gram[i] * c;
    int rank = 0;
    Mat combo = psd_orthonormal_frame(0.5 * (k + k.transpose()), &rank);
    out.rank(i) = rank;
    out.frame[i] = c * combo;
  }
  return out;
}

// Partition of points by fiber Gram rank; dim_loc(i) is that rank.
struct DimensionalDecomposition {
  Eigen::VectorXi dim_loc;
  std::map<int, std::vector<int>> classes;
};

inline DimensionalDecomposition dimensional_decomposition(const FiberBundle& b) {
  DimensionalDecomposition out;
  const int n = b.space->n;
  out.dim_loc.resize(n);
  for (int i = 0; i < n; ++i) {
    int rank = 0;
    psd_orthonormal_frame(b.gram[i], &rank);
    out.dim_loc(i) = rank;
    out.classes[rank].push_back(i);
  }
  return out;
}

// ---- point maps and pullbacks ---------------------------------------------

// A map of finite spaces phi: source -> target given by a vertex assignment.
// Compression is the least C with phi_* m_source <= C m_target; the
// Lipschitz constant needs distance tables on both sides.
struct PointMap {
  SpacePtr source, target;
  std::vector<int> assign;  // length n_source, values in [0, n_target)
  double compression = 0.0;
  double lipschitz = std::numeric_limits<double>::quiet_NaN();
};

inline PointMap make_point_map(SpacePtr source, SpacePtr target,
                               std::vector<int> assign) {
  PointMap phi;
  if (static_cast<int>(assign.size()) != source->n)
    throw usage_error("point map: assignment length != source size");
  for (int y = 0; y < source->n; ++y)
    if (assign[y] < 0 || assign[y] >= target->n)
      throw usage_error("point map: assignment out of range");
  Vec push = Vec::Zero(target->n);
  for (int y = 0; y < source->n; ++y) push(assign[y]) += source->m(y);
  phi.compression = 0.0;
  for (int x = 0; x < target->n; ++x)
    phi.compression = std::max(phi.compression, push(x) / target->m(x));
  if (source->has_dist() && target->has_dist()) {
    double lip = 0.0;
    for (int y = 0; y < source->n; ++y)
      for (int z = y + 1; z < source->n; ++z) {
        double dy = source->dist(y, z);
        if (dy <= 0) continue;
        lip = std::max(lip, target->dist(assign[y], assign[z]) / dy);
      }
    phi.lipschitz = lip;
  }
  phi.source = std::move(source);
  phi.target = std::move(target);
  phi.assign = std::move(assign);
  return phi;
}

inline PointMap compose(const PointMap& outer, const PointMap& inner) {
  if (inner.target != outer.source)
    throw usage_error("compose: maps do not chain");
  std::vector<int> assign(inner.assign.size());
  for (size_t z = 0; z < assign.size(); ++z)
    assign[z] = outer.assign[inner.assign[z]];
  return make_point_map(inner.source, outer.target, std::move(assign));
}

// Pullback bundle: the fiber over y is the fiber over phi(y), same Gram, so
// |phi^* v| = |v| o phi holds exactly.
inline BundlePtr pullback_module(const PointMap& phi, const BundlePtr& b) {
  if (b->space != phi.target)
    throw usage_error("pullback_module: bundle does not live on the map target");
  const int n = phi.source->n;
  Eigen::VectorXi dims(n);
  std::vector<Mat> gram(n);
  for (int y = 0; y < n; ++y) {
    dims(y) = b->dims(phi.assign[y]);
    gram[y] = b->gram[phi.assign[y]];
  }
  return make_bundle(phi.source, dims, std::move(gram));
}

inline Section pullback_section(const PointMap& phi, const Section& v,
                                const BundlePtr& pulled) {
  require_section(v, "pullback_section");
  Section out;
  out.bundle = pulled;
  out.coeffs.resize(phi.source->n);
  for (int y = 0; y < phi.source->n; ++y)
    out.coeffs[y] = v.coeffs[phi.assign[y]];
  return out;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json section_to_json(const Section& v) {
  nlohmann::json j;
  std::vector<int> dims;
  nlohmann::json coeffs = nlohmann::json::array();
  for (size_t i = 0; i < v.coeffs.size(); ++i) {
    dims.push_back(static_cast<int>(v.coeffs[i].size()));
    coeffs.push_back(std::vector<double>(v.coeffs[i].data(),
                                         v.coeffs[i].data() + v.coeffs[i].size()));
  }
  j["dims"] = dims;
  j["coeffs"] = coeffs;
  return j;
}

inline Section section_from_json(const nlohmann::json& j, BundlePtr b) {
  Section v = zero_section(std::move(b));
  auto dims = j.at("dims").get<std::vector<int>>();
  const auto& coeffs = j.at("coeffs");
  if (dims.size() != v.coeffs.size() || coeffs.size() != v.coeffs.size())
    throw usage_error("section_from_json: wrong number of points");
  for (size_t i = 0; i < v.coeffs.size(); ++i) {
    auto c = coeffs[i].get<std::vector<double>>();
    if (static_cast<int>(c.size()) != v.bundle->dims(static_cast<int>(i)))
      throw usage_error("section_from_json: coefficient length mismatch");
    v.coeffs[i] = Eigen::Map<Vec>(c.data(), c.size());
  }
  return v;
}

inline nlohmann::json bundle_to_json(const FiberBundle& b) {
  nlohmann::json j;
  std::vector<int> dims(b.dims.data(), b.dims.data() + b.dims.size());
  nlohmann::json gram = nlohmann::json::array();
  for (const Mat& g : b.gram) {
    std::vector<double> block;
    block.reserve(g.size());
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) block.push_back(g(r, c));
    gram.push_back(block);
  }
  j["dims"] = dims;
  j["gram"] = gram;
  return j;
}

}  // namespace gammacalc
