#pragma once

// de Rham complex at finite scale. k-forms are sections of the k-th exterior
// power of the reduced cotangent fibers (identity Grams, so the weighted
// pairing is diag(m) per coefficient slot). The exterior derivative is
// assembled once per degree as a global sparse operator from the alternating
// sum formula evaluated on generator gradient frames,
//   dw(X_0..X_k) = sum_p (-1)^p X_p(w(..no p..))
//                + sum_{p<q} (-1)^{p+q} w([X_p,X_q], ..no p,q..),
// with X = grad g over all (k+1)-subsets of generators, then least-squares
// reconstructed into the (k+1)-fiber at each point. Evaluations against
// generator wedges are compound-matrix products, derivations expand through
// the edge form of Gamma, and brackets come from cached generator Hessians.
// d o d = 0 only in the continuum; the defect is measured, reported, and
// absorbed into the rank arithmetic by projecting im d_{k-1} into ker d_k.

#include <cstdint>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include "gammacalc/second_order.hpp"

namespace gammacalc {

// Matrix of k x k minors: rows indexed by k-subsets of the rows of a,
// columns by k-subsets of its columns, lex order on both sides.
inline Mat compound_matrix(const Mat& a, int k) {
  const auto& rs = k_subsets(static_cast<int>(a.rows()), k);
  const auto& cs = k_subsets(static_cast<int>(a.cols()), k);
  Mat out(rs.size(), cs.size());
  Mat minor(k, k);
  for (size_t ri = 0; ri < rs.size(); ++ri)
    for (size_t ci = 0; ci < cs.size(); ++ci) {
      for (int p = 0; p < k; ++p)
        for (int q = 0; q < k; ++q) minor(p, q) = a(rs[ri][p], cs[ci][q]);
      out(static_cast<int>(ri), static_cast<int>(ci)) =
          (k == 0) ? 1.0 : minor.determinant();
    }
  return out;
}

struct HodgeReport {
  int degree = 0;
  int betti_eigen = -1;  // -1 when inconclusive
  int betti_rank = 0;
  Vec eigenvalues;
  double gap_ratio = 0.0;
  double d2_defect = 0.0;
  bool inconclusive = false;
};

struct HodgeDecomposition {
  Section exact, coexact, harmonic;
  double ortho_residual = 0.0;  // pairwise weighted inner products
  double recon_residual = 0.0;  // |w - (exact+coexact+harmonic)| / |w|
};

class HodgeComplex {
 public:
  explicit HodgeComplex(std::shared_ptr<const SecondOrder> so)
      : so_(std::move(so)) {
    const auto& ct = so_->ct();
    const int n = ct.space->n;
    max_degree_ = 0;
    for (int i = 0; i < n; ++i)
      max_degree_ = std::max(max_degree_, ct.dim_loc(i));
    const int kd = max_degree_ + 1;  // top stored degree (trivial module)
    bundle_.resize(kd + 1);
    offset_.resize(kd + 1);
    mass_.resize(kd + 1);
    compound_.resize(kd + 1);
    for (int k = 0; k <= kd; ++k) {
      if (k == 1) {
        bundle_[k] = ct.reduced;  // same layout, keeps sections compatible
      } else {
        Eigen::VectorXi dims(n);
        for (int i = 0; i < n; ++i)
          dims(i) = static_cast<int>(binomial(ct.dim_loc(i), k));
        bundle_[k] = euclidean_bundle(ct.space, dims);
      }
      offset_[k].assign(n + 1, 0);
      for (int i = 0; i < n; ++i)
        offset_[k][i + 1] = offset_[k][i] + bundle_[k]->dims(i);
      mass_[k].resize(offset_[k][n]);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < bundle_[k]->dims(i); ++c)
          mass_[k](offset_[k][i] + c) = ct.space->m(i);
      compound_[k].resize(n);
      for (int i = 0; i < n; ++i)
        compound_[k][i] = compound_matrix(ct.gen_reduced[i], k);
    }
    d_.resize(kd);
    for (int k = 0; k < kd; ++k) d_[k] = assemble_d(k);
    dsvd_.resize(kd);
  }

  const SecondOrder& second_order() const { return *so_; }
  const CotangentBundle& ct() const { return so_->ct(); }
  int max_degree() const { return max_degree_; }
  const BundlePtr& form_bundle(int k) const {
    check_degree(k);
    return bundle_[k];
  }
  int form_space_dim(int k) const {
    check_degree(k);
    return offset_[k][ct().space->n];
  }
  const SpMat& d_op(int k) const {
    if (k < 0 || k >= static_cast<int>(d_.size()))
      throw usage_error("hodge: no d operator at this degree");
    return d_[k];
  }
  const Vec& mass(int k) const {
    check_degree(k);
    return mass_[k];
  }

  Vec to_global(int k, const Section& w) const {
    check_degree(k);
    if (w.bundle != bundle_[k])
      throw usage_error("hodge: section is not a form of this degree");
    Vec out(form_space_dim(k));
    for (int i = 0; i < ct().space->n; ++i)
      out.segment(offset_[k][i], w.coeffs[i].size()) = w.coeffs[i];
    return out;
  }

  Section from_global(int k, const Vec& v) const {
    check_degree(k);
    Section w = zero_section(bundle_[k]);
    for (int i = 0; i < ct().space->n; ++i)
      w.coeffs[i] = v.segment(offset_[k][i], bundle_[k]->dims(i));
    return w;
  }

  Section scalar_to_form(const ScalarField& f) const {
    require_field(*ct().space, f, "scalar_to_form");
    Section w = zero_section(bundle_[0]);
    for (int i = 0; i < ct().space->n; ++i) w.coeffs[i](0) = f(i);
    return w;
  }

  ScalarField form_to_scalar(const Section& w) const {
    if (w.bundle != bundle_[0])
      throw usage_error("form_to_scalar: not a degree-0 form");
    ScalarField f(ct().space->n);
    for (int i = 0; i < ct().space->n; ++i) f(i) = w.coeffs[i](0);
    return f;
  }

  Section exterior_derivative(int k, const Section& w) const {
    check_degree(k);
    if (k + 1 > max_degree_ + 1) return zero_section(bundle_.back());
    return from_global(k + 1, d_[k] * to_global(k, w));
  }

  // delta_k: degree k -> k-1, the exact weighted adjoint of d_{k-1};
  // identically zero on functions by convention.
  Section codifferential(int k, const Section& w) const {
    check_degree(k);
    if (k == 0) return zero_section(bundle_[0]);
    Vec v = mass_[k].cwiseProduct(to_global(k, w));
    Vec out = (d_[k - 1].transpose() * v).cwiseQuotient(mass_[k - 1]);
    return from_global(k - 1, out);
  }

  Section hodge_laplacian(int k, const Section& w) const {
    check_degree(k);
    Section out = codifferential(k + 1, exterior_derivative(k, w));
    if (k > 0) {
      Section dd = exterior_derivative(k - 1, codifferential(k, w));
      out = axpy(1.0, out, 1.0, dd);
    }
    return out;
  }

  double weighted_dot(int k, const Section& a, const Section& b) const {
    return to_global(k, a).dot(mass_[k].cwiseProduct(to_global(k, b)));
  }

  double hodge_energy(int k, const Section& w) const {
    Section dw = exterior_derivative(k, w);
    double e = weighted_dot(k + 1, dw, dw);
    if (k > 0) {
      Section cw = codifferential(k, w);
      e += weighted_dot(k - 1, cw, cw);
    }
    return 0.5 * e;
  }

  // Symmetrized Hodge Laplacian at degree k in the m-weighted metric.
  SpMat symmetric_form(int k) const {
    check_degree(k);
    const int nk = form_space_dim(k);
    SpMat a(nk, nk);
    if (k < static_cast<int>(d_.size())) {
      SpMat md = mass_[k + 1].asDiagonal() * d_[k];
      a = SpMat(d_[k].transpose() * md);
    }
    if (k > 0) {
      SpMat dt = d_[k - 1].transpose() * mass_[k].asDiagonal();
      SpMat lower = SpMat(dt.transpose() *
                          SpMat(mass_[k - 1].cwiseInverse().asDiagonal() * dt));
      a = a + lower;
    }
    Vec mih = mass_[k].cwiseSqrt().cwiseInverse();
    return SpMat(mih.asDiagonal() * SpMat(a * SpMat(mih.asDiagonal())));
  }

  // Operator norm of d o d one degree up from k, in the weighted metric;
  // power iteration with a fixed seed.
  double d2_defect(int k) const {
    if (k + 1 >= static_cast<int>(d_.size())) return 0.0;
    SpMat dd = d_[k + 1] * d_[k];
    if (dd.rows() == 0 || dd.nonZeros() == 0) return 0.0;
    Vec mout = mass_[k + 2], min_ = mass_[k];
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    Vec v(dd.cols());
    for (int i = 0; i < v.size(); ++i) v(i) = nd(rng);
    for (int it = 0; it < 50; ++it) {
      Vec w = mout.cwiseProduct(dd * v.cwiseQuotient(min_.cwiseSqrt()));
      Vec back = (dd.transpose() * w).cwiseQuotient(min_.cwiseSqrt());
      if (back.norm() == 0.0) return 0.0;
      v = back / back.norm();
    }
    // v approximates the top right-singular direction; recover the norm.
    Vec w = dd * v.cwiseQuotient(min_.cwiseSqrt());
    return std::sqrt(w.dot(mout.cwiseProduct(w)));
  }

  HodgeReport harmonic_basis(int k, int count_hint,
                             std::vector<Section>* basis = nullptr,
                             uint64_t seed = 1) const {
    check_degree(k);
    HodgeReport rep;
    rep.degree = k;
    rep.d2_defect = d2_defect(k > 0 ? k - 1 : 0);
    const int nk = form_space_dim(k);
    rep.betti_rank = betti_rank(k);
    if (nk == 0) {
      rep.betti_eigen = 0;
      rep.gap_ratio = std::numeric_limits<double>::infinity();
      return rep;
    }
    if (count_hint < 1) count_hint = 1;
    int want = std::min(nk, std::max(2 * count_hint, 8));
    SpMat s = symmetric_form(k);
    EigenPairs ep = smallest_eigenpairs(s, want, seed);
    rep.eigenvalues = ep.values;
    if (!ep.converged) {
      rep.inconclusive = true;
      return rep;
    }
    // Harmonic means numerically zero relative to the operator norm, not
    // merely separated from the next eigenvalue: mesh complexes can carry an
    // isolated low mode an order of magnitude under the first band that is
    // still far from kernel scale. The gap ratio then measures how cleanly
    // the spectrum splits at the zero threshold.
    const int got = static_cast<int>(ep.values.size());
    const double zero_thr =
        std::max(tol::harmonic_rel * sym_opnorm_estimate(s), 1e-300);
    int dim = 0;
    while (dim < got && ep.values(dim) < zero_thr) ++dim;
    if (dim == got && got < nk) {
      rep.inconclusive = true;  // zero cluster may extend past what we saw
    } else {
      double above = dim < got ? ep.values(dim)
                               : std::numeric_limits<double>::infinity();
      double below = 0.1 * zero_thr;
      if (dim > 0) below = std::max(std::abs(ep.values(dim - 1)), below);
      rep.gap_ratio = above / below;
      rep.betti_eigen = dim;
      if (rep.gap_ratio < tol::gap_ratio_min) {
        rep.inconclusive = true;
        rep.betti_eigen = -1;
      }
    }
    if (basis) {
      basis->clear();
      Vec mih = mass_[k].cwiseSqrt().cwiseInverse();
      for (int b = 0; b < rep.betti_eigen; ++b)
        basis->push_back(from_global(k, mih.cwiseProduct(ep.vectors.col(b))));
    }
    return rep;
  }

  // Rank arithmetic in the weighted metric: B_k = dim ker d_k - rank of
  // im d_{k-1} after projecting it into ker d_k (absorbs the d^2 defect).
  int betti_rank(int k) const {
    check_degree(k);
    const int nk = form_space_dim(k);
    if (nk == 0) return 0;
    int nullity;
    const DegreeSvd* sk = nullptr;
    if (k < static_cast<int>(d_.size()) && d_[k].rows() > 0) {
      sk = &weighted_svd(k);
      nullity = nk - sk->rank;
    } else {
      nullity = nk;
    }
    if (k == 0 || nullity == 0) return nullity;
    if (d_[k - 1].rows() == 0 || d_[k - 1].cols() == 0) return nullity;
    const DegreeSvd& skm = weighted_svd(k - 1);
    if (skm.rank == 0) return nullity;
    if (!sk) return nullity - skm.rank;  // trivial kernel: everything is closed
    Mat overlap = sk->full_v.rightCols(nullity).transpose() * skm.im;
    return nullity - rank_of(overlap);
  }

  HodgeDecomposition hodge_decompose(int k, const Section& w,
                                     int count_hint = 4) const {
    check_degree(k);
    std::vector<Section> hbasis;
    harmonic_basis(k, count_hint, &hbasis);
    Vec wg = to_global(k, w);
    Vec msq = mass_[k].cwiseSqrt();
    Vec wt = msq.cwiseProduct(wg);  // work in the flat metric
    const int nk = form_space_dim(k);

    // Orthonormal frames, Gram-Schmidt ordered harmonic -> exact -> coexact
    // so mutual orthogonality of the parts is exact by construction.
    Mat h(nk, hbasis.size());
    for (size_t b = 0; b < hbasis.size(); ++b)
      h.col(static_cast<int>(b)) = msq.cwiseProduct(to_global(k, hbasis[b]));
    Mat uex(nk, 0), ucoex(nk, 0);
    if (k > 0 && d_[k - 1].cols() > 0 && d_[k - 1].rows() > 0)
      uex = weighted_svd(k - 1).im;
    if (k < static_cast<int>(d_.size()) && d_[k].rows() > 0) {
      const DegreeSvd& sk = weighted_svd(k);
      ucoex = sk.full_v.leftCols(sk.rank);  // range of the weighted adjoint
    }
    // The projected block is heavily rank-deficient (the adjoint range can
    // exceed the complement's dimension), so the QR must pivot: without
    // pivoting the deficient columns normalize amplified noise and leak the
    // prior subspaces back into the frame. A second projection pass scrubs
    // the O(eps) residue the truncated factorization leaves behind.
    auto project_out = [](Mat& u, const std::vector<const Mat*>& priors) {
      for (const Mat* p : priors)
        if (p->cols() > 0) u -= (*p) * (p->transpose() * u);
    };
    auto orthogonalize = [&](Mat& u, const std::vector<const Mat*>& priors) {
      project_out(u, priors);
      if (u.cols() == 0) return;
      Eigen::ColPivHouseholderQR<Mat> qr(u);
      Vec rdiag = qr.matrixR()
                      .topLeftCorner(std::min(u.rows(), u.cols()),
                                     std::min(u.rows(), u.cols()))
                      .diagonal()
                      .cwiseAbs();
      double scale = rdiag.size() ? rdiag(0) : 0.0;
      int keep = 0;
      while (keep < rdiag.size() && rdiag(keep) > rank_cutoff(scale)) ++keep;
      Mat q = qr.householderQ() * Mat::Identity(u.rows(), keep);
      project_out(q, priors);
      if (keep > 0) {
        Eigen::HouseholderQR<Mat> clean(q);
        q = clean.householderQ() * Mat::Identity(u.rows(), keep);
      }
      u = q;
    };
    orthogonalize(uex, {&h});
    orthogonalize(ucoex, {&h, &uex});

    HodgeDecomposition out;
    Vec hw = h.cols() ? Vec(h * (h.transpose() * wt)) : Vec(Vec::Zero(nk));
    Vec ew = uex.cols() ? Vec(uex * (uex.transpose() * wt)) : Vec(Vec::Zero(nk));
    Vec cw =
        ucoex.cols() ? Vec(ucoex * (ucoex.transpose() * wt)) : Vec(Vec::Zero(nk));
    Vec mis = msq.cwiseInverse();
    out.harmonic = from_global(k, mis.cwiseProduct(hw));
    out.exact = from_global(k, mis.cwiseProduct(ew));
    out.coexact = from_global(k, mis.cwiseProduct(cw));
    double wn = std::max(wt.norm(), tol::scale_floor);
    out.ortho_residual =
        (std::abs(hw.dot(ew)) + std::abs(hw.dot(cw)) + std::abs(ew.dot(cw))) /
        (wn * wn);
    out.recon_residual = (wt - hw - ew - cw).norm() / wn;
    return out;
  }

 private:
  void check_degree(int k) const {
    if (k < 0 || k >= static_cast<int>(bundle_.size()))
      throw usage_error("hodge: degree out of range (max fiber rank " +
                        std::to_string(max_degree_) + ")");
  }

  Mat weighted_dense(int k) const {
    Mat dk = Mat(d_[k]);
    if (dk.size() == 0) return dk;
    return mass_[k + 1].cwiseSqrt().asDiagonal() * dk *
           mass_[k].cwiseSqrt().cwiseInverse().asDiagonal();
  }

  // One SVD of each weighted d_k serves kernel, image, and rank queries for
  // both adjacent degrees; the factorizations dominate the Betti cost on
  // mesh-sized complexes, so they are computed once and kept.
  struct DegreeSvd {
    Vec sv;
    Mat im;      // orthonormal basis of the numerical image
    Mat full_v;  // right singular vectors; kernel = trailing columns
    int rank = 0;
  };

  const DegreeSvd& weighted_svd(int k) const {
    if (!dsvd_[k]) {
      auto e = std::make_unique<DegreeSvd>();
      Mat dk = weighted_dense(k);
      if (dk.size() == 0) {
        e->im = Mat(dk.rows(), 0);
        e->full_v = Mat::Identity(dk.cols(), dk.cols());
      } else {
        Eigen::BDCSVD<Mat> svd(dk, Eigen::ComputeThinU | Eigen::ComputeFullV);
        e->sv = svd.singularValues();
        double cut = rank_cutoff(e->sv.size() ? e->sv(0) : 0.0);
        for (int i = 0; i < e->sv.size(); ++i)
          if (e->sv(i) > cut) ++e->rank;
        e->im = svd.matrixU().leftCols(e->rank);
        e->full_v = svd.matrixV();
      }
      dsvd_[k] = std::move(e);
    }
    return *dsvd_[k];
  }

  // Build the global sparse d_k from per-point blocks; everything is local
  // to the one-ring of each point.
  SpMat assemble_d(int k) {
    const auto& ct = so_->ct();
    const auto& s = *ct.space;
    const int n = s.n, r = static_cast<int>(ct.gens.cols());
    const auto& subs_k = k_subsets(r, k);
    const auto& subs_k1 = k_subsets(r, k + 1);
    // Mask lookup for (k+1)-subsets of generators.
    std::unordered_map<uint64_t, int> t_index;
    std::vector<uint64_t> masks(subs_k1.size());
    for (size_t t = 0; t < subs_k1.size(); ++t) {
      uint64_t m = 0;
      for (int e : subs_k1[t]) m |= (uint64_t{1} << e);
      masks[t] = m;
      t_index.emplace(m, static_cast<int>(t));
    }
    std::vector<Trip> trips;
    const int nt = static_cast<int>(subs_k1.size());
    for (int i = 0; i < n; ++i) {
      const int rows_i = bundle_[k + 1]->dims(i);
      if (rows_i == 0) continue;
      // dF/dw(j) in generator-subset coordinates.
      std::unordered_map<int, Mat> blocks;
      auto block = [&](int j) -> Mat& {
        auto it = blocks.find(j);
        if (it == blocks.end())
          it = blocks.emplace(j, Mat::Zero(nt, bundle_[k]->dims(j))).first;
        return it->second;
      };
      // Derivation terms through the edge form of Gamma.
      for (size_t si = 0; si < subs_k.size(); ++si) {
        uint64_t smask = 0;
        for (int e : subs_k[si]) smask |= (uint64_t{1} << e);
        for (int t = 0; t < r; ++t) {
          if (smask & (uint64_t{1} << t)) continue;
          int ti = t_index.at(smask | (uint64_t{1} << t));
          int pos = 0;
          for (int e : subs_k[si])
            if (e < t) ++pos;
          double sign = (pos % 2 == 0) ? 1.0 : -1.0;
          for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
            int j = static_cast<int>(it.col());
            if (j == i) continue;
            double w = 0.5 * it.value() * (ct.gens(j, t) - ct.gens(i, t));
            if (w == 0.0) continue;
            if (bundle_[k]->dims(j) > 0)
              block(j).row(ti) +=
                  sign * w *
                  compound_[k][j].col(static_cast<int>(si)).transpose();
            if (bundle_[k]->dims(i) > 0)
              block(i).row(ti) -=
                  sign * w *
                  compound_[k][i].col(static_cast<int>(si)).transpose();
          }
        }
      }
      // Bracket terms (vanish for k = 0).
      if (k >= 1 && bundle_[k]->dims(i) > 0) {
        const int d = ct.dim_loc(i);
        const auto& fiber_subs = k_subsets(d, k);
        Mat stack(d, k);
        Mat minor(k, k);
        for (int ti = 0; ti < nt; ++ti) {
          const auto& tset = subs_k1[ti];
          for (int p = 0; p < k + 1; ++p)
            for (int q = p + 1; q < k + 1; ++q) {
              Vec u = so_->generator_bracket(tset[p], tset[q], i);
              stack.col(0) = u;
              int c = 1;
              for (int e = 0; e < k + 1; ++e)
                if (e != p && e != q)
                  stack.col(c++) = ct.gen_reduced[i].col(tset[e]);
              double sign = ((p + q) % 2 == 0) ? 1.0 : -1.0;
              for (size_t a = 0; a < fiber_subs.size(); ++a) {
                for (int rr = 0; rr < k; ++rr)
                  minor.row(rr) = stack.row(fiber_subs[a][rr]);
                block(i)(ti, static_cast<int>(a)) +=
                    sign * minor.determinant();
              }
            }
        }
      }
      // Reconstruct into the (k+1)-fiber and emit triplets.
      Mat ri = pseudo_inverse(Mat(compound_[k + 1][i].transpose()));
      for (const auto& [j, b] : blocks) {
        Mat out = ri * b;
        for (int a = 0; a < out.rows(); ++a)
          for (int c = 0; c < out.cols(); ++c)
            if (out(a, c) != 0.0)
              trips.emplace_back(offset_[k + 1][i] + a, offset_[k][j] + c,
                                 out(a, c));
      }
    }
    SpMat d(offset_[k + 1][n], offset_[k][n]);
    d.setFromTriplets(trips.begin(), trips.end());
    return d;
  }

  std::shared_ptr<const SecondOrder> so_;
  int max_degree_ = 0;
  std::vector<BundlePtr> bundle_;
  std::vector<std::vector<int>> offset_;
  std::vector<Vec> mass_;
  std::vector<std::vector<Mat>> compound_;
  std::vector<SpMat> d_;
  mutable std::vector<std::unique_ptr<DegreeSvd>> dsvd_;
};

// Shuffle wedge of a k-form with an l-form in the lexicographic subset
// basis (determinant convention, no factorial factors): for |S| = k+l,
//   (a ^ b)_S = sum over splits S = A u B, |A| = k, of sign(A,B) a_A b_B,
// where the sign is the parity of the shuffle sorting (A,B) into S.
inline Section wedge_product(const HodgeComplex& h, int k, const Section& a,
                             int l, const Section& b) {
  if (k < 0 || l < 0) throw usage_error("wedge_product: negative degree");
  if (a.bundle != h.form_bundle(k) || b.bundle != h.form_bundle(l))
    throw usage_error("wedge_product: sections are not forms of the stated degrees");
  const auto& ct = h.ct();
  const int n = ct.space->n;
  Section out = zero_section(h.form_bundle(std::min(k + l, h.max_degree() + 1)));
  for (int i = 0; i < n; ++i) {
    const int d = ct.dim_loc(i);
    if (k + l > d) continue;
    const auto& skl = k_subsets(d, k + l);
    const auto& ska = k_subsets(d, k);
    const auto& skb = k_subsets(d, l);
    // positions of each subset in its lex list, keyed by bitmask
    auto index_of = [](const std::vector<std::vector<int>>& subs) {
      std::map<unsigned, int> idx;
      for (int t = 0; t < static_cast<int>(subs.size()); ++t) {
        unsigned m = 0;
        for (int e : subs[t]) m |= 1u << e;
        idx[m] = t;
      }
      return idx;
    };
    auto ia = index_of(ska), ib = index_of(skb);
    const auto& splits = k_subsets(k + l, k);  // positions inside S
    for (int si = 0; si < static_cast<int>(skl.size()); ++si) {
      const auto& s = skl[si];
      for (const auto& pos : splits) {
        unsigned ma = 0, mb = 0;
        std::vector<bool> ina(k + l, false);
        int inversions = 0;
        for (int t = 0; t < k; ++t) {
          ina[pos[t]] = true;
          ma |= 1u << s[pos[t]];
          inversions += pos[t] - t;  // elements of B jumped over
        }
        for (int t = 0; t < k + l; ++t)
          if (!ina[t]) mb |= 1u << s[t];
        double sign = (inversions % 2 == 0) ? 1.0 : -1.0;
        out.coeffs[i](si) += sign * a.coeffs[i](ia.at(ma)) * b.coeffs[i](ib.at(mb));
      }
    }
  }
  return out;
}

// Pullback of a k-form along phi: express w over generator wedges by the
// minimum-norm per-point solve, then recombine with the wedges of the pulled
// generator differentials on the source.
inline Section pullback_k_form(const PointMap& phi, const HodgeComplex& hx,
                               const HodgeComplex& hy, int k,
                               const Section& w) {
  const CotangentBundle& cx = hx.ct();
  const CotangentBundle& cy = hy.ct();
  if (cx.space != phi.target || cy.space != phi.source)
    throw usage_error("pullback_k_form: spaces do not match the map");
  if (w.bundle != hx.form_bundle(k))
    throw usage_error("pullback_k_form: wrong degree");
  const int r = static_cast<int>(cx.gens.cols());
  const int ny = phi.source->n;
  // Generator-subset coefficients on the target.
  std::vector<Vec> c(phi.target->n);
  for (int x = 0; x < phi.target->n; ++x) {
    Mat e = compound_matrix(cx.gen_reduced[x], k);
    c[x] = pinv_solve(e, w.coeffs[x]);
  }
  // Differentials of pulled generators on the source.
  std::vector<Section> dp;
  dp.reserve(r);
  for (int a = 0; a < r; ++a) {
    ScalarField ga(ny);
    for (int y = 0; y < ny; ++y) ga(y) = cx.gens(phi.assign[y], a);
    dp.push_back(differential_projected(cy, ga));
  }
  Section out = zero_section(hy.form_bundle(k));
  for (int y = 0; y < ny; ++y) {
    int dy = cy.dim_loc(y);
    Mat stack(dy, r);
    for (int a = 0; a < r; ++a) stack.col(a) = dp[a].coeffs[y];
    out.coeffs[y] = compound_matrix(stack, k) * c[phi.assign[y]];
  }
  return out;
}

struct CohomologyMap {
  Mat matrix;  // rows: source-space harmonic basis, cols: target's
  double functoriality_residual = 0.0;
  HodgeReport target_report, source_report;
};

// Matrix of the map induced on degree-k cohomology by pullback along phi,
// written in the orthonormal harmonic bases; the d(phi*) = phi*(d) residual
// is measured on the harmonic representatives.
inline CohomologyMap cohomology_pullback(const PointMap& phi,
                                         const HodgeComplex& hx,
                                         const HodgeComplex& hy, int k,
                                         int count_hint = 4) {
  CohomologyMap out;
  std::vector<Section> bx, by;
  out.target_report = hx.harmonic_basis(k, count_hint, &bx);
  out.source_report = hy.harmonic_basis(k, count_hint, &by);
  out.matrix = Mat::Zero(by.size(), bx.size());
  for (size_t b = 0; b < bx.size(); ++b) {
    Section pb = pullback_k_form(phi, hx, hy, k, bx[b]);
    for (size_t a = 0; a < by.size(); ++a)
      out.matrix(static_cast<int>(a), static_cast<int>(b)) =
          hy.weighted_dot(k, by[a], pb);
    // Functoriality on the representative.
    Section dx = hx.exterior_derivative(k, bx[b]);
    Section pb_dx = pullback_k_form(phi, hx, hy, k + 1, dx);
    Section d_pb = hy.exterior_derivative(k, pb);
    Section diff = axpy(1.0, d_pb, -1.0, pb_dx);
    double num = std::sqrt(hy.weighted_dot(k + 1, diff, diff));
    double den = std::max(std::sqrt(hy.weighted_dot(k, pb, pb)),
                          tol::scale_floor);
    out.functoriality_residual = std::max(out.functoriality_residual, num / den);
  }
  return out;
}

}  // namespace gammacalc
