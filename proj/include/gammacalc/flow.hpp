#pragma once
// Measure-level Lagrangian flows. Points cannot move at finite scale, so the
// flow of a vector field X is the continuity equation for densities,
//
//   d/dt rho = -div(rho X),
//
// discretized with explicit upwind edge fluxes. The edge transport rate from
// i to j is the antisymmetrized pairing of X with the edge difference form,
//
//   u_ij = (v_ij - v_ji) / 2,   v_ij = sum_a c_a(i) (g_a(j) - g_a(i)),
//
// where c is the generator lift of X, and the flux w_ij u_ij rho_upwind with
// w_ij = m_i L_ij is exactly antisymmetric, so mass is conserved to roundoff
// and the scheme is positivity-preserving under the CFL condition. The
// pushforward bound (F_t)_* m <= C m becomes a density-compression bound:
// max rho_t grows at most like exp(int ||(div X_s)^-||_inf ds), checked with
// slack against the module divergence.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gammacalc/first_order.hpp"

namespace gammacalc {

struct DensityCurve {
  CotangentPtr ct;
  std::vector<double> times;        // M+1 grid points
  std::vector<ScalarField> rho;     // snapshots, nonnegative
  std::vector<double> mass;         // total mass per snapshot
  std::vector<double> compression;  // max rho_t / max rho_0
  std::vector<double> bound;        // exp(int ||(div X_s)^-||_inf ds)
  std::vector<Section> fields;      // one entry, or one per step
  double max_mass_drift = 0.0;      // worst relative drift from mass_0
  double cfl = 0.0;                 // max over segments of dt * rate / m
};

namespace detail {

// Transport operator for one piecewise-constant segment: (T rho)_i is the
// net outflow sum_j flux_ij, with T_ii the total outgoing rate.
struct TransportOp {
  SpMat t;
  double max_rate = 0.0;      // max_i T_ii / m_i, the CFL rate
  double div_neg_inf = 0.0;   // ||(div X)^-||_inf from the module divergence
};

inline TransportOp transport_op(const CotangentBundle& ct, const Section& x) {
  const auto& s = *ct.space;
  Mat c = generator_lift(ct, x);
  const int r = static_cast<int>(ct.gens.cols());
  // v_ij over the generator pattern, then u = (v - v^T)/2 on the same
  // (symmetric) pattern.
  std::vector<Trip> trips;
  for (int i = 0; i < s.n; ++i)
    for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
      if (it.col() == i) continue;
      double v = 0.0;
      for (int a = 0; a < r; ++a)
        v += c(i, a) * (ct.gens(it.col(), a) - ct.gens(i, a));
      trips.emplace_back(i, static_cast<int>(it.col()), v);
    }
  SpMat vmat(s.n, s.n);
  vmat.setFromTriplets(trips.begin(), trips.end());
  SpMat u = 0.5 * (vmat - SpMat(vmat.transpose()));
  TransportOp op;
  std::vector<Trip> ttrips;
  Vec rate = Vec::Zero(s.n);
  for (int i = 0; i < s.n; ++i)
    for (SpMatR::InnerIterator it(s.gen, i); it; ++it) {
      const int j = static_cast<int>(it.col());
      if (j == i) continue;
      double w = s.m(i) * it.value();
      if (w <= 0.0) continue;  // no transport along clamped edges
      double uij = u.coeff(i, j);
      if (uij > 0.0) {
        rate(i) += w * uij;
      } else if (uij < 0.0) {
        ttrips.emplace_back(i, j, w * uij);
      }
    }
  for (int i = 0; i < s.n; ++i)
    if (rate(i) != 0.0) ttrips.emplace_back(i, i, rate(i));
  op.t.resize(s.n, s.n);
  op.t.setFromTriplets(ttrips.begin(), ttrips.end());
  op.max_rate = (rate.cwiseQuotient(s.m)).maxCoeff();
  ScalarField div = divergence(ct, x);
  op.div_neg_inf = std::max(0.0, -div.minCoeff());
  return op;
}

}  // namespace detail

// Evolves rho0 through M explicit upwind steps on [0, T]. fields holds the
// generating vector field, either a single entry or one per step
// (piecewise constant in time).
inline DensityCurve lagrangian_flow(const CotangentPtr& ct,
                                    std::vector<Section> fields,
                                    ScalarField rho0, double T, int steps) {
  if (!ct) throw usage_error("lagrangian_flow: null cotangent bundle");
  const auto& s = *ct->space;
  require_field(s, rho0, "lagrangian_flow");
  if (rho0.minCoeff() < 0.0)
    throw usage_error("lagrangian_flow: negative initial density");
  if (T <= 0.0 || steps < 1)
    throw usage_error("lagrangian_flow: need positive horizon and steps");
  if (fields.empty() ||
      (fields.size() != 1 && static_cast<int>(fields.size()) != steps))
    throw usage_error(
        "lagrangian_flow: field list must have one entry or one per step");
  for (const auto& x : fields) {
    require_section(x, "lagrangian_flow");
    if (x.bundle != ct->reduced)
      throw usage_error("lagrangian_flow: field not in this cotangent module");
  }
  const double dt = T / steps;
  const double mass0 = integrate(s, rho0);
  if (mass0 <= 0.0)
    throw usage_error("lagrangian_flow: initial density has no mass");
  const double peak0 = rho0.maxCoeff();

  // Distinct segments share one transport operator.
  std::vector<detail::TransportOp> ops;
  ops.reserve(fields.size());
  double worst_rate = 0.0;
  for (const auto& x : fields) {
    ops.push_back(detail::transport_op(*ct, x));
    worst_rate = std::max(worst_rate, ops.back().max_rate);
  }
  if (dt * worst_rate > 0.9) {
    int need = static_cast<int>(std::ceil(T * worst_rate / 0.9));
    throw computation_error("lagrangian_flow: CFL violation, need at least " +
                            std::to_string(need) + " steps for this field");
  }

  DensityCurve curve;
  curve.ct = ct;
  curve.fields = std::move(fields);
  curve.cfl = dt * worst_rate;
  curve.times.reserve(steps + 1);
  curve.rho.reserve(steps + 1);
  curve.times.push_back(0.0);
  curve.rho.push_back(rho0);
  curve.mass.push_back(mass0);
  curve.compression.push_back(1.0);
  curve.bound.push_back(1.0);
  ScalarField rho = std::move(rho0);
  double logbound = 0.0;
  for (int k = 0; k < steps; ++k) {
    const auto& op = ops[curve.fields.size() == 1 ? 0 : k];
    rho -= dt * (op.t * rho).cwiseQuotient(s.m);
    double low = rho.minCoeff();
    if (low < -1e-12 * std::max(peak0, 1.0))
      throw computation_error(
          "lagrangian_flow: density went negative at step " +
          std::to_string(k + 1));
    rho = rho.cwiseMax(0.0);
    logbound += dt * op.div_neg_inf;
    curve.times.push_back(dt * (k + 1));
    curve.rho.push_back(rho);
    curve.mass.push_back(integrate(s, rho));
    curve.compression.push_back(peak0 > 0.0 ? rho.maxCoeff() / peak0 : 1.0);
    curve.bound.push_back(std::exp(logbound));
    curve.max_mass_drift =
        std::max(curve.max_mass_drift,
                 std::abs(curve.mass.back() - mass0) / mass0);
  }
  if (curve.max_mass_drift > tol::flow_mass)
    throw computation_error("lagrangian_flow: mass drift exceeded tolerance");
  return curve;
}

struct FlowDerivativeReport {
  std::vector<double> residual;  // interior steps 1..M-1
  double max_residual = 0.0;
  double mean_residual = 0.0;
  double scale = 0.0;  // largest one-sided transport rate seen
};

// Centered-difference check of d/dt int f rho_t dm = int df(X_t) rho_t dm.
// For time-dependent fields the right side averages the two adjacent
// segments, matching the kink of the piecewise-constant evolution.
inline FlowDerivativeReport flow_derivative_check(const DensityCurve& curve,
                                                  const ScalarField& f) {
  if (!curve.ct || curve.rho.size() < 3)
    throw usage_error("flow_derivative_check: curve too short");
  const auto& ct = *curve.ct;
  const auto& s = *ct.space;
  require_field(s, f, "flow_derivative_check");
  Section df = differential(ct, f);
  std::vector<ScalarField> pairings;
  pairings.reserve(curve.fields.size());
  for (const auto& x : curve.fields)
    pairings.push_back(dual_pairing(df, x));
  const int msteps = static_cast<int>(curve.rho.size()) - 1;
  const double dt = curve.times[1] - curve.times[0];
  std::vector<double> moment(msteps + 1);
  for (int k = 0; k <= msteps; ++k)
    moment[k] = inner_m(s, f, curve.rho[k]);
  FlowDerivativeReport rep;
  rep.scale = tol::scale_floor;
  for (int k = 1; k < msteps; ++k) {
    double lhs = (moment[k + 1] - moment[k - 1]) / (2.0 * dt);
    const ScalarField& pl =
        pairings[curve.fields.size() == 1 ? 0 : k - 1];
    const ScalarField& pr = pairings[curve.fields.size() == 1 ? 0 : k];
    double rhs = 0.5 * (inner_m(s, pl, curve.rho[k]) +
                        inner_m(s, pr, curve.rho[k]));
    rep.residual.push_back(std::abs(lhs - rhs));
    rep.scale = std::max({rep.scale, std::abs(lhs), std::abs(rhs)});
  }
  for (double r : rep.residual) {
    rep.max_residual = std::max(rep.max_residual, r);
    rep.mean_residual += r / rep.residual.size();
  }
  return rep;
}

}  // namespace gammacalc
