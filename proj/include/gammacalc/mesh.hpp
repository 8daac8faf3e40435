#pragma once

// Triangle-mesh backends: cotangent-weight Laplacian with mixed-Voronoi
// lumped vertex masses, an icosphere builder and a cone builder. Negative
// cotangent weights (obtuse triangle pairs) are clamped to zero so the
// generator keeps its Markov sign condition; each clamp is logged.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gammacalc/space.hpp"

namespace gammacalc {

struct TriMesh {
  Mat vertices;                          // n x 3 positions
  std::vector<std::array<int, 3>> faces;
};

// Cotangent of the angle at `a` in triangle (a,b,c).
inline double corner_cotan(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                           const Eigen::Vector3d& c) {
  Eigen::Vector3d u = b - a, v = c - a;
  double cross = u.cross(v).norm();
  if (cross < 1e-300) return 0.0;
  return u.dot(v) / cross;
}

// Mixed Voronoi vertex areas (circumcentric cells, half/quarter split for
// obtuse triangles). The per-triangle shares sum exactly to its area, so the
// total vertex mass equals the surface area.
inline void accumulate_mixed_area(const Eigen::Vector3d& p0,
                                  const Eigen::Vector3d& p1,
                                  const Eigen::Vector3d& p2, double* shares) {
  double area = 0.5 * (p1 - p0).cross(p2 - p0).norm();
  double c0 = corner_cotan(p0, p1, p2);
  double c1 = corner_cotan(p1, p2, p0);
  double c2 = corner_cotan(p2, p0, p1);
  if (c0 >= 0 && c1 >= 0 && c2 >= 0) {
    double e0 = (p1 - p2).squaredNorm();  // edge opposite vertex 0
    double e1 = (p2 - p0).squaredNorm();
    double e2 = (p0 - p1).squaredNorm();
    shares[0] += (e2 * c2 + e1 * c1) / 8.0;
    shares[1] += (e0 * c0 + e2 * c2) / 8.0;
    shares[2] += (e1 * c1 + e0 * c0) / 8.0;
  } else {
    int obtuse = c0 < 0 ? 0 : (c1 < 0 ? 1 : 2);
    for (int v = 0; v < 3; ++v)
      shares[v] += (v == obtuse) ? area / 2.0 : area / 4.0;
  }
}

inline FiniteMMSpace cotan_space(const TriMesh& mesh,
                                 const std::string& label) {
  const int n = static_cast<int>(mesh.vertices.rows());
  if (n < 3 || mesh.faces.empty()) throw usage_error("mesh: too small");
  std::map<std::pair<int, int>, double> weight;
  Vec mass = Vec::Zero(n);
  for (const auto& f : mesh.faces) {
    Eigen::Vector3d p[3] = {mesh.vertices.row(f[0]), mesh.vertices.row(f[1]),
                            mesh.vertices.row(f[2])};
    double shares[3] = {0, 0, 0};
    accumulate_mixed_area(p[0], p[1], p[2], shares);
    for (int v = 0; v < 3; ++v) mass(f[v]) += shares[v];
    for (int v = 0; v < 3; ++v) {
      int i = f[(v + 1) % 3], j = f[(v + 2) % 3];
      double w = 0.5 * corner_cotan(p[v], p[(v + 1) % 3], p[(v + 2) % 3]);
      auto key = std::minmax(i, j);
      weight[{key.first, key.second}] += w;
    }
  }
  int clamped = 0;
  std::vector<Trip> trips;
  trips.reserve(weight.size() * 4);
  Vec diag = Vec::Zero(n);
  for (auto& [edge, w] : weight) {
    if (w < 0) {
      ++clamped;
      w = 0.0;
    }
    if (w == 0.0) continue;
    auto [i, j] = edge;
    trips.emplace_back(i, j, w / mass(i));
    trips.emplace_back(j, i, w / mass(j));
    diag(i) -= w / mass(i);
    diag(j) -= w / mass(j);
  }
  for (int i = 0; i < n; ++i)
    if (diag(i) != 0.0) trips.emplace_back(i, i, diag(i));
  FiniteMMSpace s;
  s.n = n;
  s.m = mass;
  s.gen.resize(n, n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  s.intrinsic_dim = 2;
  s.coord_fields = mesh.vertices;
  s.label = label;
  if (clamped > 0)
    s.warnings.push_back("cotan weights clamped to zero on " +
                         std::to_string(clamped) + " obtuse edge(s)");
  return s;
}

// Geodesic (great-circle) distances for small spheres.
inline void fill_sphere_dist(FiniteMMSpace& s, const Mat& verts, double radius,
                             int cap = 2000) {
  if (s.n > cap) return;
  s.dist = Mat::Zero(s.n, s.n);
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j) {
      double c = verts.row(i).dot(verts.row(j)) / (radius * radius);
      double d = radius * std::acos(std::clamp(c, -1.0, 1.0));
      s.dist(i, j) = s.dist(j, i) = d;
    }
}

inline TriMesh icosphere_mesh(int subdivisions, double radius) {
  if (subdivisions < 0 || subdivisions > 7)
    throw usage_error("icosphere: subdivisions out of range [0,7]");
  if (!(radius > 0)) throw usage_error("icosphere: radius must be positive");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : verts) v.normalize();
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find({key.first, key.second});
      if (it != midpoint.end()) return it->second;
      Eigen::Vector3d p = (verts[a] + verts[b]).normalized();
      verts.push_back(p);
      int idx = static_cast<int>(verts.size()) - 1;
      midpoint[{key.first, key.second}] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces.swap(next);
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (int i = 0; i < mesh.vertices.rows(); ++i)
    mesh.vertices.row(i) = radius * verts[i].transpose();
  mesh.faces = std::move(faces);
  return mesh;
}

inline FiniteMMSpace icosphere(int subdivisions, double radius = 1.0) {
  TriMesh mesh = icosphere_mesh(subdivisions, radius);
  FiniteMMSpace s = cotan_space(
      mesh, "icosphere:" + std::to_string(subdivisions) + "," +
                std::to_string(radius));
  fill_sphere_dist(s, mesh.vertices, radius);
  return s;
}

// Cone of total apex angle `angle` (the surface angle around the vertex),
// isometrically embedded: a point at slant distance r and surface angle
// theta sits on a circle of radius r*angle/(2*pi). angle = 2*pi is a flat
// disk. Demo geometry for conical-singularity experiments.
inline FiniteMMSpace cone(double angle, int res) {
  const double two_pi = 2.0 * M_PI;
  if (!(angle > 0.0) || angle > two_pi + 1e-12)
    throw usage_error("cone: angle must lie in (0, 2*pi]");
  if (res < 2) throw usage_error("cone: res must be at least 2");
  int rings = res, spokes = std::max(3, 2 * res);
  double rho_ratio = angle / two_pi;
  double drop = std::sqrt(std::max(0.0, 1.0 - rho_ratio * rho_ratio));
  TriMesh mesh;
  mesh.vertices.resize(1 + rings * spokes, 3);
  mesh.vertices.row(0).setZero();
  for (int k = 1; k <= rings; ++k) {
    double r = static_cast<double>(k) / rings;
    for (int a = 0; a < spokes; ++a) {
      double psi = two_pi * a / spokes;
      int idx = 1 + (k - 1) * spokes + a;
      mesh.vertices.row(idx) << r * rho_ratio * std::cos(psi),
          r * rho_ratio * std::sin(psi), -r * drop;
    }
  }
  auto ring_idx = [&](int k, int a) { return 1 + (k - 1) * spokes + ((a % spokes + spokes) % spokes); };
  for (int a = 0; a < spokes; ++a)
    mesh.faces.push_back({0, ring_idx(1, a), ring_idx(1, a + 1)});
  for (int k = 1; k < rings; ++k)
    for (int a = 0; a < spokes; ++a) {
      mesh.faces.push_back(
          {ring_idx(k, a), ring_idx(k + 1, a), ring_idx(k + 1, a + 1)});
      mesh.faces.push_back(
          {ring_idx(k, a), ring_idx(k + 1, a + 1), ring_idx(k, a + 1)});
    }
  FiniteMMSpace s = cotan_space(mesh, "cone:" + std::to_string(angle) + "," +
                                          std::to_string(res));
  return s;
}

}  // namespace gammacalc
