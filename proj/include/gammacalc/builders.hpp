#pragma once

// Reference-space builders and file ingestion. Graph builders (path, cycle)
// use unit edge weights and unit vertex measure; grid_torus discretizes the
// flat d-torus with cell-volume vertex masses so the generator converges to
// the Laplace-Beltrami operator; mesh builders live in mesh.hpp. A builder
// spec string has the form "name:arg1,arg2,..." (e.g. "grid_torus:2,32").

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gammacalc/mesh.hpp"
#include "gammacalc/space.hpp"

namespace gammacalc {

inline void fill_graph_dist(FiniteMMSpace& s,
                            const std::function<double(int, int)>& d,
                            int cap = 2000) {
  if (s.n > cap) return;
  s.dist = Mat::Zero(s.n, s.n);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) s.dist(i, j) = d(i, j);
}

inline FiniteMMSpace path_space(int n) {
  if (n < 2) throw usage_error("path: need at least 2 points");
  FiniteMMSpace s;
  s.n = n;
  s.m = Vec::Ones(n);
  std::vector<Trip> trips;
  for (int i = 0; i + 1 < n; ++i) {
    trips.emplace_back(i, i + 1, 1.0);
    trips.emplace_back(i + 1, i, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    double deg = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    trips.emplace_back(i, i, -deg);
  }
  s.gen.resize(n, n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  s.intrinsic_dim = 1;
  s.label = "path:" + std::to_string(n);
  fill_graph_dist(s, [](int i, int j) { return std::abs(i - j); });
  return s;
}

inline FiniteMMSpace cycle_space(int n) {
  if (n < 3) throw usage_error("cycle: need at least 3 points");
  FiniteMMSpace s;
  s.n = n;
  s.m = Vec::Ones(n);
  std::vector<Trip> trips;
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, (i + 1) % n, 1.0);
    trips.emplace_back((i + 1) % n, i, 1.0);
    trips.emplace_back(i, i, -2.0);
  }
  s.gen.resize(n, n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  s.intrinsic_dim = 1;
  s.label = "cycle:" + std::to_string(n);
  fill_graph_dist(s, [n](int i, int j) {
    int d = std::abs(i - j);
    return static_cast<double>(std::min(d, n - d));
  });
  return s;
}

// Flat d-torus sampled on a res^d lattice. Axis a has period side[a] and
// step h_a = side[a]/res; vertex mass is the cell volume and the generator
// is the standard second-difference stencil, L_ij = 1/h_a^2 across axis a.
// Coordinate fields are cos/sin of each angle (the raw angle is not
// continuous across the period).
inline FiniteMMSpace grid_torus(int d, int res,
                                std::vector<double> side = {}) {
  if (d < 1 || d > 4) throw usage_error("grid_torus: dimension out of range [1,4]");
  if (res < 2) throw usage_error("grid_torus: res must be at least 2");
  if (side.empty()) side.assign(d, 1.0);
  if (static_cast<int>(side.size()) != d)
    throw usage_error("grid_torus: need one side length per dimension");
  for (double L : side)
    if (!(L > 0)) throw usage_error("grid_torus: nonpositive side length");
  long long total = 1;
  for (int a = 0; a < d; ++a) total *= res;
  if (total > 2'000'000) throw usage_error("grid_torus: lattice too large");
  const int n = static_cast<int>(total);

  std::vector<double> h(d);
  double cell = 1.0;
  for (int a = 0; a < d; ++a) {
    h[a] = side[a] / res;
    cell *= h[a];
  }
  std::vector<long long> stride(d, 1);
  for (int a = 1; a < d; ++a) stride[a] = stride[a - 1] * res;
  auto coord = [&](int idx, int a) {
    return static_cast<int>((idx / stride[a]) % res);
  };

  FiniteMMSpace s;
  s.n = n;
  s.m = Vec::Constant(n, cell);
  std::vector<Trip> trips;
  trips.reserve(static_cast<size_t>(n) * (2 * d + 1));
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int a = 0; a < d; ++a) {
      double w = 1.0 / (h[a] * h[a]);
      int c = coord(i, a);
      int up = i + static_cast<int>(stride[a]) * ((c + 1) % res - c);
      int dn = i + static_cast<int>(stride[a]) * ((c - 1 + res) % res - c);
      trips.emplace_back(i, up, w);
      trips.emplace_back(i, dn, w);
      diag -= 2.0 * w;
    }
    trips.emplace_back(i, i, diag);
  }
  s.gen.resize(n, n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  s.intrinsic_dim = d;
  s.coord_fields.resize(n, 2 * d);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      double theta = 2.0 * M_PI * coord(i, a) / res;
      s.coord_fields(i, 2 * a) = std::cos(theta);
      s.coord_fields(i, 2 * a + 1) = std::sin(theta);
    }
  std::ostringstream name;
  name << "grid_torus:" << d << "," << res;
  for (double L : side) name << "," << L;
  s.label = name.str();
  fill_graph_dist(s, [&](int i, int j) {
    double acc = 0.0;
    for (int a = 0; a < d; ++a) {
      int dc = std::abs(coord(i, a) - coord(j, a));
      double dx = std::min(dc, res - dc) * h[a];
      acc += dx * dx;
    }
    return std::sqrt(acc);
  });
  return s;
}

// JSON space format: {"n", "measure":[...], "edges":[[i,j,w],...],
// "dist": optional row-major array}. The generator is L_ij = w_ij / m_i.
inline FiniteMMSpace space_from_json(const nlohmann::json& j,
                                     const std::string& origin = "<json>") {
  auto fail = [&](const std::string& msg) -> void {
    throw usage_error(origin + ": " + msg);
  };
  if (!j.contains("n") || !j.contains("measure") || !j.contains("edges"))
    fail("missing required field (need n, measure, edges)");
  FiniteMMSpace s;
  s.n = j.at("n").get<int>();
  if (s.n <= 0) fail("n must be positive");
  auto mv = j.at("measure").get<std::vector<double>>();
  if (static_cast<int>(mv.size()) != s.n) fail("measure length != n");
  s.m = Eigen::Map<Vec>(mv.data(), s.n);
  std::vector<Trip> trips;
  Vec diag = Vec::Zero(s.n);
  int edge_no = 0;
  for (const auto& e : j.at("edges")) {
    ++edge_no;
    if (!e.is_array() || e.size() != 3)
      fail("edge #" + std::to_string(edge_no) + " is not [i,j,w]");
    int a = e[0].get<int>(), b = e[1].get<int>();
    double w = e[2].get<double>();
    if (a < 0 || a >= s.n || b < 0 || b >= s.n || a == b)
      fail("edge #" + std::to_string(edge_no) + " has invalid endpoints");
    if (!(w > 0)) fail("edge #" + std::to_string(edge_no) + " weight not positive");
    trips.emplace_back(a, b, w / s.m(a));
    trips.emplace_back(b, a, w / s.m(b));
    diag(a) -= w / s.m(a);
    diag(b) -= w / s.m(b);
  }
  for (int i = 0; i < s.n; ++i)
    if (diag(i) != 0.0) trips.emplace_back(i, i, diag(i));
  s.gen.resize(s.n, s.n);
  s.gen.setFromTriplets(trips.begin(), trips.end());
  if (j.contains("dist")) {
    auto dv = j.at("dist").get<std::vector<double>>();
    if (static_cast<int>(dv.size()) != s.n * s.n)
      fail("dist must be a row-major n*n array");
    s.dist = Eigen::Map<Mat>(dv.data(), s.n, s.n).transpose();
  }
  s.label = "from_file";
  validate_space(s);
  return s;
}

inline nlohmann::json space_to_json(const FiniteMMSpace& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["measure"] = std::vector<double>(s.m.data(), s.m.data() + s.n);
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < s.gen.outerSize(); ++i)
    for (SpMatR::InnerIterator it(s.gen, i); it; ++it)
      if (it.col() > i && it.value() > 0)
        edges.push_back({i, static_cast<int>(it.col()),
                         it.value() * s.m(i)});
  j["edges"] = edges;
  if (s.has_dist()) {
    std::vector<double> dv(static_cast<size_t>(s.n) * s.n);
    for (int i = 0; i < s.n; ++i)
      for (int k = 0; k < s.n; ++k) dv[static_cast<size_t>(i) * s.n + k] = s.dist(i, k);
    j["dist"] = dv;
  }
  return j;
}

inline FiniteMMSpace space_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("from_file: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    // Recover the line number from the byte offset for the message.
    std::ifstream again(path);
    std::string text((std::istreambuf_iterator<char>(again)),
                     std::istreambuf_iterator<char>());
    size_t line = 1;
    for (size_t p = 0; p < std::min(text.size(), err.byte); ++p)
      if (text[p] == '\n') ++line;
    throw usage_error(path + ":" + std::to_string(line) +
                      ": JSON parse error: " + err.what());
  }
  FiniteMMSpace s = space_from_json(j, path);
  s.label = "from_file:" + path;
  return s;
}

// Parse "name:a,b,..." into a space. Accepted: path(n), cycle(n),
// grid_torus(d,res[,side...]), icosphere(subdiv[,radius]), cone(angle,res),
// from_file(path).
inline FiniteMMSpace build_space(const std::string& spec) {
  std::string name = spec, args;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    name = spec.substr(0, colon);
    args = spec.substr(colon + 1);
  }
  std::vector<std::string> parts;
  std::stringstream ss(args);
  std::string tok;
  while (std::getline(ss, tok, ',')) parts.push_back(tok);
  auto num = [&](size_t i) -> double {
    if (i >= parts.size())
      throw usage_error("build_space: missing argument in '" + spec + "'");
    try {
      return std::stod(parts[i]);
    } catch (...) {
      throw usage_error("build_space: bad numeric argument '" + parts[i] + "'");
    }
  };
  auto integer = [&](size_t i) { return static_cast<int>(std::llround(num(i))); };
  if (name == "path") return path_space(integer(0));
  if (name == "cycle") return cycle_space(integer(0));
  if (name == "grid_torus") {
    int d = integer(0), res = integer(1);
    std::vector<double> side;
    for (size_t i = 2; i < parts.size(); ++i) side.push_back(num(i));
    return grid_torus(d, res, side);
  }
  if (name == "icosphere")
    return icosphere(integer(0), parts.size() > 1 ? num(1) : 1.0);
  if (name == "cone") return cone(num(0), integer(1));
  if (name == "from_file") {
    if (parts.empty()) throw usage_error("from_file: missing path");
    return space_from_file(args);
  }
  throw usage_error("build_space: unknown builder '" + name + "'");
}

}  // namespace gammacalc
