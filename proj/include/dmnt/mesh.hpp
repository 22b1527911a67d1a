#pragma once

// Triangle meshes, the geodesic-sphere template and its polar UV atlas.

#include <algorithm>
#include <map>

#include "dmnt/core.hpp"

namespace dmnt {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<real, 2>> uv;      // optional, per vertex, in [0,1]^2
  std::vector<std::array<real, 3>> colors;  // optional, per vertex RGB in [0,1]

  int vertex_count() const { return int(vertices.size()); }
  int face_count() const { return int(faces.size()); }
};

inline int64_t edge_count(const Mesh& m) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(m.faces.size() * 3);
  for (auto& f : m.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      edges.push_back({std::min(a, b), std::max(a, b)});
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return int64_t(edges.size());
}

inline int64_t euler_characteristic(const Mesh& m) {
  return int64_t(m.vertex_count()) - edge_count(m) + int64_t(m.face_count());
}

// Polar parameterization of the unit sphere. u wraps in [0,1), v in [0,1]
// (v=0 at +z). Vertices within 0.01 of a pole get u canonicalized to 0
// since azimuth is meaningless there.
inline std::array<real, 2> uv_of_point(Vec3 p) {
  real n = norm(p);
  check(n > 0, "uv_of_point: zero vector");
  p = p / n;
  real v = std::acos(std::clamp(p.z, real(-1), real(1))) / kPi;
  real u = std::atan2(p.y, p.x) / (2 * kPi);
  if (u < 0) u += 1;
  if (u >= 1) u -= 1;
  if (v < real(0.01) || v > real(0.99)) u = 0;
  return {u, v};
}

inline Vec3 point_of_uv(real u, real v) {
  real phi = u * 2 * kPi, theta = v * kPi;
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta)};
}

// Icosahedron subdivided `level` times with vertices reprojected onto the
// unit sphere; level 4 gives the 2562-vertex template.
inline Mesh build_template(int level) {
  check(level >= 0, "build_template: negative level");
  const real t = (1 + std::sqrt(real(5))) / 2;
  std::vector<Vec3> vs = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : vs) v = normalized(v);
  std::vector<std::array<int, 3>> fs = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      vs.push_back(normalized(vs[size_t(a)] + vs[size_t(b)]));
      int id = int(vs.size()) - 1;
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(fs.size() * 4);
    for (auto& f : fs) {
      int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    fs = std::move(next);
  }

  Mesh m;
  m.vertices = std::move(vs);
  m.faces = std::move(fs);
  m.uv.resize(m.vertices.size());
  for (size_t i = 0; i < m.vertices.size(); ++i) m.uv[i] = uv_of_point(m.vertices[i]);
  return m;
}

// Area-weighted vertex normals (unnormalized cross products summed, then
// normalized). Returns both the raw sums and the unit normals; the raw sums
// are needed by analytic backward passes.
struct VertexNormals {
  std::vector<Vec3> raw;   // sum of adjacent face cross products
  std::vector<Vec3> unit;
};

inline VertexNormals vertex_normals(const Mesh& m) {
  VertexNormals vn;
  vn.raw.assign(m.vertices.size(), Vec3{});
  for (auto& f : m.faces) {
    Vec3 c = cross(m.vertices[size_t(f[1])] - m.vertices[size_t(f[0])],
                   m.vertices[size_t(f[2])] - m.vertices[size_t(f[0])]);
    for (int k = 0; k < 3; ++k) vn.raw[size_t(f[k])] += c;
  }
  vn.unit.resize(vn.raw.size());
  for (size_t i = 0; i < vn.raw.size(); ++i) vn.unit[i] = normalized(vn.raw[i]);
  return vn;
}

inline std::vector<std::vector<int>> vertex_neighbors(const Mesh& m) {
  std::vector<std::vector<int>> nb(m.vertices.size());
  for (auto& f : m.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      nb[size_t(a)].push_back(b);
      nb[size_t(b)].push_back(a);
    }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

// Pairs of faces sharing an edge.
inline std::vector<std::pair<int, int>> adjacent_face_pairs(const Mesh& m) {
  std::map<std::pair<int, int>, std::vector<int>> by_edge;
  for (int fi = 0; fi < m.face_count(); ++fi) {
    auto& f = m.faces[size_t(fi)];
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      by_edge[{std::min(a, b), std::max(a, b)}].push_back(fi);
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (auto& [edge, fl] : by_edge)
    for (size_t i = 0; i < fl.size(); ++i)
      for (size_t j = i + 1; j < fl.size(); ++j) pairs.push_back({fl[i], fl[j]});
  return pairs;
}

}  // namespace dmnt
