#pragma once

// Minimal Wavefront OBJ reader/writer. Supports per-vertex UV (vt lines,
// parallel to vertices) and the common per-vertex RGB extension where colors
// follow the coordinates on `v` lines.

#include <fstream>
#include <sstream>

#include "dmnt/mesh.hpp"

namespace dmnt {

inline void write_obj(const std::string& path, const Mesh& m) {
  std::ofstream out(path);
  check(out.good(), "write_obj: cannot open " + path);
  out.precision(9);
  bool has_color = m.colors.size() == m.vertices.size();
  bool has_uv = m.uv.size() == m.vertices.size();
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3& v = m.vertices[i];
    out << "v " << v.x << ' ' << v.y << ' ' << v.z;
    if (has_color)
      out << ' ' << m.colors[i][0] << ' ' << m.colors[i][1] << ' ' << m.colors[i][2];
    out << '\n';
  }
  if (has_uv)
    for (auto& t : m.uv) out << "vt " << t[0] << ' ' << t[1] << '\n';
  for (auto& f : m.faces) {
    if (has_uv)
      out << "f " << f[0] + 1 << '/' << f[0] + 1 << ' ' << f[1] + 1 << '/' << f[1] + 1
          << ' ' << f[2] + 1 << '/' << f[2] + 1 << '\n';
    else
      out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
  check(out.good(), "write_obj: write failed for " + path);
}

inline Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "read_obj: cannot open " + path);
  Mesh m;
  std::vector<std::array<real, 2>> vts;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      ss >> x >> y >> z;
      m.vertices.push_back({real(x), real(y), real(z)});
      double r, g, b;
      if (ss >> r >> g >> b) m.colors.push_back({real(r), real(g), real(b)});
    } else if (tag == "vt") {
      double u, v;
      ss >> u >> v;
      vts.push_back({real(u), real(v)});
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // accept "i", "i/j", "i/j/k"
        idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      }
      check(idx.size() >= 3, "read_obj: face with <3 vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k)  // fan-triangulate
        m.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (!m.colors.empty() && m.colors.size() != m.vertices.size()) m.colors.clear();
  if (vts.size() == m.vertices.size()) m.uv = std::move(vts);
  return m;
}

}  // namespace dmnt
