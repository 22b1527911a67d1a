#pragma once

// Point-to-triangle distance, a BVH over faces, the bidirectional
// vertex-to-face mesh distance, and the two shape regularizers, all with
// analytic gradients.

#include "dmnt/mesh.hpp"

namespace dmnt {

struct ClosestPoint {
  Vec3 point;
  std::array<real, 3> bary{};  // weights of the triangle vertices
  real dist = 0;
  bool degenerate = false;
};

inline Vec3 closest_point_segment(Vec3 p, Vec3 a, Vec3 b, real& t_out) {
  Vec3 ab = b - a;
  real denom = dot(ab, ab);
  real t = denom > 0 ? std::clamp(dot(p - a, ab) / denom, real(0), real(1)) : 0;
  t_out = t;
  return a + t * ab;
}

// Exact closest point on the closed triangle (interior / edge / vertex
// regions). Degenerate (zero-area) triangles fall back to the nearest edge.
inline ClosestPoint point_face_closest(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
  ClosestPoint r;
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  real area2 = norm(cross(ab, ac));
  real scale2 = std::max({norm2(ab), norm2(ac), norm2(b - c)});
  if (area2 <= real(1e-12) * scale2) {
    r.degenerate = true;
    real best = std::numeric_limits<real>::max();
    const Vec3 vs[3] = {a, b, c};
    for (int e = 0; e < 3; ++e) {
      real t;
      Vec3 q = closest_point_segment(p, vs[e], vs[(e + 1) % 3], t);
      real d2 = norm2(p - q);
      if (d2 < best) {
        best = d2;
        r.point = q;
        r.bary = {0, 0, 0};
        r.bary[size_t(e)] = 1 - t;
        r.bary[size_t((e + 1) % 3)] = t;
      }
    }
    r.dist = std::sqrt(best);
    return r;
  }

  real d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) { r.point = a; r.bary = {1, 0, 0}; }
  else {
    Vec3 bp = p - b;
    real d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) { r.point = b; r.bary = {0, 1, 0}; }
    else {
      real vc = d1 * d4 - d3 * d2;
      if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        real v = d1 / (d1 - d3);
        r.point = a + v * ab;
        r.bary = {1 - v, v, 0};
      } else {
        Vec3 cp = p - c;
        real d5 = dot(ab, cp), d6 = dot(ac, cp);
        if (d6 >= 0 && d5 <= d6) { r.point = c; r.bary = {0, 0, 1}; }
        else {
          real vb = d5 * d2 - d1 * d6;
          if (vb <= 0 && d2 >= 0 && d6 <= 0) {
            real w = d2 / (d2 - d6);
            r.point = a + w * ac;
            r.bary = {1 - w, 0, w};
          } else {
            real va = d3 * d6 - d5 * d4;
            if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
              real w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
              r.point = b + w * (c - b);
              r.bary = {0, 1 - w, w};
            } else {
              real denom = 1 / (va + vb + vc);
              real v = vb * denom, w = vc * denom;
              r.point = a + v * ab + w * ac;
              r.bary = {1 - v - w, v, w};
            }
          }
        }
      }
    }
  }
  r.dist = norm(p - r.point);
  return r;
}

inline real point_face_distance(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
  return point_face_closest(p, a, b, c).dist;
}

// ---------------------------------------------------------------------------
// BVH over triangles; exact nearest-face queries (value identical to an
// exhaustive scan, the tree only prunes).

class FaceBvh {
 public:
  explicit FaceBvh(const Mesh& mesh) : mesh_(&mesh) {
    int n = mesh.face_count();
    check(n > 0, "FaceBvh: empty mesh");
    order_.resize(size_t(n));
    for (int i = 0; i < n; ++i) order_[size_t(i)] = i;
    nodes_.reserve(size_t(2 * n));
    build(0, n);
  }

  struct Hit {
    int face = -1;
    ClosestPoint cp;
  };

  Hit nearest(Vec3 p) const {
    Hit best;
    best.cp.dist = std::numeric_limits<real>::max();
    search(0, p, best);
    return best;
  }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children; leaf when left < 0
    int begin = 0, end = 0;     // face range for leaves
  };

  const Mesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;

  Vec3 centroid(int f) const {
    auto& t = mesh_->faces[size_t(f)];
    return (mesh_->vertices[size_t(t[0])] + mesh_->vertices[size_t(t[1])] +
            mesh_->vertices[size_t(t[2])]) / 3;
  }

  int build(int begin, int end) {
    Node node;
    node.lo = {std::numeric_limits<real>::max(), std::numeric_limits<real>::max(),
               std::numeric_limits<real>::max()};
    node.hi = {-node.lo.x, -node.lo.y, -node.lo.z};
    for (int i = begin; i < end; ++i) {
      auto& t = mesh_->faces[size_t(order_[size_t(i)])];
      for (int k = 0; k < 3; ++k) {
        Vec3 v = mesh_->vertices[size_t(t[k])];
        for (int d = 0; d < 3; ++d) {
          node.lo[d] = std::min(node.lo[d], v[d]);
          node.hi[d] = std::max(node.hi[d], v[d]);
        }
      }
    }
    int id = int(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) {
      nodes_[size_t(id)].begin = begin;
      nodes_[size_t(id)].end = end;
      return id;
    }
    Vec3 ext = node.hi - node.lo;
    int axis = ext.y > ext.x ? (ext.z > ext.y ? 2 : 1) : (ext.z > ext.x ? 2 : 0);
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroid(a)[axis] < centroid(b)[axis]; });
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes_[size_t(id)].left = l;
    nodes_[size_t(id)].right = r;
    return id;
  }

  real box_dist2(const Node& n, Vec3 p) const {
    real d2 = 0;
    for (int d = 0; d < 3; ++d) {
      real v = std::max({n.lo[d] - p[d], real(0), p[d] - n.hi[d]});
      d2 += v * v;
    }
    return d2;
  }

  void search(int id, Vec3 p, Hit& best) const {
    const Node& n = nodes_[size_t(id)];
    if (box_dist2(n, p) >= best.cp.dist * best.cp.dist) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int f = order_[size_t(i)];
        auto& t = mesh_->faces[size_t(f)];
        ClosestPoint cp = point_face_closest(p, mesh_->vertices[size_t(t[0])],
                                             mesh_->vertices[size_t(t[1])],
                                             mesh_->vertices[size_t(t[2])]);
        if (cp.dist < best.cp.dist) {
          best.cp = cp;
          best.face = f;
        }
      }
      return;
    }
    real dl = box_dist2(nodes_[size_t(n.left)], p);
    real dr = box_dist2(nodes_[size_t(n.right)], p);
    if (dl <= dr) { search(n.left, p, best); search(n.right, p, best); }
    else { search(n.right, p, best); search(n.left, p, best); }
  }
};

// ---------------------------------------------------------------------------
// Bidirectional vertex-to-face distance: sum over vertices of A of the
// distance to the nearest face of B, plus the symmetric term.

inline real mesh_distance(const Mesh& a, const Mesh& b) {
  check(!a.vertices.empty() && !b.vertices.empty(), "mesh_distance: empty mesh");
  FaceBvh bb(b), ba(a);
  real d = 0;
  for (auto& v : a.vertices) d += bb.nearest(v).cp.dist;
  for (auto& v : b.vertices) d += ba.nearest(v).cp.dist;
  return d;
}

inline real mesh_distance_exhaustive(const Mesh& a, const Mesh& b) {
  auto one_way = [](const Mesh& from, const Mesh& to) {
    real d = 0;
    for (auto& v : from.vertices) {
      real best = std::numeric_limits<real>::max();
      for (auto& f : to.faces)
        best = std::min(best, point_face_distance(v, to.vertices[size_t(f[0])],
                                                  to.vertices[size_t(f[1])],
                                                  to.vertices[size_t(f[2])]));
      d += best;
    }
    return d;
  };
  return one_way(a, b) + one_way(b, a);
}

// Distance plus gradient with respect to the vertices of A only (B is the
// fixed target during shape fitting). Both directions of the sum contribute:
// d(v_A, nearest face of B) differentiates through v_A, and
// d(v_B, nearest face of A) differentiates through the nearest face's
// vertices with fixed barycentric weights (exact at the minimizer).
inline real mesh_distance_grad(const Mesh& a, const Mesh& b, std::vector<Vec3>& grad_a) {
  check(!a.vertices.empty() && !b.vertices.empty(), "mesh_distance_grad: empty mesh");
  grad_a.assign(a.vertices.size(), Vec3{});
  FaceBvh bb(b), ba(a);
  real d = 0;
  for (size_t i = 0; i < a.vertices.size(); ++i) {
    auto hit = bb.nearest(a.vertices[i]);
    d += hit.cp.dist;
    if (hit.cp.dist > real(1e-12))
      grad_a[i] += (a.vertices[i] - hit.cp.point) / hit.cp.dist;
  }
  for (auto& v : b.vertices) {
    auto hit = ba.nearest(v);
    d += hit.cp.dist;
    if (hit.cp.dist > real(1e-12)) {
      Vec3 n = (v - hit.cp.point) / hit.cp.dist;
      auto& f = a.faces[size_t(hit.face)];
      for (int k = 0; k < 3; ++k) grad_a[size_t(f[k])] -= hit.cp.bary[size_t(k)] * n;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Regularizers.

// Mean over vertices of the squared uniform-weight Laplacian magnitude.
inline real laplacian_loss(const Mesh& m, std::vector<Vec3>* grad = nullptr) {
  auto nb = vertex_neighbors(m);
  int n = m.vertex_count();
  if (grad) grad->assign(size_t(n), Vec3{});
  real loss = 0;
  for (int i = 0; i < n; ++i) {
    if (nb[size_t(i)].empty()) continue;
    Vec3 mean{};
    for (int j : nb[size_t(i)]) mean += m.vertices[size_t(j)];
    mean = mean / real(nb[size_t(i)].size());
    Vec3 r = m.vertices[size_t(i)] - mean;
    loss += norm2(r);
    if (grad) {
      (*grad)[size_t(i)] += (real(2) / real(n)) * r;
      Vec3 gj = (real(-2) / (real(n) * real(nb[size_t(i)].size()))) * r;
      for (int j : nb[size_t(i)]) (*grad)[size_t(j)] += gj;
    }
  }
  return loss / real(n);
}

// Mean of (1 - cos angle) over pairs of faces sharing an edge.
inline real normal_consistency_loss(const Mesh& m, std::vector<Vec3>* grad = nullptr) {
  auto pairs = adjacent_face_pairs(m);
  if (pairs.empty()) return 0;
  if (grad) grad->assign(m.vertices.size(), Vec3{});

  auto face_normal = [&](int fi, Vec3& c_out) {
    auto& f = m.faces[size_t(fi)];
    c_out = cross(m.vertices[size_t(f[1])] - m.vertices[size_t(f[0])],
                  m.vertices[size_t(f[2])] - m.vertices[size_t(f[0])]);
    return normalized(c_out);
  };
  // accumulate dL/dc (cross product) per face, then push through the edges
  std::vector<Vec3> gc(m.faces.size());
  real loss = 0;
  real w = 1 / real(pairs.size());
  for (auto& [fa, fb] : pairs) {
    Vec3 ca, cb;
    Vec3 na = face_normal(fa, ca), nb = face_normal(fb, cb);
    loss += w * (1 - dot(na, nb));
    if (grad) {
      real la = norm(ca), lb = norm(cb);
      if (la > 0 && lb > 0) {
        Vec3 gna = real(-1) * w * nb, gnb = real(-1) * w * na;
        gc[size_t(fa)] += (gna - dot(gna, na) * na) / la;
        gc[size_t(fb)] += (gnb - dot(gnb, nb) * nb) / lb;
      }
    }
  }
  if (grad) {
    for (size_t fi = 0; fi < m.faces.size(); ++fi) {
      auto& f = m.faces[fi];
      Vec3 e1 = m.vertices[size_t(f[1])] - m.vertices[size_t(f[0])];
      Vec3 e2 = m.vertices[size_t(f[2])] - m.vertices[size_t(f[0])];
      Vec3 g = gc[fi];
      Vec3 ge1 = cross(e2, g), ge2 = cross(g, e1);
      (*grad)[size_t(f[1])] += ge1;
      (*grad)[size_t(f[2])] += ge2;
      (*grad)[size_t(f[0])] -= ge1 + ge2;
    }
  }
  return loss;
}

}  // namespace dmnt
