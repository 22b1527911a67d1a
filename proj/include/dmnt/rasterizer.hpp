#pragma once

// Hard z-buffered triangle rasterization producing per-pixel UV fragments,
// perspective-correct interpolation, analytic gradients through the
// barycentric chain, and rendering of neural textures into feature maps.
//
// Visibility (face assignment, coverage) is piecewise-constant and carries
// zero gradient; everything downstream of the assignment is smooth.

#include "dmnt/camera.hpp"
#include "dmnt/mesh.hpp"
#include "dmnt/texture_bank.hpp"

namespace dmnt {

constexpr real kZNear = real(1e-3);

struct FragmentMap {
  int width = 0, height = 0;
  std::vector<int> face;                   // -1 where empty
  std::vector<std::array<real, 3>> bary;   // perspective-correct
  std::vector<real> depth;
  std::vector<std::array<real, 2>> uv;

  int64_t idx(int x, int y) const { return int64_t(y) * width + x; }
  bool covered(int x, int y) const { return face[size_t(idx(x, y))] >= 0; }
  int64_t covered_count() const {
    int64_t n = 0;
    for (int f : face) n += f >= 0;
    return n;
  }

  UvGrid uv_grid() const {
    UvGrid g;
    g.width = width;
    g.height = height;
    g.uv = uv;
    g.on_object.resize(face.size());
    for (size_t i = 0; i < face.size(); ++i) g.on_object[i] = face[i] >= 0;
    return g;
  }
};

struct ProjectedMesh {
  std::vector<Vec3> cam;                    // camera-frame coordinates
  std::vector<std::array<real, 2>> screen;  // pixel coordinates
  std::vector<uint8_t> valid;               // in front of the near plane
};

inline ProjectedMesh project_mesh(const Mesh& mesh, const Extrinsics& ex,
                                  const Intrinsics& in) {
  ProjectedMesh p;
  size_t n = mesh.vertices.size();
  p.cam.resize(n);
  p.screen.resize(n);
  p.valid.resize(n);
  for (size_t i = 0; i < n; ++i) {
    Vec3 c = ex.R * mesh.vertices[i] + ex.t;
    p.cam[i] = c;
    p.valid[i] = c.z > kZNear;
    if (p.valid[i])
      p.screen[i] = {in.cx() + in.focal * c.x / c.z, in.cy() + in.focal * c.y / c.z};
  }
  return p;
}

namespace detail {

// Seam-aware per-face UVs: if a face straddles the u wrap, shift the low-u
// vertices by +1 so interpolation stays continuous; results are wrapped back
// into [0,1) after interpolation.
inline std::array<std::array<real, 2>, 3> face_uvs(const Mesh& mesh, int f) {
  auto& tri = mesh.faces[size_t(f)];
  std::array<std::array<real, 2>, 3> uv;
  for (int k = 0; k < 3; ++k) uv[size_t(k)] = mesh.uv[size_t(tri[size_t(k)])];
  real umin = std::min({uv[0][0], uv[1][0], uv[2][0]});
  real umax = std::max({uv[0][0], uv[1][0], uv[2][0]});
  if (umax - umin > real(0.5))
    for (auto& t : uv)
      if (t[0] < real(0.5)) t[0] += 1;
  return uv;
}

inline real wrap01(real u) {
  u = u - std::floor(u);
  return u;
}

// Screen-space barycentric weight of vertex A for point P, with gradients
// with respect to the three screen vertices.
inline real bary_one(std::array<real, 2> P, std::array<real, 2> A,
                     std::array<real, 2> B, std::array<real, 2> C,
                     std::array<real, 2>* gA = nullptr, std::array<real, 2>* gB = nullptr,
                     std::array<real, 2>* gC = nullptr) {
  auto perp = [](std::array<real, 2> v) { return std::array<real, 2>{v[1], -v[0]}; };
  auto sub = [](std::array<real, 2> a, std::array<real, 2> b) {
    return std::array<real, 2>{a[0] - b[0], a[1] - b[1]};
  };
  auto cr = [](std::array<real, 2> a, std::array<real, 2> b) {
    return a[0] * b[1] - a[1] * b[0];
  };
  real N = cr(sub(P, B), sub(C, B));
  real D = cr(sub(A, B), sub(C, B));
  real l = N / D;
  if (gA) {
    auto dD_dA = perp(sub(C, B));
    auto dN_dB = perp(sub(P, C));
    auto dD_dB = perp(sub(A, C));
    auto pb = perp(sub(P, B));
    std::array<real, 2> dN_dC = {-pb[0], -pb[1]};
    auto ab = perp(sub(A, B));
    std::array<real, 2> dD_dC = {-ab[0], -ab[1]};
    for (int i = 0; i < 2; ++i) {
      (*gA)[size_t(i)] = (0 - l * dD_dA[size_t(i)]) / D;
      (*gB)[size_t(i)] = (dN_dB[size_t(i)] - l * dD_dB[size_t(i)]) / D;
      (*gC)[size_t(i)] = (dN_dC[size_t(i)] - l * dD_dC[size_t(i)]) / D;
    }
  }
  return l;
}

}  // namespace detail

inline FragmentMap rasterize(const Mesh& mesh, const CameraPose& pose,
                             const Intrinsics& in) {
  check(in.width >= 1 && in.height >= 1, "rasterize: bad resolution");
  Extrinsics ex = pose_to_extrinsics(pose);
  ProjectedMesh pm = project_mesh(mesh, ex, in);

  FragmentMap fm;
  fm.width = in.width;
  fm.height = in.height;
  fm.face.assign(size_t(in.width) * in.height, -1);
  fm.bary.assign(size_t(in.width) * in.height, {});
  fm.depth.assign(size_t(in.width) * in.height, std::numeric_limits<real>::max());
  fm.uv.assign(size_t(in.width) * in.height, {});

  for (int f = 0; f < mesh.face_count(); ++f) {
    auto& tri = mesh.faces[size_t(f)];
    if (!pm.valid[size_t(tri[0])] || !pm.valid[size_t(tri[1])] || !pm.valid[size_t(tri[2])])
      continue;
    std::array<real, 2> s0 = pm.screen[size_t(tri[0])], s1 = pm.screen[size_t(tri[1])],
                        s2 = pm.screen[size_t(tri[2])];
    real area = (s1[0] - s0[0]) * (s2[1] - s0[1]) - (s1[1] - s0[1]) * (s2[0] - s0[0]);
    if (area == 0) continue;
    int x0 = std::max(0, int(std::floor(std::min({s0[0], s1[0], s2[0]}) - real(0.5))));
    int x1 = std::min(in.width - 1, int(std::ceil(std::max({s0[0], s1[0], s2[0]}))));
    int y0 = std::max(0, int(std::floor(std::min({s0[1], s1[1], s2[1]}) - real(0.5))));
    int y1 = std::min(in.height - 1, int(std::ceil(std::max({s0[1], s1[1], s2[1]}))));
    if (x0 > x1 || y0 > y1) continue;

    auto fuv = detail::face_uvs(mesh, f);
    real z0 = pm.cam[size_t(tri[0])].z, z1 = pm.cam[size_t(tri[1])].z,
         z2 = pm.cam[size_t(tri[2])].z;

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        std::array<real, 2> P = {real(x) + real(0.5), real(y) + real(0.5)};
        real l0 = detail::bary_one(P, s0, s1, s2);
        real l1 = detail::bary_one(P, s1, s2, s0);
        real l2 = 1 - l0 - l1;
        if (l0 < 0 || l1 < 0 || l2 < 0) continue;
        real a0 = l0 / z0, a1 = l1 / z1, a2 = l2 / z2;
        real S = a0 + a1 + a2;
        real depth = 1 / S;
        int64_t i = fm.idx(x, y);
        if (depth < fm.depth[size_t(i)] ||
            (depth == fm.depth[size_t(i)] && f < fm.face[size_t(i)])) {
          real b0 = a0 / S, b1 = a1 / S, b2 = a2 / S;
          fm.depth[size_t(i)] = depth;
          fm.face[size_t(i)] = f;
          fm.bary[size_t(i)] = {b0, b1, b2};
          fm.uv[size_t(i)] = {
              detail::wrap01(b0 * fuv[0][0] + b1 * fuv[1][0] + b2 * fuv[2][0]),
              b0 * fuv[0][1] + b1 * fuv[1][1] + b2 * fuv[2][1]};
        }
      }
    }
  }
  for (size_t i = 0; i < fm.face.size(); ++i)
    if (fm.face[i] < 0) fm.depth[i] = 0;
  return fm;
}

// Re-interpolate fragments for a *fixed* per-pixel face assignment under new
// mesh/camera parameters. This is the smooth branch function whose gradient
// the backward pass computes; it is also what the finite-difference oracle
// perturbs, keeping the check away from coverage discontinuities.
inline FragmentMap interpolate_assignment(const Mesh& mesh, const CameraPose& pose,
                                          const Intrinsics& in,
                                          const std::vector<int>& face_assignment) {
  Extrinsics ex = pose_to_extrinsics(pose);
  ProjectedMesh pm = project_mesh(mesh, ex, in);
  FragmentMap fm;
  fm.width = in.width;
  fm.height = in.height;
  fm.face = face_assignment;
  fm.bary.assign(face_assignment.size(), {});
  fm.depth.assign(face_assignment.size(), 0);
  fm.uv.assign(face_assignment.size(), {});
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      int64_t i = fm.idx(x, y);
      int f = fm.face[size_t(i)];
      if (f < 0) continue;
      auto& tri = mesh.faces[size_t(f)];
      std::array<real, 2> P = {real(x) + real(0.5), real(y) + real(0.5)};
      auto s0 = pm.screen[size_t(tri[0])], s1 = pm.screen[size_t(tri[1])],
           s2 = pm.screen[size_t(tri[2])];
      real l0 = detail::bary_one(P, s0, s1, s2);
      real l1 = detail::bary_one(P, s1, s2, s0);
      real l2 = 1 - l0 - l1;
      real a0 = l0 / pm.cam[size_t(tri[0])].z, a1 = l1 / pm.cam[size_t(tri[1])].z,
           a2 = l2 / pm.cam[size_t(tri[2])].z;
      real S = a0 + a1 + a2;
      auto fuv = detail::face_uvs(mesh, f);
      real b0 = a0 / S, b1 = a1 / S, b2 = a2 / S;
      fm.depth[size_t(i)] = 1 / S;
      fm.bary[size_t(i)] = {b0, b1, b2};
      fm.uv[size_t(i)] = {detail::wrap01(b0 * fuv[0][0] + b1 * fuv[1][0] + b2 * fuv[2][0]),
                          b0 * fuv[0][1] + b1 * fuv[1][1] + b2 * fuv[2][1]};
    }
  return fm;
}

// ---------------------------------------------------------------------------
// Per-pixel viewing coefficients from interpolated vertex normals and the
// direction from the surface point to the camera.

inline Tensor alpha_field(const FragmentMap& fm, const Mesh& mesh,
                          const VertexNormals& vn, const CameraPose& pose,
                          const ViewingBinSet& bins, real temp) {
  Extrinsics ex = pose_to_extrinsics(pose);
  int b = bins.count();
  Tensor a({fm.height, fm.width, b});
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x) {
      int64_t i = fm.idx(x, y);
      int f = fm.face[size_t(i)];
      if (f < 0) continue;
      auto& tri = mesh.faces[size_t(f)];
      auto& w = fm.bary[size_t(i)];
      Vec3 n{}, p{};
      for (int k = 0; k < 3; ++k) {
        n += w[size_t(k)] * vn.unit[size_t(tri[size_t(k)])];
        p += w[size_t(k)] * mesh.vertices[size_t(tri[size_t(k)])];
      }
      auto alpha = viewing_coefficients(normalized(n), normalized(ex.C - p), bins, temp);
      for (int bi = 0; bi < b; ++bi) a[i * b + bi] = alpha[size_t(bi)];
    }
  return a;
}

// Per-texel viewing coefficients on the texture grid, computed by
// rasterizing the mesh in UV space so every texel knows its surface point
// and normal. Texels not covered by any face keep zero alpha.
inline Tensor alpha_field_surface(const Mesh& mesh, const VertexNormals& vn,
                                  const CameraPose& pose, const ViewingBinSet& bins,
                                  real temp, int q) {
  Extrinsics ex = pose_to_extrinsics(pose);
  int b = bins.count();
  Tensor a({q, q, b});
  std::vector<real> best(size_t(q) * q, -1);  // one face per texel is enough
  for (int f = 0; f < mesh.face_count(); ++f) {
    auto fuv = detail::face_uvs(mesh, f);
    std::array<std::array<real, 2>, 3> s;
    for (int k = 0; k < 3; ++k) s[size_t(k)] = {fuv[size_t(k)][0] * q, fuv[size_t(k)][1] * q};
    real ulo = std::min({s[0][0], s[1][0], s[2][0]}), uhi = std::max({s[0][0], s[1][0], s[2][0]});
    real vlo = std::min({s[0][1], s[1][1], s[2][1]}), vhi = std::max({s[0][1], s[1][1], s[2][1]});
    auto& tri = mesh.faces[size_t(f)];
    // u wraps: the face may live partly beyond q; evaluate both copies
    for (int shift = -1; shift <= 0; ++shift) {
      real off = real(shift) * q;
      int i0 = std::max(0, int(std::floor(ulo + off)));
      int i1 = std::min(q - 1, int(std::ceil(uhi + off)));
      int j0 = std::max(0, int(std::floor(vlo)));
      int j1 = std::min(q - 1, int(std::ceil(vhi)));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          std::array<real, 2> P = {real(i) + real(0.5) - off, real(j) + real(0.5)};
          real l0 = detail::bary_one(P, s[0], s[1], s[2]);
          real l1 = detail::bary_one(P, s[1], s[2], s[0]);
          real l2 = 1 - l0 - l1;
          if (l0 < 0 || l1 < 0 || l2 < 0) continue;
          int64_t t = int64_t(j) * q + i;
          if (best[size_t(t)] >= 0) continue;
          best[size_t(t)] = real(f);
          Vec3 n{}, p{};
          real l[3] = {l0, l1, l2};
          for (int k = 0; k < 3; ++k) {
            n += l[k] * vn.unit[size_t(tri[size_t(k)])];
            p += l[k] * mesh.vertices[size_t(tri[size_t(k)])];
          }
          auto alpha = viewing_coefficients(normalized(n), normalized(ex.C - p), bins, temp);
          for (int bi = 0; bi < b; ++bi) a[t * b + bi] = alpha[size_t(bi)];
        }
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Feature rendering: per covered pixel, bilinear-sample every bin at the
// fragment UV and combine with the viewing coefficients.

struct FeatureMapRender {
  Tensor feat;  // {H, W, d}; zero on empty pixels
  std::vector<uint8_t> on_object;
};

inline FeatureMapRender render_features(const FragmentMap& fm,
                                        const NeuralTextureBank& bank,
                                        const Tensor& alpha /*{H, W, b}*/) {
  int b = bank.bin_count(), d = bank.d;
  FeatureMapRender out;
  out.feat = Tensor({fm.height, fm.width, d});
  out.on_object.assign(fm.face.size(), 0);
  std::vector<real> smp(size_t(d), 0);
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i) {
    if (fm.face[size_t(i)] < 0) continue;
    out.on_object[size_t(i)] = 1;
    real u = fm.uv[size_t(i)][0], v = fm.uv[size_t(i)][1];
    for (int bi = 0; bi < b; ++bi) {
      bank.sample(bi, u, v, smp.data());
      real ab = alpha[i * b + bi];
      for (int c = 0; c < d; ++c) out.feat[i * d + c] += ab * smp[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward through the rasterization chain. Upstream gradients may target
// any of the per-pixel interpolated quantities; contributions flow to the
// mesh vertices (object frame) and the four pose parameters.

struct PixelUpstream {
  std::array<real, 2> g_uv{};  // wrt fragment UV in [0,1] units
  real g_depth = 0;
  Vec3 g_point{};   // wrt interpolated world-space surface point
  Vec3 g_normal{};  // wrt interpolated *unit* normal
  Vec3 g_camera{};  // wrt the camera center C (view-direction chain)
};

struct RasterGrads {
  std::vector<Vec3> d_verts;      // object-frame vertices
  std::array<real, 4> d_pose{};   // azimuth, elevation, theta, distance
};

inline RasterGrads raster_backward(const Mesh& mesh, const VertexNormals& vn,
                                   const CameraPose& pose, const Intrinsics& in,
                                   const FragmentMap& fm,
                                   const std::vector<PixelUpstream>& ups) {
  check(ups.size() == fm.face.size(), "raster_backward: upstream size mismatch");
  Extrinsics ex = pose_to_extrinsics(pose);
  ExtrinsicsJac jac = pose_jacobian(pose);
  ProjectedMesh pm = project_mesh(mesh, ex, in);

  RasterGrads out;
  out.d_verts.assign(mesh.vertices.size(), Vec3{});
  Mat3 gR{};
  Vec3 gt{}, gC{};
  std::vector<Vec3> g_unit_normal(mesh.vertices.size());

  for (int y = 0; y < fm.height; ++y) {
    for (int x = 0; x < fm.width; ++x) {
      int64_t i = fm.idx(x, y);
      int f = fm.face[size_t(i)];
      if (f < 0) continue;
      const PixelUpstream& up = ups[size_t(i)];
      auto& tri = mesh.faces[size_t(f)];
      const auto& b = fm.bary[size_t(i)];
      auto fuv = detail::face_uvs(mesh, f);

      gC += up.g_camera;

      real g_b[3] = {0, 0, 0};
      // uv = sum b_k * uv_k (the wrap is an additive constant)
      for (int k = 0; k < 3; ++k)
        g_b[k] += up.g_uv[0] * fuv[size_t(k)][0] + up.g_uv[1] * fuv[size_t(k)][1];
      // world point = sum b_k * V_k
      for (int k = 0; k < 3; ++k) {
        Vec3 V = mesh.vertices[size_t(tri[size_t(k)])];
        out.d_verts[size_t(tri[size_t(k)])] += b[size_t(k)] * up.g_point;
        g_b[k] += dot(V, up.g_point);
      }
      // interpolated unit normal: n = m/|m|, m = sum b_k N_k
      if (norm2(up.g_normal) > 0) {
        Vec3 m{};
        for (int k = 0; k < 3; ++k) m += b[size_t(k)] * vn.unit[size_t(tri[size_t(k)])];
        real mn = norm(m);
        if (mn > 0) {
          Vec3 n = m / mn;
          Vec3 gm = (up.g_normal - dot(up.g_normal, n) * n) / mn;
          for (int k = 0; k < 3; ++k) {
            g_unit_normal[size_t(tri[size_t(k)])] += b[size_t(k)] * gm;
            g_b[k] += dot(vn.unit[size_t(tri[size_t(k)])], gm);
          }
        }
      }

      // barycentric chain: b_k = a_k / S, a_k = l_k / z_k, depth = 1/S
      real z[3], l[3];
      for (int k = 0; k < 3; ++k) z[k] = pm.cam[size_t(tri[size_t(k)])].z;
      // recover screen barycentrics from the perspective-correct ones
      {
        real t0 = b[0] * z[0], t1 = b[1] * z[1], t2 = b[2] * z[2];
        real ts = t0 + t1 + t2;
        l[0] = t0 / ts; l[1] = t1 / ts; l[2] = t2 / ts;
      }
      real S = 1 / fm.depth[size_t(i)];
      real g_a[3];
      real gdot = g_b[0] * b[0] + g_b[1] * b[1] + g_b[2] * b[2];
      for (int k = 0; k < 3; ++k) g_a[k] = (g_b[k] - gdot) / S;
      if (up.g_depth != 0)
        for (int k = 0; k < 3; ++k) g_a[k] += -up.g_depth / (S * S);
      real g_l[3], g_z[3];
      for (int k = 0; k < 3; ++k) {
        g_l[k] = g_a[k] / z[k];
        g_z[k] = -g_a[k] * l[k] / (z[k] * z[k]);
      }

      // screen barycentric gradients wrt the three screen positions
      std::array<real, 2> P = {real(x) + real(0.5), real(y) + real(0.5)};
      auto s0 = pm.screen[size_t(tri[0])], s1 = pm.screen[size_t(tri[1])],
           s2 = pm.screen[size_t(tri[2])];
      std::array<real, 2> g_s[3] = {{0, 0}, {0, 0}, {0, 0}};
      {
        std::array<real, 2> gA, gB, gCt;
        detail::bary_one(P, s0, s1, s2, &gA, &gB, &gCt);
        for (int j = 0; j < 2; ++j) {
          g_s[0][size_t(j)] += g_l[0] * gA[size_t(j)];
          g_s[1][size_t(j)] += g_l[0] * gB[size_t(j)];
          g_s[2][size_t(j)] += g_l[0] * gCt[size_t(j)];
        }
        detail::bary_one(P, s1, s2, s0, &gA, &gB, &gCt);
        for (int j = 0; j < 2; ++j) {
          g_s[1][size_t(j)] += g_l[1] * gA[size_t(j)];
          g_s[2][size_t(j)] += g_l[1] * gB[size_t(j)];
          g_s[0][size_t(j)] += g_l[1] * gCt[size_t(j)];
        }
        detail::bary_one(P, s2, s0, s1, &gA, &gB, &gCt);
        for (int j = 0; j < 2; ++j) {
          g_s[2][size_t(j)] += g_l[2] * gA[size_t(j)];
          g_s[0][size_t(j)] += g_l[2] * gB[size_t(j)];
          g_s[1][size_t(j)] += g_l[2] * gCt[size_t(j)];
        }
      }

      // projection and camera transform
      for (int k = 0; k < 3; ++k) {
        int vi = tri[size_t(k)];
        Vec3 c = pm.cam[size_t(vi)];
        Vec3 g_cam{};
        g_cam.x = in.focal / c.z * g_s[k][0];
        g_cam.y = in.focal / c.z * g_s[k][1];
        g_cam.z = -in.focal * c.x / (c.z * c.z) * g_s[k][0] -
                  in.focal * c.y / (c.z * c.z) * g_s[k][1] + g_z[k];
        Vec3 V = mesh.vertices[size_t(vi)];
        out.d_verts[size_t(vi)] += transpose(ex.R) * g_cam;
        for (int r = 0; r < 3; ++r)
          for (int cc = 0; cc < 3; ++cc) gR(r, cc) += g_cam[r] * V[cc];
        gt += g_cam;
      }
    }
  }

  // vertex unit normals -> raw normals -> vertices
  std::vector<Vec3> g_raw(mesh.vertices.size());
  bool any_normal = false;
  for (size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
    Vec3 g = g_unit_normal[vi];
    if (norm2(g) == 0) continue;
    any_normal = true;
    real rn = norm(vn.raw[vi]);
    if (rn > 0) {
      Vec3 n = vn.unit[vi];
      g_raw[vi] = (g - dot(g, n) * n) / rn;
    }
  }
  if (any_normal) {
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
      auto& fc = mesh.faces[fi];
      Vec3 gc{};
      for (int k = 0; k < 3; ++k) gc += g_raw[size_t(fc[size_t(k)])];
      if (norm2(gc) == 0) continue;
      Vec3 e1 = mesh.vertices[size_t(fc[1])] - mesh.vertices[size_t(fc[0])];
      Vec3 e2 = mesh.vertices[size_t(fc[2])] - mesh.vertices[size_t(fc[0])];
      Vec3 ge1 = cross(e2, gc), ge2 = cross(gc, e1);
      out.d_verts[size_t(fc[1])] += ge1;
      out.d_verts[size_t(fc[2])] += ge2;
      out.d_verts[size_t(fc[0])] -= ge1 + ge2;
    }
  }

  for (int k = 0; k < 4; ++k) {
    real g = dot(gt, jac.dt[size_t(k)]) + dot(gC, jac.dC[size_t(k)]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) g += gR(r, c) * jac.dR[size_t(k)](r, c);
    out.d_pose[size_t(k)] = g;
  }
  return out;
}

// Spec-surface convenience: gradients of a per-pixel UV objective with
// respect to vertices and camera parameters.
inline RasterGrads fragment_vertex_gradients(const Mesh& mesh, const VertexNormals& vn,
                                             const CameraPose& pose, const Intrinsics& in,
                                             const FragmentMap& fm,
                                             const std::vector<std::array<real, 2>>& g_uv) {
  std::vector<PixelUpstream> ups(fm.face.size());
  for (size_t i = 0; i < ups.size(); ++i) ups[i].g_uv = g_uv[i];
  return raster_backward(mesh, vn, pose, in, fm, ups);
}

}  // namespace dmnt
