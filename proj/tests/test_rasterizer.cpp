#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmnt/finite_diff.hpp"
#include "dmnt/rasterizer.hpp"

using namespace dmnt;

namespace {

Intrinsics small_intr(int side = 32) { return default_intrinsics(side, side); }

Mesh two_plane_mesh(real x_far, real x_near) {
  // Two triangles in planes of constant world x, both covering the image
  // center when viewed from +x.
  Mesh m;
  auto add = [&](real c) {
    int base = m.vertex_count();
    m.vertices.push_back({c, -1, -1});
    m.vertices.push_back({c, 1, -1});
    m.vertices.push_back({c, 0, 1});
    m.faces.push_back({base, base + 1, base + 2});
  };
  add(x_far);
  add(x_near);
  m.uv.assign(m.vertices.size(), {real(0.5), real(0.5)});
  return m;
}

}  // namespace

TEST_CASE("extrinsics: anchor pose puts the origin at depth d") {
  for (real d : {real(1), real(3), real(7.5)}) {
    Extrinsics e = pose_to_extrinsics({0, 0, 0, d});
    CHECK(e.t.x == doctest::Approx(0));
    CHECK(e.t.y == doctest::Approx(0));
    CHECK(e.t.z == doctest::Approx(d));
    CHECK(norm(e.C) == doctest::Approx(d));
  }
}

TEST_CASE("extrinsics: rotations are orthonormal and theta is 2pi-periodic") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    CameraPose p{uniform(rng, -kPi, kPi), uniform(rng, -kPi / 2, kPi / 2),
                 uniform(rng, -kPi, kPi), uniform(rng, real(1), real(9))};
    Extrinsics e = pose_to_extrinsics(p);
    Mat3 I = e.R * transpose(e.R);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(std::abs(I(r, c) - (r == c ? 1 : 0)) < 1e-12);

    CameraPose p2 = p;
    p2.theta += 2 * kPi;
    Extrinsics e2 = pose_to_extrinsics(p2);
    for (int k = 0; k < 9; ++k) CHECK(e.R.m[size_t(k)] == doctest::Approx(e2.R.m[size_t(k)]));
  }
}

TEST_CASE("pose jacobian matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    CameraPose p{uniform(rng, -2, 2), uniform(rng, real(-1.2), real(1.2)),
                 uniform(rng, -2, 2), uniform(rng, 2, 8)};
    ExtrinsicsJac j = pose_jacobian(p);
    real h = real(1e-6);
    for (int k = 0; k < 4; ++k) {
      CameraPose lo = p, hi = p;
      (&lo.azimuth)[k] -= h;
      (&hi.azimuth)[k] += h;
      Extrinsics el = pose_to_extrinsics(lo), eh = pose_to_extrinsics(hi);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          CHECK(j.dR[size_t(k)](r, c) ==
                doctest::Approx((eh.R(r, c) - el.R(r, c)) / (2 * h)).epsilon(1e-5));
      for (int c = 0; c < 3; ++c) {
        CHECK(j.dt[size_t(k)][c] ==
              doctest::Approx((eh.t[c] - el.t[c]) / (2 * h)).epsilon(1e-5));
        CHECK(j.dC[size_t(k)][c] ==
              doctest::Approx((eh.C[c] - el.C[c]) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("fragments: barycentrics sum to one and reproject to the pixel center") {
  Mesh m = build_template(2);
  CameraPose pose{real(0.3), real(0.2), real(0.1), 5};
  Intrinsics in = small_intr(48);
  FragmentMap fm = rasterize(m, pose, in);
  REQUIRE(fm.covered_count() > 0);
  ProjectedMesh pm = project_mesh(m, pose_to_extrinsics(pose), in);
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x) {
      int64_t i = fm.idx(x, y);
      int f = fm.face[size_t(i)];
      if (f < 0) continue;
      auto& b = fm.bary[size_t(i)];
      CHECK(b[0] + b[1] + b[2] == doctest::Approx(1).epsilon(1e-9));
      // screen barycentrics recovered from perspective-correct ones
      auto& tri = m.faces[size_t(f)];
      real t0 = b[0] * pm.cam[size_t(tri[0])].z, t1 = b[1] * pm.cam[size_t(tri[1])].z,
           t2 = b[2] * pm.cam[size_t(tri[2])].z;
      real ts = t0 + t1 + t2;
      real sx = (t0 * pm.screen[size_t(tri[0])][0] + t1 * pm.screen[size_t(tri[1])][0] +
                 t2 * pm.screen[size_t(tri[2])][0]) / ts;
      real sy = (t0 * pm.screen[size_t(tri[0])][1] + t1 * pm.screen[size_t(tri[1])][1] +
                 t2 * pm.screen[size_t(tri[2])][1]) / ts;
      CHECK(sx == doctest::Approx(x + 0.5).epsilon(1e-6));
      CHECK(sy == doctest::Approx(y + 0.5).epsilon(1e-6));
    }
}

TEST_CASE("z-buffer: nearer face wins, ties go to the lower index") {
  Intrinsics in = small_intr();
  CameraPose pose{0, 0, 0, 5};
  Mesh m = two_plane_mesh(0, 1);  // face 1 is nearer to the camera at +x
  FragmentMap fm = rasterize(m, pose, in);
  int64_t c = fm.idx(in.width / 2, in.height / 2);
  REQUIRE(fm.face[size_t(c)] >= 0);
  CHECK(fm.face[size_t(c)] == 1);

  Mesh tied = two_plane_mesh(0, 0);  // identical depths
  FragmentMap fm2 = rasterize(tied, pose, in);
  for (int64_t i = 0; i < int64_t(fm2.face.size()); ++i)
    if (fm2.face[size_t(i)] >= 0) CHECK(fm2.face[size_t(i)] == 0);
}

TEST_CASE("sphere silhouette area matches the analytic disk") {
  Intrinsics in = default_intrinsics(100, 100);
  real d = 8;
  Mesh m = build_template(3);
  FragmentMap fm = rasterize(m, {real(0.4), real(0.3), 0, d}, in);
  real r_px = in.focal / std::sqrt(d * d - 1);
  real analytic = kPi * r_px * r_px;
  CHECK(std::abs(real(fm.covered_count()) - analytic) < real(0.02) * analytic);
}

TEST_CASE("coverage is azimuth-invariant for the sphere") {
  Intrinsics in = small_intr(64);
  Mesh m = build_template(2);
  FragmentMap a = rasterize(m, {0, real(0.2), 0, 6}, in);
  FragmentMap b = rasterize(m, {real(1.234), real(0.2), 0, 6}, in);
  // same geometry from a rotated viewpoint: identical footprint statistics
  CHECK(std::abs(real(a.covered_count()) - real(b.covered_count())) <=
        real(0.01) * real(a.covered_count()));
  real mina = *std::min_element(a.depth.begin(), a.depth.end(),
                                [](real p, real q) { return (p > 0 ? p : 1e30) < (q > 0 ? q : 1e30); });
  real minb = *std::min_element(b.depth.begin(), b.depth.end(),
                                [](real p, real q) { return (p > 0 ? p : 1e30) < (q > 0 ? q : 1e30); });
  // the faceted sphere is only approximately rotation-invariant
  CHECK(mina == doctest::Approx(minb).epsilon(0.005));
}

TEST_CASE("alpha field rows are a simplex on covered pixels") {
  Mesh m = build_template(2);
  auto vn = vertex_normals(m);
  CameraPose pose{real(0.5), real(0.3), real(0.1), 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  ViewingBinSet bins = make_viewing_bins(7);
  Tensor a = alpha_field(fm, m, vn, pose, bins, 5);
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i) {
    real s = 0;
    for (int b = 0; b < 7; ++b) {
      real v = a[i * 7 + b];
      CHECK(v >= 0);
      s += v;
    }
    if (fm.face[size_t(i)] >= 0) CHECK(s == doctest::Approx(1).epsilon(1e-9));
    else CHECK(s == 0);
  }
}

TEST_CASE("render_features: constant texture renders the constant") {
  Mesh m = build_template(2);
  auto vn = vertex_normals(m);
  CameraPose pose{real(0.2), real(0.1), 0, 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  NeuralTextureBank bank;
  bank.q = 16;
  bank.d = 4;
  bank.bins = make_viewing_bins(7);
  bank.theta = Tensor({7, 16, 16, 4});
  for (int64_t t = 0; t < bank.theta.size() / 4; ++t)
    for (int c = 0; c < 4; ++c) bank.theta[t * 4 + c] = real(c + 1) / 10;
  Tensor alpha = alpha_field(fm, m, vn, pose, bank.bins, bank.temp);
  FeatureMapRender out = render_features(fm, bank, alpha);
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i)
    for (int c = 0; c < 4; ++c) {
      real want = fm.face[size_t(i)] >= 0 ? real(c + 1) / 10 : 0;
      CHECK(out.feat[i * 4 + c] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("render_features: single bin reduces to a plain texture lookup") {
  Mesh m = build_template(2);
  auto vn = vertex_normals(m);
  CameraPose pose{real(0.7), real(-0.2), 0, 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  NeuralTextureBank bank;
  bank.q = 12;
  bank.d = 3;
  bank.bins = make_viewing_bins(1);
  Rng rng(9);
  bank.init(rng);
  Tensor alpha = alpha_field(fm, m, vn, pose, bank.bins, bank.temp);
  FeatureMapRender out = render_features(fm, bank, alpha);
  real smp[3];
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i) {
    if (fm.face[size_t(i)] < 0) continue;
    bank.sample(0, fm.uv[size_t(i)][0], fm.uv[size_t(i)][1], smp);
    for (int c = 0; c < 3; ++c)
      CHECK(out.feat[i * 3 + c] == doctest::Approx(smp[c]).epsilon(1e-12));
  }
}

TEST_CASE("render_features matches a naive per-pixel loop and is linear in theta") {
  Mesh m = build_template(2);
  auto vn = vertex_normals(m);
  CameraPose pose{real(-0.4), real(0.25), real(0.1), 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  NeuralTextureBank a;
  a.q = 16;
  a.d = 5;
  a.bins = make_viewing_bins(7);
  Rng rng(21);
  a.init(rng);
  Tensor alpha = alpha_field(fm, m, vn, pose, a.bins, a.temp);
  FeatureMapRender out = render_features(fm, a, alpha);

  // naive loop, written out independently of the production path
  std::vector<real> smp(5);
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i) {
    real acc[5] = {0, 0, 0, 0, 0};
    if (fm.face[size_t(i)] >= 0)
      for (int b = 0; b < 7; ++b) {
        a.sample(b, fm.uv[size_t(i)][0], fm.uv[size_t(i)][1], smp.data());
        for (int c = 0; c < 5; ++c) acc[c] += alpha[i * 7 + b] * smp[c];
      }
    for (int c = 0; c < 5; ++c) CHECK(std::abs(out.feat[i * 5 + c] - acc[c]) < 1e-9);
  }

  NeuralTextureBank b2 = a, sum = a;
  Rng rng2(22);
  b2.init(rng2);
  for (int64_t i = 0; i < sum.theta.size(); ++i) sum.theta[i] = a.theta[i] + b2.theta[i];
  FeatureMapRender oa = render_features(fm, a, alpha);
  FeatureMapRender ob = render_features(fm, b2, alpha);
  FeatureMapRender os = render_features(fm, sum, alpha);
  for (int64_t i = 0; i < os.feat.size(); ++i)
    CHECK(std::abs(os.feat[i] - (oa.feat[i] + ob.feat[i])) < 1e-9);
}

TEST_CASE("raster backward: zero upstream gives zero gradients") {
  Mesh m = build_template(1);
  auto vn = vertex_normals(m);
  CameraPose pose{real(0.3), real(0.2), 0, 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  std::vector<PixelUpstream> ups(fm.face.size());
  RasterGrads g = raster_backward(m, vn, pose, in, fm, ups);
  for (auto& v : g.d_verts) CHECK(norm(v) == 0);
  for (int k = 0; k < 4; ++k) CHECK(g.d_pose[size_t(k)] == 0);
}

// Frozen-assignment finite-difference oracle over the full upstream surface:
// UV, depth, world point, unit normal and camera-center channels at once.
TEST_CASE("raster backward matches finite differences under a frozen assignment") {
  Mesh m = build_template(1);
  auto vn0 = vertex_normals(m);
  CameraPose pose{real(0.35), real(0.22), real(0.15), 5};
  Intrinsics in = small_intr(24);
  FragmentMap fm = rasterize(m, pose, in);
  REQUIRE(fm.covered_count() > 20);

  Rng rng(33);
  std::vector<PixelUpstream> ups(fm.face.size());
  for (int64_t i = 0; i < int64_t(fm.face.size()); ++i) {
    if (fm.face[size_t(i)] < 0) continue;
    PixelUpstream& u = ups[size_t(i)];
    real uu = fm.uv[size_t(i)][0];
    if (uu > real(0.05) && uu < real(0.95)) {  // keep away from the u seam
      u.g_uv = {gaussian(rng), gaussian(rng)};
    }
    u.g_depth = gaussian(rng);
    u.g_point = {gaussian(rng), gaussian(rng), gaussian(rng)};
    u.g_normal = {gaussian(rng), gaussian(rng), gaussian(rng)};
    u.g_camera = {gaussian(rng), gaussian(rng), gaussian(rng)};
  }

  auto loss_of = [&](const Mesh& mesh, const CameraPose& p) {
    VertexNormals vn = vertex_normals(mesh);
    FragmentMap f2 = interpolate_assignment(mesh, p, in, fm.face);
    Extrinsics ex = pose_to_extrinsics(p);
    real L = 0;
    for (int64_t i = 0; i < int64_t(f2.face.size()); ++i) {
      int f = f2.face[size_t(i)];
      if (f < 0) continue;
      const PixelUpstream& u = ups[size_t(i)];
      L += u.g_uv[0] * f2.uv[size_t(i)][0] + u.g_uv[1] * f2.uv[size_t(i)][1];
      L += u.g_depth * f2.depth[size_t(i)];
      auto& tri = mesh.faces[size_t(f)];
      auto& b = f2.bary[size_t(i)];
      Vec3 pt{}, nm{};
      for (int k = 0; k < 3; ++k) {
        pt += b[size_t(k)] * mesh.vertices[size_t(tri[size_t(k)])];
        nm += b[size_t(k)] * vn.unit[size_t(tri[size_t(k)])];
      }
      L += dot(u.g_point, pt) + dot(u.g_normal, normalized(nm)) + dot(u.g_camera, ex.C);
    }
    return L;
  };

  RasterGrads g = raster_backward(m, vn0, pose, in, fm, ups);

  real h = real(1e-5);
  // vertices
  real max_rel = 0;
  for (int vi = 0; vi < m.vertex_count(); ++vi)
    for (int d = 0; d < 3; ++d) {
      Mesh lo = m, hi = m;
      lo.vertices[size_t(vi)][d] -= h;
      hi.vertices[size_t(vi)][d] += h;
      real fd = (loss_of(hi, pose) - loss_of(lo, pose)) / (2 * h);
      real rel = std::abs(g.d_verts[size_t(vi)][d] - fd) / std::max(real(1), std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  CHECK(max_rel < 1e-3);

  // pose parameters
  for (int k = 0; k < 4; ++k) {
    CameraPose lo = pose, hi = pose;
    (&lo.azimuth)[k] -= h;
    (&hi.azimuth)[k] += h;
    real fd = (loss_of(m, hi) - loss_of(m, lo)) / (2 * h);
    CHECK(std::abs(g.d_pose[size_t(k)] - fd) / std::max(real(1), std::abs(fd)) < 1e-3);
  }
}

TEST_CASE("fragment_vertex_gradients agrees with the full backward on uv-only upstream") {
  Mesh m = build_template(1);
  auto vn = vertex_normals(m);
  CameraPose pose{real(0.1), real(0.4), 0, 5};
  Intrinsics in = small_intr();
  FragmentMap fm = rasterize(m, pose, in);
  Rng rng(44);
  std::vector<std::array<real, 2>> guv(fm.face.size(), {0, 0});
  std::vector<PixelUpstream> ups(fm.face.size());
  for (size_t i = 0; i < guv.size(); ++i) {
    if (fm.face[i] < 0) continue;
    guv[i] = {gaussian(rng), gaussian(rng)};
    ups[i].g_uv = guv[i];
  }
  RasterGrads a = fragment_vertex_gradients(m, vn, pose, in, fm, guv);
  RasterGrads b = raster_backward(m, vn, pose, in, fm, ups);
  for (size_t i = 0; i < a.d_verts.size(); ++i) CHECK(norm(a.d_verts[i] - b.d_verts[i]) < 1e-12);
  for (int k = 0; k < 4; ++k) CHECK(a.d_pose[size_t(k)] == doctest::Approx(b.d_pose[size_t(k)]));
}
