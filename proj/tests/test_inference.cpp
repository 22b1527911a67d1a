#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmnt/finite_diff.hpp"
#include "dmnt/inference.hpp"

using namespace dmnt;

namespace {

std::vector<real> random_unit(int d, Rng& rng) {
  std::vector<real> v(size_t(d), 0);
  real n = 0;
  for (auto& x : v) {
    x = gaussian(rng, 0, 1);
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

struct Fixture {
  ShapeSpace shape;
  NeuralTextureBank bank;
  BackgroundBank back{8, 32};
  Intrinsics fin = default_intrinsics(16, 16);
  CameraPose gt{kPi / 3, kPi / 6, 0, 5};
  Tensor F;
};

// Fill every viewing bin with the same smooth unit-norm texture so the render
// at the true state reproduces the observation almost exactly: low-frequency
// phases in u disambiguate azimuth, a phase in v disambiguates elevation.
void paint_smooth_texture(NeuralTextureBank& bank) {
  real inv = 1 / std::sqrt(real(3));
  for (int bin = 0; bin < bank.bin_count(); ++bin)
    for (int vr = 0; vr < bank.q; ++vr)
      for (int uc = 0; uc < bank.q; ++uc) {
        real u = (uc + real(0.5)) / bank.q, v = (vr + real(0.5)) / bank.q;
        real* t = &bank.theta[bank.texel_offset(bin, uc, vr)];
        std::fill(t, t + bank.d, real(0));
        t[0] = std::cos(2 * kPi * u) * inv;
        t[1] = std::sin(2 * kPi * u) * inv;
        t[2] = std::cos(6 * kPi * u) * inv;
        t[3] = std::sin(6 * kPi * u) * inv;
        t[4] = std::cos(2 * kPi * v) * inv;
        t[5] = std::sin(2 * kPi * v) * inv;
      }
}

// Observed features rendered from the bank itself at the ground-truth pose
// (normalized per pixel), with random unit noise off the object.
Fixture make_fixture(uint64_t seed, bool warp_field = false) {
  Fixture fx;
  fx.shape.tmpl = build_template(1);
  fx.shape.field.latent_dim = 2;
  fx.shape.field.hidden = {8};
  Rng rng(seed);
  fx.shape.field.init(rng);
  if (warp_field) {
    for (auto& x : fx.shape.field.W.back().v) x = gaussian(rng, 0, real(0.05));
    for (auto& x : fx.shape.field.b.back().v) x = gaussian(rng, 0, real(0.02));
  }
  fx.bank.q = 32;
  fx.bank.d = 8;
  fx.bank.bins = make_viewing_bins(7);
  fx.bank.init(rng);
  paint_smooth_texture(fx.bank);

  Mesh mesh = fx.shape.deform_one_hot(0);
  VertexNormals vn = vertex_normals(mesh);
  FragmentMap frag = rasterize(mesh, fx.gt, fx.fin);
  Tensor alpha = alpha_field(frag, mesh, vn, fx.gt, fx.bank.bins, fx.bank.temp);
  FeatureMapRender Fr = render_features(frag, fx.bank, alpha);

  fx.F = Tensor({fx.fin.height, fx.fin.width, 8});
  for (int64_t i = 0; i < int64_t(fx.fin.width) * fx.fin.height; ++i) {
    if (Fr.on_object[size_t(i)]) {
      real n = 0;
      for (int c = 0; c < 8; ++c) n += Fr.feat[i * 8 + c] * Fr.feat[i * 8 + c];
      n = std::max(std::sqrt(n), real(1e-12));
      for (int c = 0; c < 8; ++c) fx.F[i * 8 + c] = Fr.feat[i * 8 + c] / n;
    } else {
      auto u = random_unit(8, rng);
      for (int c = 0; c < 8; ++c) fx.F[i * 8 + c] = u[size_t(c)];
      fx.back.push(u.data());
    }
  }
  return fx;
}

real pose_gap(const CameraPose& a, const CameraPose& b) {
  real da = std::abs(std::remainder(a.azimuth - b.azimuth, 2 * kPi));
  return da + std::abs(a.elevation - b.elevation) + std::abs(a.theta - b.theta);
}

}  // namespace

TEST_CASE("search grid enumerates azimuth x elevation x theta candidates") {
  SearchGrid g;
  auto poses = g.poses();
  REQUIRE(poses.size() == 144);
  CHECK(poses[0].azimuth == 0);
  CHECK(poses[0].elevation == doctest::Approx(-kPi / 6));
  CHECK(poses.back().azimuth == doctest::Approx(2 * kPi * 11 / 12));
  for (auto& p : poses) CHECK(p.distance == 5);
}

TEST_CASE("instance_mesh applies the exponential of the stored log-scale") {
  ShapeSpace ss;
  ss.tmpl = build_template(0);
  ss.field.latent_dim = 1;
  Rng rng(1);
  ss.field.init(rng);
  InferenceState st;
  st.z = {0};
  st.log_scale = {std::log(real(2)), 0, std::log(real(0.5))};
  Mesh m = instance_mesh(ss, st);
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(m.vertices[i].x == doctest::Approx(2 * ss.tmpl.vertices[i].x));
    CHECK(m.vertices[i].y == doctest::Approx(ss.tmpl.vertices[i].y));
    CHECK(m.vertices[i].z == doctest::Approx(real(0.5) * ss.tmpl.vertices[i].z));
  }
}

TEST_CASE("segment_fgbg: covered pixels are foreground when no background is known") {
  Rng rng(2);
  Tensor F = random_tensor({2, 2, 3}, rng);
  FeatureMapRender Fr;
  Fr.feat = Tensor({2, 2, 3});
  Fr.on_object = {1, 0, 0, 0};
  Fr.feat[0] = 1;
  BackgroundBank empty(3, 8);
  SegmentationResult seg = segment_fgbg(F, Fr, empty);
  CHECK(seg.label[0] == PixelLabel::FG);
  CHECK(seg.amodal[0] == 1);
  CHECK(seg.visible[0] == 1);
  for (int i = 1; i < 4; ++i) {
    CHECK(seg.label[size_t(i)] == PixelLabel::Background);
    CHECK(seg.amodal[size_t(i)] == 0);
  }
}

TEST_CASE("segment_fgbg: a better-matching background entry flips the pixel to occluded") {
  Tensor F({1, 1, 2});
  F[0] = 1;  // observation along e0
  FeatureMapRender Fr;
  Fr.feat = Tensor({1, 1, 2});
  Fr.feat[1] = 1;  // render along e1: orthogonal to the observation
  Fr.on_object = {1};
  BackgroundBank back(2, 4);
  real e0[2] = {1, 0};
  back.push(e0);
  SegmentationResult seg = segment_fgbg(F, Fr, back);
  CHECK(seg.label[0] == PixelLabel::BgUnderObject);
  CHECK(seg.amodal[0] == 1);
  CHECK(seg.visible[0] == 0);
}

TEST_CASE("reconstruction loss: empty coverage gives loss 1 and zero gradients") {
  Fixture fx = make_fixture(3);
  InferenceState st;
  st.z = fx.shape.one_hot(0);
  st.pose = fx.gt;
  st.pose.distance = 2000;  // object projects between pixel centers
  ReconGrads g;
  bool empty = false;
  real loss = reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin, &g,
                                  nullptr, &empty);
  CHECK(empty);
  CHECK(loss == 1);
  for (int k = 0; k < 4; ++k) CHECK(g.d_pose[size_t(k)] == 0);
  for (real v : g.d_z) CHECK(v == 0);
  for (real v : g.d_log_scale) CHECK(v == 0);
}

TEST_CASE("reconstruction loss ranks the ground-truth pose above perturbations") {
  Fixture fx = make_fixture(5);
  InferenceState st;
  st.z = fx.shape.one_hot(0);
  st.pose = fx.gt;
  real at_gt = reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin);
  CHECK(at_gt < real(0.15));
  for (real d_az : {real(0.35), real(-0.35), real(1.0)}) {
    st.pose = fx.gt;
    st.pose.azimuth += d_az;
    CHECK(reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin) > at_gt);
  }
  st.pose = fx.gt;
  st.pose.elevation += real(0.4);
  CHECK(reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin) > at_gt);
}

TEST_CASE("init_search recovers a pose that lies on the grid") {
  Fixture fx = make_fixture(7);  // gt azimuth pi/3, elevation pi/6 are grid points
  InferenceState best = init_search(fx.F, fx.shape, fx.bank, fx.back, fx.fin);
  CHECK(best.pose.azimuth == doctest::Approx(fx.gt.azimuth).epsilon(1e-12));
  CHECK(best.pose.elevation == doctest::Approx(fx.gt.elevation).epsilon(1e-12));
  CHECK(best.pose.theta == doctest::Approx(fx.gt.theta).epsilon(1e-12));
  InferenceState st = best;
  real l = reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin);
  CHECK(best.loss == doctest::Approx(l).epsilon(1e-12));
}

TEST_CASE("reconstruction gradients pass finite differences under a frozen assignment") {
  Fixture fx = make_fixture(9, /*warp_field=*/true);
  InferenceState st0;
  st0.pose = {fx.gt.azimuth + real(0.1), fx.gt.elevation - real(0.05), real(0.07),
              real(5.2)};
  st0.z = {real(0.3), real(-0.2)};
  st0.log_scale = {real(0.05), real(-0.04), real(0.02)};

  SegmentationResult seg;
  reconstruction_loss(fx.F, st0, fx.shape, fx.bank, fx.back, fx.fin, nullptr, &seg);
  Mesh mesh0 = instance_mesh(fx.shape, st0);
  FragmentMap frag0 = rasterize(mesh0, st0.pose, fx.fin);
  FrozenAssignment frozen{frag0.face, seg.visible};

  ReconGrads g;
  reconstruction_loss(fx.F, st0, fx.shape, fx.bank, fx.back, fx.fin, &g, nullptr,
                      nullptr, &frozen);

  Tensor x0({9});
  x0[0] = st0.pose.azimuth;
  x0[1] = st0.pose.elevation;
  x0[2] = st0.pose.theta;
  x0[3] = st0.pose.distance;
  x0[4] = st0.z[0];
  x0[5] = st0.z[1];
  for (int k = 0; k < 3; ++k) x0[6 + k] = st0.log_scale[size_t(k)];
  Tensor ga({9});
  for (int k = 0; k < 4; ++k) ga[k] = g.d_pose[size_t(k)];
  ga[4] = g.d_z[0];
  ga[5] = g.d_z[1];
  for (int k = 0; k < 3; ++k) ga[6 + k] = g.d_log_scale[size_t(k)];

  ScalarFn f = [&](const Tensor& x) {
    InferenceState st;
    st.pose = {x[0], x[1], x[2], x[3]};
    st.z = {x[4], x[5]};
    st.log_scale = {x[6], x[7], x[8]};
    return reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin, nullptr,
                               nullptr, nullptr, &frozen);
  };
  CHECK(finite_diff_check(f, x0, ga, real(1e-5)) < 1e-3);
}

TEST_CASE("optimize: keeps the best state seen and reduces the pose error") {
  Fixture fx = make_fixture(11);
  InferenceState init;
  init.pose = fx.gt;
  init.pose.azimuth += real(0.3);
  init.pose.elevation -= real(0.12);
  init.z = fx.shape.one_hot(0);
  OptimizeConfig cfg;
  cfg.steps = 80;
  cfg.lr = real(0.02);
  OptimizeResult out = optimize(init, fx.F, fx.shape, fx.bank, fx.back, fx.fin, cfg);
  REQUIRE(!out.aborted);
  REQUIRE(!out.trace.empty());
  real best = out.trace[0];
  for (real l : out.trace) best = std::min(best, l);
  CHECK(out.state.loss == doctest::Approx(best).epsilon(1e-12));
  CHECK(pose_gap(out.state.pose, fx.gt) < pose_gap(init.pose, fx.gt));
}

TEST_CASE("optimize aborts on non-finite features without touching the init state") {
  Fixture fx = make_fixture(13);
  Tensor bad = fx.F;
  bad.fill(std::numeric_limits<real>::quiet_NaN());
  InferenceState init;
  init.pose = fx.gt;
  init.z = fx.shape.one_hot(0);
  OptimizeResult out = optimize(init, bad, fx.shape, fx.bank, fx.back, fx.fin, {20, real(0.02)});
  CHECK(out.aborted);
  CHECK(out.trace.empty());
  CHECK(out.state.pose.azimuth == init.pose.azimuth);
}

TEST_CASE("classify picks the class whose texture explains the observation") {
  Fixture fx = make_fixture(15);
  Model m;
  for (int c = 0; c < 2; ++c) {
    ShapeSpace ss;
    ss.tmpl = build_template(1);
    ss.field.latent_dim = 2;
    ss.field.hidden = {8};
    Rng r(100 + uint64_t(c));
    ss.field.init(r);
    m.shapes.push_back(std::move(ss));
    NeuralTextureBank b;
    b.q = 8;
    b.d = 8;
    b.bins = make_viewing_bins(7);
    Rng r2(200 + uint64_t(c));
    b.init(r2);
    m.banks.push_back(std::move(b));
  }
  m.banks[1] = fx.bank;  // the observation was rendered from this bank
  m.background = fx.back;
  SearchGrid grid;
  grid.azimuths = 6;
  grid.elevations = {kPi / 6};
  grid.thetas = {0};
  ClassifyResult r = classify(fx.F, m, fx.fin, grid, {15, real(0.02)});
  REQUIRE(r.losses.size() == 2);
  CHECK(r.class_id == 1);
  CHECK(r.losses[1] < r.losses[0]);
  CHECK(!r.tie);

  m.banks[0] = m.banks[1];
  m.shapes[0] = m.shapes[1];
  ClassifyResult same = classify(fx.F, m, fx.fin, grid, {5, real(0.02)});
  CHECK(same.class_id == 0);  // ties keep the lower index
  CHECK(same.tie);
}

TEST_CASE("vertex visibility separates camera-facing from far-side vertices") {
  Fixture fx = make_fixture(17);
  InferenceState st;
  st.pose = fx.gt;
  st.z = fx.shape.one_hot(0);
  SegmentationResult seg;
  reconstruction_loss(fx.F, st, fx.shape, fx.bank, fx.back, fx.fin, nullptr, &seg);
  Mesh mesh = instance_mesh(fx.shape, st);
  FragmentMap frag = rasterize(mesh, st.pose, fx.fin);
  auto labels = vertex_visibility(mesh, st.pose, fx.fin, frag, seg);
  REQUIRE(labels.size() == mesh.vertices.size());

  Extrinsics ex = pose_to_extrinsics(st.pose);
  VertexNormals vn = vertex_normals(mesh);
  int visible = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    real facing = dot(vn.unit[i], normalized(ex.C - mesh.vertices[i]));
    if (labels[i] == VertexLabel::Visible) {
      ++visible;
      CHECK(facing > -0.35);  // visible vertices face the camera, up to faceting
    }
    if (facing < -0.9) CHECK(labels[i] != VertexLabel::Visible);
  }
  CHECK(visible > 0);

  SegmentationResult occluded = seg;
  std::fill(occluded.visible.begin(), occluded.visible.end(), uint8_t(0));
  auto labels2 = vertex_visibility(mesh, st.pose, fx.fin, frag, occluded);
  int occ = 0;
  for (auto l : labels2) {
    CHECK(l != VertexLabel::Visible);
    occ += l == VertexLabel::Occluded;
  }
  CHECK(occ > 0);

  Mesh colored = mesh;
  color_mesh_by_visibility(colored, labels2);
  REQUIRE(colored.colors.size() == colored.vertices.size());
  real want_r = labels2[0] == VertexLabel::Occluded ? real(0.9) : real(0.5);
  CHECK(colored.colors[0][0] == doctest::Approx(want_r).epsilon(1e-6));
}
