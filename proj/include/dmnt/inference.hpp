#pragma once

// Multi-start render-and-compare inference: optimize camera pose, shape
// latent, and instance scale against the feature reconstruction loss;
// produce pose, segmentation, and class decisions.
//
// Loss convention: per-pixel means over the covered set O, so a perfect
// reconstruction scores 0 and the loss lives in [~0, 2]. Rankings (init
// argmin, descent, classification argmin) are unaffected by the 1/|O|.

#include "dmnt/rasterizer.hpp"
#include "dmnt/shape_fit.hpp"
#include "dmnt/texture_bank.hpp"
#include "dmnt/training.hpp"

namespace dmnt {

struct InferenceState {
  CameraPose pose;
  std::vector<real> z;              // free latent vector
  std::array<real, 3> log_scale{};  // instance scale, log-parameterized
  real loss = std::numeric_limits<real>::max();
  bool empty_coverage = false;

  Vec3 instance_scale() const {
    return {std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])};
  }
};

inline Mesh instance_mesh(const ShapeSpace& shape, const InferenceState& st) {
  Mesh m = shape.deform(st.z);
  Vec3 s = st.instance_scale();
  for (auto& v : m.vertices) v = cwise(s, v);
  return m;
}

enum class PixelLabel : uint8_t { FG = 0, BgUnderObject = 1, Background = 2 };

struct SegmentationResult {
  int width = 0, height = 0;
  std::vector<PixelLabel> label;
  std::vector<uint8_t> amodal;   // covered-pixel set O
  std::vector<uint8_t> visible;  // FG
};

// Pixel in O is foreground iff its feature matches the render at least as
// well as the best background entry.
inline SegmentationResult segment_fgbg(const Tensor& F, const FeatureMapRender& Fr,
                                       const BackgroundBank& back) {
  int h = F.shape[0], w = F.shape[1], d = F.shape[2];
  SegmentationResult seg;
  seg.width = w;
  seg.height = h;
  seg.label.assign(size_t(w) * h, PixelLabel::Background);
  seg.amodal.assign(size_t(w) * h, 0);
  seg.visible.assign(size_t(w) * h, 0);
  for (int64_t i = 0; i < int64_t(w) * h; ++i) {
    if (!Fr.on_object[size_t(i)]) continue;
    seg.amodal[size_t(i)] = 1;
    const real* f = &F[i * d];
    real render_sim = 0;
    for (int c = 0; c < d; ++c) render_sim += f[c] * Fr.feat[i * d + c];
    real bg_sim = back.size > 0 ? back.best_similarity(f)
                                : -std::numeric_limits<real>::max();
    if (render_sim >= bg_sim) {
      seg.label[size_t(i)] = PixelLabel::FG;
      seg.visible[size_t(i)] = 1;
    } else {
      seg.label[size_t(i)] = PixelLabel::BgUnderObject;
    }
  }
  return seg;
}

struct ReconGrads {
  std::array<real, 4> d_pose{};  // azimuth, elevation, theta, distance
  std::vector<real> d_z;
  std::array<real, 3> d_log_scale{};
};

// Optional frozen evaluation: fixed per-pixel face assignment and FG/BG
// partition. This is the smooth branch used by finite-difference checks.
struct FrozenAssignment {
  std::vector<int> faces;
  std::vector<uint8_t> fg;
};

// 1 - [ sum_FG f.f' + sum_{BG in O} f.beta_best ] / |O|.
// The partition and the background term are piecewise-constant in the state;
// gradients flow through f' only (render path: pose, latent, scale).
inline real reconstruction_loss(const Tensor& F, const InferenceState& st,
                                const ShapeSpace& shape, const NeuralTextureBank& bank,
                                const BackgroundBank& back, const Intrinsics& fin,
                                ReconGrads* grads = nullptr,
                                SegmentationResult* seg_out = nullptr,
                                bool* empty_flag = nullptr,
                                const FrozenAssignment* frozen = nullptr) {
  check(F.shape.size() == 3 && F.shape[0] == fin.height && F.shape[1] == fin.width,
        "reconstruction_loss: feature map / intrinsics mismatch");
  int d = F.shape[2], b = bank.bin_count();
  check(d == bank.d, "reconstruction_loss: feature dim mismatch");

  Mesh mesh = instance_mesh(shape, st);
  VertexNormals vn = vertex_normals(mesh);
  FragmentMap frag = frozen ? interpolate_assignment(mesh, st.pose, fin, frozen->faces)
                            : rasterize(mesh, st.pose, fin);
  int64_t n_cov = frag.covered_count();
  if (empty_flag) *empty_flag = n_cov == 0;
  if (n_cov == 0) {
    if (grads) {
      grads->d_pose = {};
      grads->d_z.assign(st.z.size(), 0);
      grads->d_log_scale = {};
    }
    if (seg_out) *seg_out = segment_fgbg(F, {Tensor(F.shape), std::vector<uint8_t>(F.size() / d, 0)}, back);
    return 1;
  }

  Extrinsics ex = pose_to_extrinsics(st.pose);
  Tensor alpha = alpha_field(frag, mesh, vn, st.pose, bank.bins, bank.temp);
  FeatureMapRender Fr = render_features(frag, bank, alpha);
  SegmentationResult seg = segment_fgbg(F, Fr, back);
  if (frozen) {
    check(frozen->fg.size() == seg.visible.size(), "reconstruction_loss: frozen partition size");
    for (size_t i = 0; i < seg.visible.size(); ++i) {
      if (!seg.amodal[i]) continue;
      seg.visible[i] = frozen->fg[i];
      seg.label[i] = frozen->fg[i] ? PixelLabel::FG : PixelLabel::BgUnderObject;
    }
  }

  real acc = 0;
  for (int64_t i = 0; i < int64_t(seg.amodal.size()); ++i) {
    if (!seg.amodal[size_t(i)]) continue;
    const real* f = &F[i * d];
    if (seg.visible[size_t(i)]) {
      for (int c = 0; c < d; ++c) acc += f[c] * Fr.feat[i * d + c];
    } else {
      acc += back.size > 0 ? back.best_similarity(f) : 0;
    }
  }
  real loss = 1 - acc / real(n_cov);

  if (seg_out) *seg_out = seg;
  if (!grads) return loss;

  // Backward: per FG pixel, dL/df' = -f / |O|; expand through the viewing
  // mixture and the texture samples into UV / normal / point / camera
  // upstreams, then through the rasterizer into vertices and pose.
  std::vector<PixelUpstream> ups(seg.amodal.size());
  real inv_n = 1 / real(n_cov);
  std::vector<real> smp(size_t(b) * d);
  for (int y = 0; y < fin.height; ++y)
    for (int x = 0; x < fin.width; ++x) {
      int64_t i = frag.idx(x, y);
      if (!seg.visible[size_t(i)]) continue;
      int fface = frag.face[size_t(i)];
      if (fface < 0) continue;
      const real* f = &F[i * d];
      real u = frag.uv[size_t(i)][0], v = frag.uv[size_t(i)][1];
      // g wrt rendered feature
      std::vector<real> gf(size_t(d), 0);
      for (int c = 0; c < d; ++c) gf[size_t(c)] = -f[c] * inv_n;
      // samples per bin, dL/dalpha_b, and the UV gradient
      std::vector<real> g_alpha(size_t(b), 0);
      PixelUpstream& up = ups[size_t(i)];
      for (int bi = 0; bi < b; ++bi) {
        real* s = &smp[size_t(bi) * d];
        bank.sample(bi, u, v, s);
        real ga = 0;
        for (int c = 0; c < d; ++c) ga += gf[size_t(c)] * s[c];
        g_alpha[size_t(bi)] = ga;
        real ab = alpha[i * b + bi];
        if (ab != 0) {
          std::vector<real> gscaled(size_t(d), 0);
          for (int c = 0; c < d; ++c) gscaled[size_t(c)] = ab * gf[size_t(c)];
          bank.sample_vjp(bi, u, v, gscaled.data(), up.g_uv[0], up.g_uv[1]);
        }
      }
      // softmax backward to the logits l_b = T * view . (R_b n)
      real gdot = 0;
      for (int bi = 0; bi < b; ++bi) gdot += g_alpha[size_t(bi)] * alpha[i * b + bi];
      // recompute the unit normal and surface point the alpha used
      auto& tri = mesh.faces[size_t(fface)];
      auto& w = frag.bary[size_t(i)];
      Vec3 m{}, p{};
      for (int k = 0; k < 3; ++k) {
        m += w[size_t(k)] * vn.unit[size_t(tri[size_t(k)])];
        p += w[size_t(k)] * mesh.vertices[size_t(tri[size_t(k)])];
      }
      Vec3 n = normalized(m);
      Vec3 cp = ex.C - p;
      real cpn = norm(cp);
      if (cpn == 0 || norm(m) == 0) continue;
      Vec3 view = cp / cpn;
      Vec3 g_view{}, g_n{};
      for (int bi = 0; bi < b; ++bi) {
        real gl = alpha[i * b + bi] * (g_alpha[size_t(bi)] - gdot) * bank.temp;
        if (gl == 0) continue;
        g_view += gl * (bank.bins.rot[size_t(bi)] * n);
        g_n += gl * (transpose(bank.bins.rot[size_t(bi)]) * view);
      }
      Vec3 g_cp = (g_view - dot(g_view, view) * view) / cpn;
      up.g_camera += g_cp;
      up.g_point -= g_cp;
      up.g_normal += g_n;
    }

  RasterGrads rg = raster_backward(mesh, vn, st.pose, fin, frag, ups);
  grads->d_pose = rg.d_pose;

  // vertices (instance frame) -> log-scale, latent
  Vec3 inst = st.instance_scale();
  Vec3 cls = shape.scale();
  for (int dd = 0; dd < 3; ++dd) {
    real g = 0;
    for (size_t vi = 0; vi < mesh.vertices.size(); ++vi)
      g += rg.d_verts[vi][dd] * mesh.vertices[vi][dd];
    grads->d_log_scale[size_t(dd)] = g;
  }
  {
    int n_verts = shape.tmpl.vertex_count();
    Tensor g_disp({n_verts, 3});
    for (int vi = 0; vi < n_verts; ++vi)
      for (int dd = 0; dd < 3; ++dd)
        g_disp.at(vi, dd) = rg.d_verts[size_t(vi)][dd] * inst[dd] * cls[dd];
    Tape t;
    auto pvars = shape.field.lift(t);
    Var input = t.leaf(shape.field.input_matrix(shape.tmpl.vertices, st.z));
    Var disp = shape.field.forward(t, pvars, input);
    Var obj = t.dot(disp, t.leaf(g_disp));
    t.backward(obj);
    const Tensor& gin = t.grad(input);
    grads->d_z.assign(st.z.size(), 0);
    for (int vi = 0; vi < n_verts; ++vi)
      for (size_t k = 0; k < st.z.size(); ++k)
        grads->d_z[k] += gin.at(vi, 3 + int(k));
  }
  return loss;
}

// ---------------------------------------------------------------------------

struct SearchGrid {
  int azimuths = 12;
  std::vector<real> elevations = {-kPi / 6, 0, kPi / 6, kPi / 3};
  std::vector<real> thetas = {-kPi / 6, 0, kPi / 6};
  real distance = 5;

  std::vector<CameraPose> poses() const {
    std::vector<CameraPose> out;
    for (int a = 0; a < azimuths; ++a)
      for (real e : elevations)
        for (real th : thetas)
          out.push_back({2 * kPi * real(a) / real(azimuths), e, th, distance});
    return out;
  }
};

// Score every (pose, one-hot latent) candidate without gradients; return the
// argmin state. Ties break toward the earlier candidate.
inline InferenceState init_search(const Tensor& F, const ShapeSpace& shape,
                                  const NeuralTextureBank& bank,
                                  const BackgroundBank& back, const Intrinsics& fin,
                                  const SearchGrid& grid = {}) {
  InferenceState best;
  auto poses = grid.poses();
  int K = shape.field.latent_dim;
  for (int k = 0; k < K; ++k) {
    InferenceState st;
    st.z = shape.one_hot(k);
    for (const auto& p : poses) {
      st.pose = p;
      real l = reconstruction_loss(F, st, shape, bank, back, fin);
      if (l < best.loss) {
        best = st;
        best.loss = l;
      }
    }
  }
  return best;
}

// Score every (pose, one-hot latent) candidate and return the `count` best,
// greedily skipping candidates within `min_angle` of an already-kept rotation
// so the starts cover distinct basins (symmetric shapes produce near-tied
// minima half a turn apart).
inline std::vector<InferenceState> init_search_candidates(
    const Tensor& F, const ShapeSpace& shape, const NeuralTextureBank& bank,
    const BackgroundBank& back, const Intrinsics& fin, const SearchGrid& grid,
    int count, real min_angle = kPi / 6) {
  std::vector<InferenceState> scored;
  auto poses = grid.poses();
  for (int k = 0; k < shape.field.latent_dim; ++k) {
    InferenceState st;
    st.z = shape.one_hot(k);
    for (const auto& p : poses) {
      st.pose = p;
      st.loss = reconstruction_loss(F, st, shape, bank, back, fin);
      scored.push_back(st);
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const InferenceState& a, const InferenceState& b) {
                     return a.loss < b.loss;
                   });
  auto angle_between = [](const CameraPose& a, const CameraPose& b) {
    Mat3 rel = transpose(pose_to_extrinsics(a).R) * pose_to_extrinsics(b).R;
    real tr = rel(0, 0) + rel(1, 1) + rel(2, 2);
    return std::acos(std::clamp((tr - 1) / 2, real(-1), real(1)));
  };
  std::vector<InferenceState> kept;
  for (const auto& c : scored) {
    if (int(kept.size()) >= count) break;
    bool close = false;
    for (const auto& k : kept)
      if (angle_between(c.pose, k.pose) < min_angle) { close = true; break; }
    if (!close) kept.push_back(c);
  }
  return kept;
}

struct OptimizeConfig {
  int steps = 300;
  real lr = real(0.05);
  int restarts = 1;  // pose-diverse grid candidates refined per class
};

struct OptimizeResult {
  InferenceState state;  // best-so-far
  std::vector<real> trace;
  bool aborted = false;  // non-finite loss triggered rollback
};

// Adam on (pose with log-distance, z, log-scale); FG/BG re-partitioned every
// step. Non-finite loss rolls back to the best state seen and stops.
inline OptimizeResult optimize(const InferenceState& init, const Tensor& F,
                               const ShapeSpace& shape, const NeuralTextureBank& bank,
                               const BackgroundBank& back, const Intrinsics& fin,
                               const OptimizeConfig& cfg = {}) {
  int K = int(init.z.size());
  int np = 4 + K + 3;
  Tensor params({np});
  params[0] = init.pose.azimuth;
  params[1] = init.pose.elevation;
  params[2] = init.pose.theta;
  params[3] = std::log(init.pose.distance);
  for (int k = 0; k < K; ++k) params[4 + k] = init.z[size_t(k)];
  for (int d = 0; d < 3; ++d) params[4 + K + d] = init.log_scale[size_t(d)];

  auto unpack = [&](const Tensor& p) {
    InferenceState st;
    st.pose = {p[0], p[1], p[2], std::exp(p[3])};
    st.z.assign(size_t(K), 0);
    for (int k = 0; k < K; ++k) st.z[size_t(k)] = p[4 + k];
    for (int d = 0; d < 3; ++d) st.log_scale[size_t(d)] = p[4 + K + d];
    return st;
  };

  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState opt(params.shape, ac);

  OptimizeResult out;
  out.state = init;
  out.state.loss = std::numeric_limits<real>::max();
  Tensor best_params = params;

  for (int step = 0; step < cfg.steps; ++step) {
    InferenceState st = unpack(params);
    ReconGrads g;
    real loss = reconstruction_loss(F, st, shape, bank, back, fin, &g);
    if (!is_finite(loss)) {
      out.aborted = true;
      break;
    }
    out.trace.push_back(loss);
    if (loss < out.state.loss) {
      out.state = st;
      out.state.loss = loss;
      best_params = params;
    }
    Tensor grad({np});
    grad[0] = g.d_pose[0];
    grad[1] = g.d_pose[1];
    grad[2] = g.d_pose[2];
    grad[3] = g.d_pose[3] * st.pose.distance;  // chain through log-distance
    for (int k = 0; k < K; ++k) grad[4 + k] = g.d_z[size_t(k)];
    for (int d = 0; d < 3; ++d) grad[4 + K + d] = g.d_log_scale[size_t(d)];
    if (!grad.all_finite()) {
      out.aborted = true;
      break;
    }
    adam_step(opt, params, grad);
  }
  return out;
}

// ---------------------------------------------------------------------------

// Refine every diverse grid candidate and keep the best refined state.
inline OptimizeResult optimize_multistart(const Tensor& F, const ShapeSpace& shape,
                                          const NeuralTextureBank& bank,
                                          const BackgroundBank& back,
                                          const Intrinsics& fin, const SearchGrid& grid,
                                          const OptimizeConfig& cfg) {
  auto starts = init_search_candidates(F, shape, bank, back, fin, grid,
                                       std::max(1, cfg.restarts));
  OptimizeResult best;
  bool any = false;
  for (const auto& s : starts) {
    OptimizeResult o = optimize(s, F, shape, bank, back, fin, cfg);
    if (!any || o.state.loss < best.state.loss) {
      best = std::move(o);
      any = true;
    }
  }
  return best;
}

struct ClassifyResult {
  int class_id = -1;
  bool tie = false;
  std::vector<real> losses;               // per class, class order
  std::vector<InferenceState> states;     // optimized per class
};

inline ClassifyResult classify(const Tensor& F, const Model& model,
                               const Intrinsics& fin, const SearchGrid& grid = {},
                               const OptimizeConfig& opt_cfg = {}) {
  ClassifyResult r;
  for (int c = 0; c < model.class_count(); ++c) {
    OptimizeResult o = optimize_multistart(F, model.shapes[size_t(c)], model.banks[size_t(c)],
                                           model.background, fin, grid, opt_cfg);
    r.losses.push_back(o.state.loss);
    r.states.push_back(o.state);
    if (r.class_id < 0 || o.state.loss < r.losses[size_t(r.class_id)]) {
      r.class_id = c;
    } else if (o.state.loss == r.losses[size_t(r.class_id)]) {
      r.tie = true;  // keep the lower index
    }
  }
  return r;
}

// Per-vertex visibility labels from the image-space segmentation: project
// every vertex and read the pixel label; vertices that lose the depth test
// (or fall outside O) are invisible.
enum class VertexLabel : uint8_t { Visible = 0, Occluded = 1, Invisible = 2 };

inline std::vector<VertexLabel> vertex_visibility(const Mesh& mesh, const CameraPose& pose,
                                                  const Intrinsics& fin,
                                                  const FragmentMap& frag,
                                                  const SegmentationResult& seg) {
  Extrinsics ex = pose_to_extrinsics(pose);
  ProjectedMesh pm = project_mesh(mesh, ex, fin);
  // vertex -> incident faces for the depth-test ownership check
  std::vector<std::vector<int>> vfaces(mesh.vertices.size());
  for (int f = 0; f < mesh.face_count(); ++f)
    for (int k = 0; k < 3; ++k) vfaces[size_t(mesh.faces[size_t(f)][size_t(k)])].push_back(f);

  std::vector<VertexLabel> out(mesh.vertices.size(), VertexLabel::Invisible);
  for (size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
    if (!pm.valid[vi]) continue;
    int x = int(std::floor(pm.screen[vi][0]));
    int y = int(std::floor(pm.screen[vi][1]));
    if (x < 0 || x >= fin.width || y < 0 || y >= fin.height) continue;
    int64_t i = frag.idx(x, y);
    int f = frag.face[size_t(i)];
    if (f < 0) continue;
    bool front = false;
    for (int g : vfaces[vi])
      if (g == f) { front = true; break; }
    if (!front && pm.cam[vi].z > frag.depth[size_t(i)] + real(1e-3)) continue;
    out[vi] = seg.visible[size_t(i)] ? VertexLabel::Visible : VertexLabel::Occluded;
  }
  return out;
}

inline void color_mesh_by_visibility(Mesh& mesh, const std::vector<VertexLabel>& labels) {
  mesh.colors.resize(mesh.vertices.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case VertexLabel::Visible: mesh.colors[i] = {0.1f, 0.8f, 0.1f}; break;
      case VertexLabel::Occluded: mesh.colors[i] = {0.9f, 0.15f, 0.1f}; break;
      case VertexLabel::Invisible: mesh.colors[i] = {0.5f, 0.5f, 0.5f}; break;
    }
  }
}

}  // namespace dmnt
