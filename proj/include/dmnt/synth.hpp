#pragma once

// Procedural synthetic scenes: three built-in object classes with exemplar
// variation and smooth vertex colors, rendered under sampled poses over a
// noise background, with optional rectangular occluder patches at graded
// coverage levels. Ground-truth amodal/visible masks come straight from the
// renderer.

#include "dmnt/rasterizer.hpp"

namespace dmnt {

// --------------------------------------------------------------------------
// Exemplar geometry: a deformed geodesic sphere per (class, exemplar index).

namespace detail {

inline real linf(Vec3 v) { return std::max({std::abs(v.x), std::abs(v.y), std::abs(v.z)}); }

inline Vec3 class_deform(int class_id, int k, Vec3 p) {
  real var = 1 + real(0.12) * real(k);  // exemplar-to-exemplar variation
  switch (class_id) {
    case 0: {  // lobed sphere
      real r = 1 + real(0.18) * std::sin(3 * p.z * kPi) * std::cos(2 * std::atan2(p.y, p.x));
      return (r * var) * p;
    }
    case 1: {  // ellipsoid
      return cwise(Vec3{real(1.45) * var, real(0.9), real(0.6) / var}, p);
    }
    default: {  // rounded box
      real l = linf(p);
      Vec3 q = l > 0 ? p / l : p;
      real b = real(0.55);
      Vec3 out = (1 - b) * p + b * q;
      return cwise(Vec3{var, 1, real(0.8)}, out);
    }
  }
}

inline std::array<real, 3> class_color(int class_id, Vec3 p) {
  auto wave = [](real x) { return real(0.5) + real(0.45) * std::sin(x); };
  switch (class_id) {
    case 0:
      return {wave(4 * p.x + 1), wave(4 * p.y), wave(2 * p.z + 2)};
    case 1:
      return {wave(6 * p.z), wave(3 * p.x + p.y + 3), wave(5 * p.y + 1)};
    default:
      return {wave(2 * p.x + 5 * p.y), wave(7 * p.z + 2), wave(3 * p.x - 3 * p.z)};
  }
}

}  // namespace detail

inline Mesh make_exemplar(int class_id, int k, int template_level) {
  Mesh m = build_template(template_level);
  for (size_t i = 0; i < m.vertices.size(); ++i)
    m.vertices[i] = detail::class_deform(class_id, k, m.vertices[i]);
  m.colors.resize(m.vertices.size());
  Mesh tmpl = build_template(template_level);
  for (size_t i = 0; i < m.vertices.size(); ++i)
    m.colors[i] = detail::class_color(class_id, tmpl.vertices[i]);
  return m;
}

// --------------------------------------------------------------------------

struct SynthConfig {
  int width = 128, height = 128;
  real focal_per_width = real(2.5);
  int classes = 3;
  int exemplars_per_class = 2;
  int template_level = 2;
  real distance_lo = real(4.6), distance_hi = real(5.4);
  real elevation_lo = -kPi / 9, elevation_hi = kPi / 3;
  real theta_lo = -kPi / 6, theta_hi = kPi / 6;

  Intrinsics intrinsics() const {
    return default_intrinsics(width, height, focal_per_width);
  }
};

struct SynthScene {
  Tensor image;  // {H, W, 3}
  int class_id = 0;
  int latent = 0;
  CameraPose pose;
  std::vector<uint8_t> amodal;   // object coverage before occlusion
  std::vector<uint8_t> visible;  // amodal minus occluders
  int occlusion_level = 0;
  real occluder_coverage = 0;    // occluded fraction of the amodal mask
};

inline CameraPose sample_pose(const SynthConfig& cfg, Rng& rng) {
  return {uniform(rng, 0, 2 * kPi), uniform(rng, cfg.elevation_lo, cfg.elevation_hi),
          uniform(rng, cfg.theta_lo, cfg.theta_hi),
          uniform(rng, cfg.distance_lo, cfg.distance_hi)};
}

// Shaded vertex-color render over a smooth procedural background.
inline Tensor render_rgb(const Mesh& mesh, const CameraPose& pose, const Intrinsics& in,
                         std::vector<uint8_t>* coverage, Rng& rng) {
  check(mesh.colors.size() == mesh.vertices.size(), "render_rgb: mesh has no colors");
  FragmentMap fm = rasterize(mesh, pose, in);
  VertexNormals vn = vertex_normals(mesh);
  Extrinsics ex = pose_to_extrinsics(pose);
  Vec3 light = normalized(ex.C + Vec3{1, 1, 2});

  // background: sum of random sinusoids, fixed per image
  real ph[6];
  for (auto& p : ph) p = uniform(rng, 0, 2 * kPi);
  real fr[6];
  for (auto& f : fr) f = uniform(rng, real(0.02), real(0.12));

  Tensor img({in.height, in.width, 3});
  if (coverage) coverage->assign(size_t(in.width) * in.height, 0);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      int64_t i = fm.idx(x, y);
      real* px = &img[i * 3];
      int f = fm.face[size_t(i)];
      if (f < 0) {
        for (int c = 0; c < 3; ++c)
          px[c] = real(0.45) + real(0.25) * std::sin(fr[2 * c] * x + ph[2 * c]) *
                                    std::cos(fr[2 * c + 1] * y + ph[2 * c + 1]);
        continue;
      }
      if (coverage) (*coverage)[size_t(i)] = 1;
      auto& tri = mesh.faces[size_t(f)];
      auto& b = fm.bary[size_t(i)];
      Vec3 n{};
      real col[3] = {0, 0, 0};
      for (int k = 0; k < 3; ++k) {
        n += b[size_t(k)] * vn.unit[size_t(tri[size_t(k)])];
        for (int c = 0; c < 3; ++c)
          col[c] += b[size_t(k)] * mesh.colors[size_t(tri[size_t(k)])][size_t(c)];
      }
      real shade = real(0.55) + real(0.45) * std::max(real(0), dot(normalized(n), light));
      for (int c = 0; c < 3; ++c) px[c] = std::clamp(col[c] * shade, real(0), real(1));
    }
  return img;
}

// Paste noise-filled rectangles until the occluded fraction of the object
// mask reaches `target`. Rectangles grow pixel-by-pixel, so the final
// coverage lands close to the target.
inline real paste_occluders(Tensor& img, const std::vector<uint8_t>& amodal,
                            std::vector<uint8_t>& visible, real target, Rng& rng) {
  int h = img.shape[0], w = img.shape[1];
  int64_t obj = 0;
  for (uint8_t m : amodal) obj += m;
  if (obj == 0 || target <= 0) return 0;

  std::vector<uint8_t> occluded(amodal.size(), 0);
  auto coverage = [&] {
    int64_t n = 0;
    for (size_t i = 0; i < amodal.size(); ++i) n += amodal[i] && occluded[i];
    return real(n) / real(obj);
  };

  // object bounding box for occluder placement
  int x0 = w, x1 = 0, y0 = h, y1 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (amodal[size_t(int64_t(y) * w + x)]) {
        x0 = std::min(x0, x); x1 = std::max(x1, x);
        y0 = std::min(y0, y); y1 = std::max(y1, y);
      }

  auto paint = [&](int rx0, int ry0, int rx1, int ry1, const real base[3], real fscale,
                   const real phase[3]) {
    for (int y = std::max(0, ry0); y <= std::min(h - 1, ry1); ++y)
      for (int x = std::max(0, rx0); x <= std::min(w - 1, rx1); ++x) {
        int64_t i = int64_t(y) * w + x;
        occluded[size_t(i)] = 1;
        for (int c = 0; c < 3; ++c)
          img[i * 3 + c] = std::clamp(
              base[c] + real(0.3) * std::sin(fscale * x + phase[c]) *
                            std::cos(fscale * y + phase[(c + 1) % 3]),
              real(0), real(1));
      }
  };

  int guard = 0;
  while (coverage() < target && guard++ < 16) {
    int cx = uniform_int(rng, x0, x1), cy = uniform_int(rng, y0, y1);
    real base[3] = {uniform(rng, real(0.2), real(0.8)), uniform(rng, real(0.2), real(0.8)),
                    uniform(rng, real(0.2), real(0.8))};
    real phase[3] = {uniform(rng, 0, 2 * kPi), uniform(rng, 0, 2 * kPi),
                     uniform(rng, 0, 2 * kPi)};
    real fscale = uniform(rng, real(0.3), real(0.9));
    int rx0 = cx, rx1 = cx, ry0 = cy, ry1 = cy;
    paint(rx0, ry0, rx1, ry1, base, fscale, phase);
    int step = 0;
    while (coverage() < target && (rx1 - rx0 < w || ry1 - ry0 < h)) {
      if (step++ % 2 == 0) { --rx0; ++rx1; } else { --ry0; ++ry1; }
      paint(rx0, ry0, rx1, ry1, base, fscale, phase);
      if (rx0 < 0 && rx1 >= w && ry0 < 0 && ry1 >= h) break;
    }
  }

  for (size_t i = 0; i < visible.size(); ++i)
    visible[i] = amodal[i] && !occluded[i] ? 1 : 0;
  return coverage();
}

inline real occlusion_target(int level) {
  switch (level) {
    case 0: return 0;
    case 1: return real(0.2);
    case 2: return real(0.4);
    default: return real(0.6);
  }
}

inline SynthScene generate_scene(const SynthConfig& cfg, int class_id, int latent,
                                 int occlusion_level, Rng& rng) {
  check(class_id >= 0 && class_id < cfg.classes, "generate_scene: bad class");
  check(latent >= 0 && latent < cfg.exemplars_per_class, "generate_scene: bad latent");
  SynthScene s;
  s.class_id = class_id;
  s.latent = latent;
  s.occlusion_level = occlusion_level;
  s.pose = sample_pose(cfg, rng);
  Mesh mesh = make_exemplar(class_id, latent, cfg.template_level);
  s.image = render_rgb(mesh, s.pose, cfg.intrinsics(), &s.amodal, rng);
  s.visible = s.amodal;
  s.occluder_coverage =
      paste_occluders(s.image, s.amodal, s.visible, occlusion_target(occlusion_level), rng);
  return s;
}

}  // namespace dmnt
