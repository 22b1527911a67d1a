#pragma once

// Differentiable image-plane -> surface (texture-space) feature transfer.
//
// Every 2x2 block of on-object pixels maps to a quadrilateral in UV space;
// surface texels inside the quad receive the bilinearly weighted average of
// the four corner features. Multiply-covered texels are averaged through an
// accumulated weight; quads wider than 0.2 of the texture extent (seam
// crossers) are skipped. Backward produces exact gradients to both the
// features and the UV coordinates of the quad corners; containment and skip
// decisions are piecewise-constant and carry no gradient.

#include "dmnt/tensor.hpp"

namespace dmnt {

struct UvGrid {
  int width = 0, height = 0;
  std::vector<std::array<real, 2>> uv;  // row-major, [0,1]^2
  std::vector<uint8_t> on_object;

  int64_t idx(int x, int y) const { return int64_t(y) * width + x; }
};

struct SurfaceFeatureMap {
  int q = 0, d = 0;
  Tensor feat;            // {q, q, d}, weight-normalized where visible
  Tensor weight;          // {q, q}, accumulated total quad weight
  std::vector<uint8_t> visible;  // weight > 0

  int64_t idx(int u, int v) const { return int64_t(v) * q + u; }
};

struct QuadLookup {
  struct Entry {
    int px = 0, py = 0;  // top-left pixel of the source 2x2 block
    real a = 0, b = 0;   // inverse-bilinear coordinates of the texel center
  };
  static constexpr int kMaxEntries = 10;
  int q = 0;
  std::vector<std::array<Entry, kMaxEntries>> entries;
  std::vector<int> counts;
};

struct TransferResult {
  SurfaceFeatureMap surf;
  QuadLookup lookup;
  int overflow_count = 0;   // texels that hit the 10-entry cap
  int newton_failures = 0;  // inverse-bilinear non-convergence, quad-texel skipped
};

namespace detail {

inline real cross2(std::array<real, 2> a, std::array<real, 2> b) {
  return a[0] * b[1] - a[1] * b[0];
}
inline std::array<real, 2> sub2(std::array<real, 2> a, std::array<real, 2> b) {
  return {a[0] - b[0], a[1] - b[1]};
}

inline bool point_in_tri(std::array<real, 2> p, std::array<real, 2> a,
                         std::array<real, 2> b, std::array<real, 2> c) {
  real d0 = cross2(sub2(b, a), sub2(p, a));
  real d1 = cross2(sub2(c, b), sub2(p, b));
  real d2 = cross2(sub2(a, c), sub2(p, c));
  bool neg = d0 < 0 || d1 < 0 || d2 < 0;
  bool pos = d0 > 0 || d1 > 0 || d2 > 0;
  return !(neg && pos);
}

// Concave projected quads are handled by testing the two triangles.
inline bool point_in_quad(std::array<real, 2> p, const std::array<real, 2> c[4]) {
  return point_in_tri(p, c[0], c[1], c[2]) || point_in_tri(p, c[0], c[2], c[3]);
}

inline void bilinear_weights(real a, real b, real w[4]) {
  w[0] = (1 - a) * (1 - b);
  w[1] = a * (1 - b);
  w[2] = a * b;
  w[3] = (1 - a) * b;
}

inline std::array<real, 2> bilerp(const std::array<real, 2> c[4], real a, real b) {
  real w[4];
  bilinear_weights(a, b, w);
  return {w[0] * c[0][0] + w[1] * c[1][0] + w[2] * c[2][0] + w[3] * c[3][0],
          w[0] * c[0][1] + w[1] * c[1][1] + w[2] * c[2][1] + w[3] * c[3][1]};
}

// Jacobian [dP/da | dP/db] of the bilinear map.
inline void bilerp_jacobian(const std::array<real, 2> c[4], real a, real b,
                            std::array<real, 2>& dpa, std::array<real, 2>& dpb) {
  for (int i = 0; i < 2; ++i) {
    dpa[i] = -(1 - b) * c[0][i] + (1 - b) * c[1][i] + b * c[2][i] - b * c[3][i];
    dpb[i] = -(1 - a) * c[0][i] - a * c[1][i] + a * c[2][i] + (1 - a) * c[3][i];
  }
}

// Newton solve of bilerp(c; a, b) = target. Returns false on non-convergence.
inline bool inverse_bilinear(const std::array<real, 2> c[4], std::array<real, 2> target,
                             real& a, real& b) {
  a = real(0.5);
  b = real(0.5);
  for (int it = 0; it < 20; ++it) {
    std::array<real, 2> p = bilerp(c, a, b);
    real rx = p[0] - target[0], ry = p[1] - target[1];
    if (std::abs(rx) < real(1e-11) && std::abs(ry) < real(1e-11)) return true;
    std::array<real, 2> ja, jb;
    bilerp_jacobian(c, a, b, ja, jb);
    real det = ja[0] * jb[1] - ja[1] * jb[0];
    if (std::abs(det) < real(1e-14)) return false;
    a -= (jb[1] * rx - jb[0] * ry) / det;
    b -= (-ja[1] * rx + ja[0] * ry) / det;
  }
  return false;
}

}  // namespace detail

// Generalized barycentric weights of p inside a quad, via inverse bilinear
// mapping. Corners ordered (c00, c10, c11, c01) around the quad.
inline bool quad_weights(std::array<real, 2> p, const std::array<real, 2> corners[4],
                         real w[4]) {
  real a, b;
  if (!detail::inverse_bilinear(corners, p, a, b)) return false;
  detail::bilinear_weights(a, b, w);
  return true;
}

constexpr real kQuadSkipExtent = real(0.2);  // of the texture extent, per axis

inline TransferResult transfer_forward(const UvGrid& U, const Tensor& F, int q) {
  check(F.shape.size() == 3 && F.shape[0] == U.height && F.shape[1] == U.width,
        "transfer_forward: U and F resolution mismatch");
  check(F.all_finite(), "transfer_forward: non-finite features");
  int d = F.shape[2];

  TransferResult r;
  r.surf.q = q;
  r.surf.d = d;
  r.surf.feat = Tensor({q, q, d});
  r.surf.weight = Tensor({q, q});
  r.surf.visible.assign(size_t(q) * q, 0);
  r.lookup.q = q;
  r.lookup.entries.resize(size_t(q) * q);
  r.lookup.counts.assign(size_t(q) * q, 0);

  const int dx[4] = {0, 1, 1, 0}, dy[4] = {0, 0, 1, 1};

  for (int y = 0; y + 1 < U.height; ++y) {
    for (int x = 0; x + 1 < U.width; ++x) {
      bool all_on = true;
      std::array<real, 2> c[4];
      for (int k = 0; k < 4; ++k) {
        int64_t i = U.idx(x + dx[k], y + dy[k]);
        if (!U.on_object[size_t(i)]) { all_on = false; break; }
        c[k] = {U.uv[size_t(i)][0] * q, U.uv[size_t(i)][1] * q};  // texel coords
      }
      if (!all_on) continue;

      real ulo = c[0][0], uhi = c[0][0], vlo = c[0][1], vhi = c[0][1];
      for (int k = 1; k < 4; ++k) {
        ulo = std::min(ulo, c[k][0]); uhi = std::max(uhi, c[k][0]);
        vlo = std::min(vlo, c[k][1]); vhi = std::max(vhi, c[k][1]);
      }
      if (uhi - ulo > kQuadSkipExtent * q || vhi - vlo > kQuadSkipExtent * q) continue;

      int i0 = std::max(0, int(std::floor(ulo - real(0.5))));
      int i1 = std::min(q - 1, int(std::ceil(uhi - real(0.5))) + 1);
      int j0 = std::max(0, int(std::floor(vlo - real(0.5))));
      int j1 = std::min(q - 1, int(std::ceil(vhi - real(0.5))) + 1);
      for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
          std::array<real, 2> p = {real(i) + real(0.5), real(j) + real(0.5)};
          if (!detail::point_in_quad(p, c)) continue;
          real a, b;
          if (!detail::inverse_bilinear(c, p, a, b)) {
            ++r.newton_failures;
            continue;
          }
          int64_t t = r.surf.idx(i, j);
          int& cnt = r.lookup.counts[size_t(t)];
          if (cnt >= QuadLookup::kMaxEntries) {
            ++r.overflow_count;  // keep-first: drop this contribution entirely
            continue;
          }
          r.lookup.entries[size_t(t)][size_t(cnt)] = {x, y, a, b};
          ++cnt;
          real w[4];
          detail::bilinear_weights(a, b, w);
          real wsum = 0;
          for (int k = 0; k < 4; ++k) {
            wsum += w[k];
            const real* f = &F[(int64_t(y + dy[k]) * U.width + (x + dx[k])) * d];
            real* out = &r.surf.feat[t * d];
            for (int ch = 0; ch < d; ++ch) out[ch] += w[k] * f[ch];
          }
          r.surf.weight[t] += wsum;
        }
      }
    }
  }

  for (int64_t t = 0; t < int64_t(q) * q; ++t) {
    if (r.surf.weight[t] > 0) {
      r.surf.visible[size_t(t)] = 1;
      real inv = 1 / r.surf.weight[t];
      for (int ch = 0; ch < d; ++ch) r.surf.feat[t * d + ch] *= inv;
    }
  }
  return r;
}

struct TransferGrads {
  Tensor d_feat;  // {H, W, d}
  Tensor d_uv;    // {H, W, 2}, in [0,1] UV units
};

inline TransferGrads transfer_backward(const Tensor& upstream, const UvGrid& U,
                                       const Tensor& F, const TransferResult& fwd) {
  int q = fwd.surf.q, d = fwd.surf.d;
  check(upstream.shape == fwd.surf.feat.shape, "transfer_backward: upstream shape mismatch");
  check(fwd.lookup.q == q, "transfer_backward: mismatched lookup");
  TransferGrads g;
  g.d_feat = Tensor({U.height, U.width, d});
  g.d_uv = Tensor({U.height, U.width, 2});

  const int dx[4] = {0, 1, 1, 0}, dy[4] = {0, 0, 1, 1};

  for (int64_t t = 0; t < int64_t(q) * q; ++t) {
    int cnt = fwd.lookup.counts[size_t(t)];
    if (cnt == 0) continue;
    real wh = fwd.surf.weight[t];
    const real* gt = &upstream[t * d];
    const real* fhat = &fwd.surf.feat[t * d];
    for (int e = 0; e < cnt; ++e) {
      const auto& en = fwd.lookup.entries[size_t(t)][size_t(e)];
      std::array<real, 2> c[4];
      const real* fp[4];
      for (int k = 0; k < 4; ++k) {
        int64_t i = U.idx(en.px + dx[k], en.py + dy[k]);
        c[k] = {U.uv[size_t(i)][0] * q, U.uv[size_t(i)][1] * q};
        fp[k] = &F[i * d];
      }
      real w[4];
      detail::bilinear_weights(en.a, en.b, w);

      // feature gradient and dL/dw_k through the weighted average
      real gw[4];
      for (int k = 0; k < 4; ++k) {
        real* gf = &g.d_feat[U.idx(en.px + dx[k], en.py + dy[k]) * d];
        real s = 0;
        for (int ch = 0; ch < d; ++ch) {
          gf[ch] += (w[k] / wh) * gt[ch];
          s += gt[ch] * (fp[k][ch] - fhat[ch]);
        }
        gw[k] = s / wh;
      }

      // dL/d(a,b) via the bilinear basis derivatives
      real dwa[4] = {-(1 - en.b), (1 - en.b), en.b, -en.b};
      real dwb[4] = {-(1 - en.a), -en.a, en.a, (1 - en.a)};
      real gla = 0, glb = 0;
      for (int k = 0; k < 4; ++k) {
        gla += gw[k] * dwa[k];
        glb += gw[k] * dwb[k];
      }

      // (a,b) depends on the corners through the inverse bilinear map:
      // d(a,b)/dc_k = -w_k * J^{-1}, so dL/dc_k = -w_k * J^{-T} dL/d(a,b)
      std::array<real, 2> ja, jb;
      detail::bilerp_jacobian(c, en.a, en.b, ja, jb);
      real det = ja[0] * jb[1] - ja[1] * jb[0];
      if (std::abs(det) < real(1e-14)) continue;
      // J^{-1} = 1/det [ jb[1] -jb[0]; -ja[1] ja[0] ]; apply transpose to (gla, glb)
      real gx = (jb[1] * gla - ja[1] * glb) / det;
      real gy = (-jb[0] * gla + ja[0] * glb) / det;
      for (int k = 0; k < 4; ++k) {
        int64_t i = U.idx(en.px + dx[k], en.py + dy[k]);
        g.d_uv[i * 2 + 0] += -w[k] * gx * q;  // texel -> [0,1] UV units
        g.d_uv[i * 2 + 1] += -w[k] * gy * q;
      }
    }
  }
  return g;
}

// Splat one-hot labels and take the per-texel argmax. Uncovered texels get
// label -1 ("invisible").
inline std::vector<int> transfer_segmentation(const UvGrid& U,
                                              const std::vector<int>& labels,
                                              int label_count, int q) {
  check(int64_t(labels.size()) == int64_t(U.width) * U.height,
        "transfer_segmentation: label grid mismatch");
  Tensor onehot({U.height, U.width, label_count});
  for (int64_t i = 0; i < int64_t(labels.size()); ++i) {
    int l = labels[size_t(i)];
    check(l >= 0 && l < label_count, "transfer_segmentation: label out of range");
    onehot[i * label_count + l] = 1;
  }
  TransferResult r = transfer_forward(U, onehot, q);
  std::vector<int> out(size_t(q) * q, -1);
  for (int64_t t = 0; t < int64_t(q) * q; ++t) {
    if (!r.surf.visible[size_t(t)]) continue;
    int best = 0;
    for (int l = 1; l < label_count; ++l)
      if (r.surf.feat[t * label_count + l] > r.surf.feat[t * label_count + best]) best = l;
    out[size_t(t)] = best;
  }
  return out;
}

}  // namespace dmnt
