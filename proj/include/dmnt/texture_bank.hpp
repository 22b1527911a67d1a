#pragma once

// Neural texture banks with viewing bins, the foreground/background feature
// likelihoods, and the momentum update of stored features.

#include "dmnt/tensor.hpp"
#include "dmnt/transfer.hpp"

namespace dmnt {

struct ViewingBinSet {
  std::vector<Vec3> axes;     // rotation vector axes (unit)
  std::vector<real> angles;   // radians
  std::vector<Mat3> rot;      // precomputed rotations

  int count() const { return int(rot.size()); }
};

// Identity plus (b-1) rotations of `angle` about axes evenly spaced in the
// xy-plane; the default reproduces the 7-bin, 60-degree layout.
inline ViewingBinSet make_viewing_bins(int b, real angle = kPi / 3) {
  check(b >= 1, "make_viewing_bins: need at least one bin");
  ViewingBinSet s;
  s.axes.push_back({0, 0, 1});
  s.angles.push_back(0);
  s.rot.push_back(Mat3::identity());
  for (int j = 1; j < b; ++j) {
    real phi = 2 * kPi * real(j - 1) / real(std::max(1, b - 1));
    Vec3 axis = {std::cos(phi), std::sin(phi), 0};
    s.axes.push_back(axis);
    s.angles.push_back(angle);
    s.rot.push_back(axis_angle(axis, angle));
  }
  return s;
}

// alpha_b = softmax_b( T * dot(view_dir, R_b(normal)) )
inline std::vector<real> viewing_coefficients(Vec3 normal, Vec3 view_dir,
                                              const ViewingBinSet& bins, real temp) {
  check(norm(normal) > 0 && norm(view_dir) > 0, "viewing_coefficients: zero vector");
  int b = bins.count();
  std::vector<real> logits(size_t(b), 0);
  for (int i = 0; i < b; ++i) logits[size_t(i)] = temp * dot(view_dir, bins.rot[size_t(i)] * normal);
  real mx = *std::max_element(logits.begin(), logits.end());
  real z = 0;
  for (auto& l : logits) { l = std::exp(l - mx); z += l; }
  for (auto& l : logits) l /= z;
  return logits;
}

// ---------------------------------------------------------------------------

struct NeuralTextureBank {
  int q = 0, d = 0;
  ViewingBinSet bins;
  real temp = 5;    // softmax temperature T
  real sigma = 1;   // likelihood bandwidth
  Tensor theta;     // {b, q, q, d}, unit-normalized feature vectors

  int bin_count() const { return bins.count(); }

  int64_t texel_offset(int bin, int uc, int vr) const {
    return (((int64_t(bin) * q + vr) * q) + uc) * d;
  }

  void init(Rng& rng) {
    theta = Tensor({bin_count(), q, q, d});
    for (auto& x : theta.v) x = gaussian(rng);
    normalize_all();
  }

  void normalize_all() {
    int64_t n = theta.size() / d;
    for (int64_t t = 0; t < n; ++t) {
      real s = 0;
      for (int c = 0; c < d; ++c) s += theta[t * d + c] * theta[t * d + c];
      real inv = s > 0 ? 1 / std::sqrt(s) : 0;
      for (int c = 0; c < d; ++c) theta[t * d + c] *= inv;
    }
  }

  // Bilinear sample of one bin at (u,v) in [0,1]^2; u wraps (azimuth is
  // periodic), v clamps at the poles.
  void sample(int bin, real u, real v, real* out) const {
    real x = u * q - real(0.5), y = v * q - real(0.5);
    int x0 = int(std::floor(x));
    real fx = x - x0;
    int xa = ((x0 % q) + q) % q, xb = (xa + 1) % q;
    real yc = std::clamp(y, real(0), real(q - 1));
    int y0 = std::min(q - 2 >= 0 ? q - 2 : 0, int(yc));
    real fy = yc - y0;
    const real* p00 = &theta[texel_offset(bin, xa, y0)];
    const real* p10 = &theta[texel_offset(bin, xb, y0)];
    const real* p01 = &theta[texel_offset(bin, xa, std::min(y0 + 1, q - 1))];
    const real* p11 = &theta[texel_offset(bin, xb, std::min(y0 + 1, q - 1))];
    for (int c = 0; c < d; ++c)
      out[c] = (1 - fx) * (1 - fy) * p00[c] + fx * (1 - fy) * p10[c] +
               (1 - fx) * fy * p01[c] + fx * fy * p11[c];
  }

  // Vector-Jacobian product: given upstream g (length d), accumulate the
  // gradient of g . sample(bin, u, v) into (gu, gv).
  void sample_vjp(int bin, real u, real v, const real* g, real& gu, real& gv) const {
    real x = u * q - real(0.5), y = v * q - real(0.5);
    int x0 = int(std::floor(x));
    real fx = x - x0;
    int xa = ((x0 % q) + q) % q, xb = (xa + 1) % q;
    real yc = std::clamp(y, real(0), real(q - 1));
    bool clamped = (y != yc);
    int y0 = std::min(q - 2 >= 0 ? q - 2 : 0, int(yc));
    real fy = yc - y0;
    const real* p00 = &theta[texel_offset(bin, xa, y0)];
    const real* p10 = &theta[texel_offset(bin, xb, y0)];
    const real* p01 = &theta[texel_offset(bin, xa, std::min(y0 + 1, q - 1))];
    const real* p11 = &theta[texel_offset(bin, xb, std::min(y0 + 1, q - 1))];
    real gx = 0, gy = 0;
    for (int c = 0; c < d; ++c) {
      gx += g[c] * ((1 - fy) * (p10[c] - p00[c]) + fy * (p11[c] - p01[c]));
      gy += g[c] * ((1 - fx) * (p01[c] - p00[c]) + fx * (p11[c] - p10[c]));
    }
    gu += gx * q;
    gv += clamped ? 0 : gy * q;
  }

  // Viewing-combined texture at a texel: sum_b alpha_b * theta_b.
  void combined_at(int uc, int vr, const real* alpha, real* out) const {
    for (int c = 0; c < d; ++c) out[c] = 0;
    for (int b = 0; b < bin_count(); ++b) {
      const real* t = &theta[texel_offset(b, uc, vr)];
      for (int c = 0; c < d; ++c) out[c] += alpha[b] * t[c];
    }
  }
};

// ---------------------------------------------------------------------------

struct BackgroundBank {
  int d = 0;
  int capacity = 0;
  Tensor feats;  // {capacity, d}
  int size = 0;
  int cursor = 0;  // FIFO replacement position

  BackgroundBank() = default;
  BackgroundBank(int dim, int cap) : d(dim), capacity(cap), feats({cap, dim}) {}

  void push(const real* f) {
    real s = 0;
    for (int c = 0; c < d; ++c) s += f[c] * f[c];
    real inv = s > 0 ? 1 / std::sqrt(s) : 0;
    for (int c = 0; c < d; ++c) feats.at(cursor, c) = f[c] * inv;
    cursor = (cursor + 1) % capacity;
    size = std::min(size + 1, capacity);
  }

  // Highest dot product against the bank.
  real best_similarity(const real* f) const {
    check(size > 0, "BackgroundBank: empty bank");
    real best = -std::numeric_limits<real>::max();
    for (int i = 0; i < size; ++i) {
      real s = 0;
      for (int c = 0; c < d; ++c) s += f[c] * feats.at(i, c);
      best = std::max(best, s);
    }
    return best;
  }
};

inline void push_background(BackgroundBank& bank, const Tensor& feats /*{n, d}*/) {
  check(feats.shape.size() == 2 && feats.cols() == bank.d, "push_background: shape mismatch");
  for (int i = 0; i < feats.rows(); ++i) bank.push(&feats.v[size_t(i) * bank.d]);
}

// ---------------------------------------------------------------------------
// Likelihoods (Gaussian over features; unit vectors give |f-t|^2 = 2 - 2 f.t).

inline real gaussian_loglik(const real* f, const real* t, int d, real sigma) {
  check(sigma > 0, "gaussian_loglik: sigma must be positive");
  real d2 = 0;
  for (int c = 0; c < d; ++c) d2 += (f[c] - t[c]) * (f[c] - t[c]);
  return -std::log(sigma * std::sqrt(2 * kPi)) - d2 / (2 * sigma * sigma);
}

// Log of the viewing-bin mixture density, via log-sum-exp.
inline real foreground_loglik(const real* f, const real* alpha,
                              const std::vector<const real*>& theta_bins, int d,
                              real sigma) {
  check(sigma > 0, "foreground_loglik: sigma must be positive");
  int b = int(theta_bins.size());
  real mx = -std::numeric_limits<real>::max();
  std::vector<real> terms(size_t(b), 0);
  for (int i = 0; i < b; ++i) {
    terms[size_t(i)] = std::log(std::max(alpha[i], real(1e-300))) +
                       gaussian_loglik(f, theta_bins[size_t(i)], d, sigma);
    mx = std::max(mx, terms[size_t(i)]);
  }
  real z = 0;
  for (real t : terms) z += std::exp(t - mx);
  return mx + std::log(z);
}

// Best-matching background entry.
inline real background_loglik(const real* f, const BackgroundBank& bank, real sigma) {
  check(bank.size > 0, "background_loglik: empty bank");
  real best = -std::numeric_limits<real>::max();
  for (int i = 0; i < bank.size; ++i)
    best = std::max(best, gaussian_loglik(f, &bank.feats.v[size_t(i) * bank.d], bank.d, sigma));
  return best;
}

// One observed pixel assigned to the foreground: its feature, surface (u,v),
// and per-bin viewing coefficients.
struct FgObservation {
  const real* f;
  std::array<real, 2> uv;
  const real* alpha;
};

// Sum of foreground log-likelihoods (texture sampled at each pixel's surface
// coordinate) plus background log-likelihoods of the BG-assigned pixels.
inline real object_loglik(const std::vector<FgObservation>& fg,
                          const std::vector<const real*>& bg,
                          const NeuralTextureBank& bank, const BackgroundBank& back) {
  int b = bank.bin_count(), d = bank.d;
  std::vector<real> sampled(size_t(b) * d);
  std::vector<const real*> ptrs(size_t(b), nullptr);
  for (int i = 0; i < b; ++i) ptrs[size_t(i)] = &sampled[size_t(i) * d];
  real ll = 0;
  for (const auto& ob : fg) {
    for (int i = 0; i < b; ++i) bank.sample(i, ob.uv[0], ob.uv[1], &sampled[size_t(i) * d]);
    ll += foreground_loglik(ob.f, ob.alpha, ptrs, d, bank.sigma);
  }
  for (const real* f : bg) ll += background_loglik(f, back, bank.sigma);
  return ll;
}

// ---------------------------------------------------------------------------

// theta_{b,u,v} <- normalize(mu * theta + (1-mu) * alpha_b * fhat) on visible
// texels; invisible entries are untouched bitwise.
inline void momentum_update(NeuralTextureBank& bank, const SurfaceFeatureMap& surf,
                            const Tensor& alpha_surface /*{q, q, b}*/, real mu) {
  check(surf.q == bank.q && surf.d == bank.d, "momentum_update: resolution mismatch");
  check(mu >= 0 && mu <= 1, "momentum_update: momentum out of range");
  if (mu == 1) return;
  int b = bank.bin_count(), d = bank.d, q = bank.q;
  for (int vr = 0; vr < q; ++vr)
    for (int uc = 0; uc < q; ++uc) {
      int64_t t = surf.idx(uc, vr);
      if (!surf.visible[size_t(t)]) continue;
      const real* fhat = &surf.feat[t * d];
      const real* alpha = &alpha_surface[t * b];
      for (int bi = 0; bi < b; ++bi) {
        real* th = &bank.theta[bank.texel_offset(bi, uc, vr)];
        real s = 0;
        for (int c = 0; c < d; ++c) {
          th[c] = mu * th[c] + (1 - mu) * alpha[bi] * fhat[c];
          s += th[c] * th[c];
        }
        real inv = s > 0 ? 1 / std::sqrt(s) : 0;
        for (int c = 0; c < d; ++c) th[c] *= inv;
      }
    }
}

}  // namespace dmnt
