#pragma once

// Small convolutional feature extractor with stride-8 output and per-pixel
// unit normalization. Convolutions run in {C, H, W} layout; the final map is
// transposed to pixel-major {H, W, d} before normalization.

#include "dmnt/adam.hpp"
#include "dmnt/tape.hpp"

namespace dmnt {

// ---------------------------------------------------------------------------
// Tape ops for the conv stack.

// x: {Cin, H, W}, w: {Cout, Cin, k, k}, b: {Cout}; zero padding.
inline Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
  const Tensor &X = t.val(x), &W = t.val(w), &B = t.val(b);
  check(X.shape.size() == 3 && W.shape.size() == 4, "conv2d: bad ranks");
  int cin = X.shape[0], h = X.shape[1], wd = X.shape[2];
  int cout = W.shape[0], k = W.shape[2];
  check(W.shape[1] == cin && W.shape[3] == k, "conv2d: weight shape mismatch");
  check(B.size() == cout, "conv2d: bias shape mismatch");
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (wd + 2 * pad - k) / stride + 1;
  check(ho >= 1 && wo >= 1, "conv2d: output collapses");

  Tensor out({cout, ho, wo});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        real s = B[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= wd) continue;
              s += X[(int64_t(ci) * h + iy) * wd + ix] *
                   W[((int64_t(co) * cin + ci) * k + ky) * k + kx];
            }
          }
        out[(int64_t(co) * ho + oy) * wo + ox] = s;
      }

  int ix_ = x.id, iw = w.id, ib = b.id;
  return t.make(std::move(out), {ix_, iw, ib},
                [ix_, iw, ib, cin, h, wd, cout, k, ho, wo, stride, pad](Tape& t, int self) {
    const Tensor& g = t.nodes[size_t(self)].grad;
    const Tensor &X = t.nodes[size_t(ix_)].value, &W = t.nodes[size_t(iw)].value;
    Tensor &gx = t.nodes[size_t(ix_)].grad, &gw = t.nodes[size_t(iw)].grad,
           &gb = t.nodes[size_t(ib)].grad;
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          real gv = g[(int64_t(co) * ho + oy) * wo + ox];
          if (gv == 0) continue;
          gb[co] += gv;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                int64_t xi = (int64_t(ci) * h + iy) * wd + ix;
                int64_t wi = ((int64_t(co) * cin + ci) * k + ky) * k + kx;
                gx[xi] += gv * W[wi];
                gw[wi] += gv * X[xi];
              }
            }
        }
  });
}

// Group normalization over {C, H, W} with per-channel affine parameters.
inline Var group_norm(Tape& t, Var x, Var gamma, Var beta, int groups,
                      real eps = real(1e-5)) {
  const Tensor& X = t.val(x);
  check(X.shape.size() == 3, "group_norm: rank-3 input expected");
  int c = X.shape[0], h = X.shape[1], w = X.shape[2];
  check(c % groups == 0, "group_norm: channels not divisible by groups");
  check(t.val(gamma).size() == c && t.val(beta).size() == c, "group_norm: affine shape");
  int cg = c / groups;
  int64_t gn = int64_t(cg) * h * w;

  Tensor xhat({c, h, w});
  std::vector<real> mean(size_t(groups), 0), istd(size_t(groups), 0);
  for (int g = 0; g < groups; ++g) {
    const real* p = &X[int64_t(g) * gn];
    real mu = 0;
    for (int64_t i = 0; i < gn; ++i) mu += p[i];
    mu /= real(gn);
    real var = 0;
    for (int64_t i = 0; i < gn; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= real(gn);
    real is = 1 / std::sqrt(var + eps);
    mean[size_t(g)] = mu;
    istd[size_t(g)] = is;
    real* q = &xhat[int64_t(g) * gn];
    for (int64_t i = 0; i < gn; ++i) q[i] = (p[i] - mu) * is;
  }
  Tensor out = xhat;
  const Tensor &G = t.val(gamma), &B = t.val(beta);
  for (int ci = 0; ci < c; ++ci) {
    real* p = &out[int64_t(ci) * h * w];
    for (int64_t i = 0; i < int64_t(h) * w; ++i) p[i] = p[i] * G[ci] + B[ci];
  }

  int ix = x.id, ig = gamma.id, ib = beta.id;
  return t.make(std::move(out), {ix, ig, ib},
                [ix, ig, ib, c, h, w, groups, cg, gn, xhat, istd](Tape& t, int self) {
    const Tensor& g = t.nodes[size_t(self)].grad;
    const Tensor& G = t.nodes[size_t(ig)].value;
    Tensor &gx = t.nodes[size_t(ix)].grad, &gg = t.nodes[size_t(ig)].grad,
           &gb = t.nodes[size_t(ib)].grad;
    int64_t plane = int64_t(h) * w;
    for (int ci = 0; ci < c; ++ci)
      for (int64_t i = 0; i < plane; ++i) {
        int64_t o = int64_t(ci) * plane + i;
        gg[ci] += g[o] * xhat[o];
        gb[ci] += g[o];
      }
    for (int grp = 0; grp < groups; ++grp) {
      // dL/dxhat within the group, then the standard groupnorm backward
      real sum_gh = 0, sum_ghx = 0;
      for (int j = 0; j < cg; ++j) {
        int ci = grp * cg + j;
        for (int64_t i = 0; i < plane; ++i) {
          int64_t o = int64_t(ci) * plane + i;
          real gh = g[o] * G[ci];
          sum_gh += gh;
          sum_ghx += gh * xhat[o];
        }
      }
      real inv_n = 1 / real(gn);
      for (int j = 0; j < cg; ++j) {
        int ci = grp * cg + j;
        for (int64_t i = 0; i < plane; ++i) {
          int64_t o = int64_t(ci) * plane + i;
          real gh = g[o] * G[ci];
          gx[o] += istd[size_t(grp)] * (gh - inv_n * sum_gh - inv_n * xhat[o] * sum_ghx);
        }
      }
    }
  });
}

// Subtract the per-channel spatial mean over {C, H, W}. Without this the
// projection output shares one dominant direction across all pixels (bias plus
// nonnegative activations), and after per-pixel normalization every feature
// collapses into a narrow cone.
inline Var center_spatial(Tape& t, Var x) {
  const Tensor& X = t.val(x);
  check(X.shape.size() == 3, "center_spatial: rank-3 input expected");
  int c = X.shape[0], h = X.shape[1], w = X.shape[2];
  int64_t plane = int64_t(h) * w;
  Tensor out = X;
  for (int ci = 0; ci < c; ++ci) {
    real* p = &out[ci * plane];
    real mu = 0;
    for (int64_t i = 0; i < plane; ++i) mu += p[i];
    mu /= real(plane);
    for (int64_t i = 0; i < plane; ++i) p[i] -= mu;
  }
  int ix = x.id;
  return t.make(std::move(out), {ix}, [ix, c, plane](Tape& t, int self) {
    const Tensor& g = t.nodes[size_t(self)].grad;
    Tensor& gx = t.nodes[size_t(ix)].grad;
    for (int ci = 0; ci < c; ++ci) {
      const real* gp = &g[ci * plane];
      real mu = 0;
      for (int64_t i = 0; i < plane; ++i) mu += gp[i];
      mu /= real(plane);
      real* q = &gx[ci * plane];
      for (int64_t i = 0; i < plane; ++i) q[i] += gp[i] - mu;
    }
  });
}

// {C, H, W} -> {H, W, C}
inline Var chw_to_hwc(Tape& t, Var x) {
  const Tensor& X = t.val(x);
  check(X.shape.size() == 3, "chw_to_hwc: rank-3 input expected");
  int c = X.shape[0], h = X.shape[1], w = X.shape[2];
  Tensor out({h, w, c});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x2 = 0; x2 < w; ++x2)
        out[(int64_t(y) * w + x2) * c + ci] = X[(int64_t(ci) * h + y) * w + x2];
  int ix = x.id;
  return t.make(std::move(out), {ix}, [ix, c, h, w](Tape& t, int self) {
    const Tensor& g = t.nodes[size_t(self)].grad;
    Tensor& gx = t.nodes[size_t(ix)].grad;
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x2 = 0; x2 < w; ++x2)
          gx[(int64_t(ci) * h + y) * w + x2] += g[(int64_t(y) * w + x2) * c + ci];
  });
}

// ---------------------------------------------------------------------------

struct ExtractorConfig {
  int in_channels = 3;
  int hidden = 32;     // channels of the intermediate layers
  int d = 64;          // output feature dimension
  int groups = 4;
  int stride = 8;      // product of the layer strides below
};

// Five layers: three stride-2 3x3 convs, one stride-1 3x3 conv, one 1x1
// projection to d channels; group norm + ReLU between convs.
struct FeatureExtractor {
  ExtractorConfig cfg;
  std::vector<Tensor> weights;  // conv weights, biases, gn gammas/betas in order

  struct LayerSpec {
    int cin, cout, k, stride, pad;
    bool gn_relu;
  };

  std::vector<LayerSpec> layers() const {
    int c = cfg.hidden;
    return {{cfg.in_channels, c, 3, 2, 1, true},
            {c, c, 3, 2, 1, true},
            {c, c, 3, 2, 1, true},
            {c, c, 3, 1, 1, true},
            {c, cfg.d, 1, 1, 0, false}};
  }

  void init(Rng& rng) {
    weights.clear();
    for (const auto& L : layers()) {
      real s = std::sqrt(real(2) / real(L.cin * L.k * L.k));
      Tensor w({L.cout, L.cin, L.k, L.k});
      for (auto& x : w.v) x = gaussian(rng) * s;
      weights.push_back(std::move(w));
      weights.push_back(Tensor({L.cout}));  // bias
      if (L.gn_relu) {
        Tensor gamma({L.cout});
        gamma.fill(1);
        weights.push_back(std::move(gamma));
        weights.push_back(Tensor({L.cout}));  // beta
      }
    }
  }

  // Builds the graph on `tape`; returns the {H/s, W/s, d} unit-normalized map
  // and (optionally) the leaf Vars of all weights for gradient access.
  Var lift(Tape& tape, const Tensor& image_chw, std::vector<Var>* weight_vars = nullptr) const {
    check(image_chw.shape.size() == 3 && image_chw.shape[0] == cfg.in_channels,
          "extract: channel mismatch");
    check(image_chw.shape[1] % cfg.stride == 0 && image_chw.shape[2] % cfg.stride == 0,
          "extract: dimensions not divisible by stride");
    Var x = tape.leaf(image_chw);
    size_t wi = 0;
    for (const auto& L : layers()) {
      Var w = tape.leaf(weights[wi++]);
      Var b = tape.leaf(weights[wi++]);
      if (weight_vars) { weight_vars->push_back(w); weight_vars->push_back(b); }
      x = conv2d(tape, x, w, b, L.stride, L.pad);
      if (L.gn_relu) {
        Var gamma = tape.leaf(weights[wi++]);
        Var beta = tape.leaf(weights[wi++]);
        if (weight_vars) { weight_vars->push_back(gamma); weight_vars->push_back(beta); }
        x = group_norm(tape, x, gamma, beta, cfg.groups);
        x = tape.relu(x);
      }
    }
    check(wi == weights.size(), "extract: weight bookkeeping mismatch");
    return tape.last_dim_normalize(chw_to_hwc(tape, center_spatial(tape, x)));
  }

  Tensor extract(const Tensor& image_chw) const {
    Tape tape;
    return tape.val(lift(tape, image_chw));
  }
};

// Pack an {H, W, 3} image into conv layout {3, H, W}.
inline Tensor hwc_to_chw(const Tensor& img) {
  check(img.shape.size() == 3, "hwc_to_chw: rank-3 input expected");
  int h = img.shape[0], w = img.shape[1], c = img.shape[2];
  Tensor out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ci = 0; ci < c; ++ci)
        out[(int64_t(ci) * h + y) * w + x] = img[(int64_t(y) * w + x) * c + ci];
  return out;
}

}  // namespace dmnt
