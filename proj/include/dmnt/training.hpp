#pragma once

// Contrastive EM training: positive/negative samplers over the rendered
// surface, the single cross-entropy loss that realizes the four contrastive
// terms, and the per-sample schedule (texture momentum update, background
// push, extractor gradient step). Banks are stop-gradient: only the
// extractor is trained by backprop.

#include "dmnt/extractor.hpp"
#include "dmnt/rasterizer.hpp"
#include "dmnt/shape_fit.hpp"
#include "dmnt/texture_bank.hpp"
#include "dmnt/transfer.hpp"

namespace dmnt {

struct TrainSample {
  Tensor image;  // {H, W, 3}
  int class_id = 0;
  CameraPose pose;
  int latent = 0;  // ground-truth exemplar index (one-hot z)
  bool occluder_free = true;
};

struct SamplerConfig {
  int positives = 1000;
  int negatives = 2000;  // per-sample object negatives, spread over positives
  real tau = real(0.1);  // UV-space exclusion radius around each positive
  int class_negatives = 512;  // per other class
  int background_negatives = 256;
};

// UV distance with azimuthal wrap in u.
inline real uv_distance(std::array<real, 2> a, std::array<real, 2> b) {
  real du = std::abs(a[0] - b[0]);
  du = std::min(du, 1 - du);
  real dv = a[1] - b[1];
  return std::sqrt(du * du + dv * dv);
}

struct SampledPairs {
  std::vector<int64_t> positives;               // pixel indices into the grid
  std::vector<std::vector<int64_t>> negatives;  // per positive
  bool any_negatives = false;
};

// Positives uniform over visible (on-object) pixels with replacement;
// negatives uniform over visible pixels farther than tau in UV from the
// paired positive.
inline SampledPairs sample_positives_negatives(const UvGrid& grid,
                                               const SamplerConfig& cfg, Rng& rng) {
  std::vector<int64_t> visible;
  for (int64_t i = 0; i < int64_t(grid.on_object.size()); ++i)
    if (grid.on_object[size_t(i)]) visible.push_back(i);
  check(!visible.empty(), "sample_positives_negatives: no visible pixels");

  SampledPairs out;
  int per_pos = std::max(1, cfg.negatives / std::max(1, cfg.positives));
  for (int p = 0; p < cfg.positives; ++p) {
    int64_t pos = visible[size_t(uniform_int(rng, 0, int(visible.size()) - 1))];
    out.positives.push_back(pos);
    std::vector<int64_t> negs;
    int attempts = 0, limit = 20 * per_pos + 100;
    while (int(negs.size()) < per_pos && attempts++ < limit) {
      int64_t cand = visible[size_t(uniform_int(rng, 0, int(visible.size()) - 1))];
      if (uv_distance(grid.uv[size_t(cand)], grid.uv[size_t(pos)]) > cfg.tau)
        negs.push_back(cand);
    }
    if (!negs.empty()) out.any_negatives = true;
    out.negatives.push_back(std::move(negs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generative alignment term: sum over visible texels of
// ||fhat - theta_combined||^2 / (2 sigma^2).
inline real loss_ml(const SurfaceFeatureMap& fhat, const NeuralTextureBank& bank,
                    const Tensor& alpha_surface /*{q, q, b}*/) {
  check(fhat.q == bank.q && fhat.d == bank.d, "loss_ml: resolution mismatch");
  int q = bank.q, d = bank.d, b = bank.bin_count();
  std::vector<real> theta(size_t(d), 0);
  real loss = 0;
  for (int vr = 0; vr < q; ++vr)
    for (int uc = 0; uc < q; ++uc) {
      int64_t t = fhat.idx(uc, vr);
      if (!fhat.visible[size_t(t)]) continue;
      bank.combined_at(uc, vr, &alpha_surface[t * b], theta.data());
      real d2 = 0;
      for (int c = 0; c < d; ++c) {
        real e = fhat.feat[t * d + c] - theta[size_t(c)];
        d2 += e * e;
      }
      loss += d2 / (2 * bank.sigma * bank.sigma);
    }
  return loss;
}

// ---------------------------------------------------------------------------
// Single cross-entropy over similarity logits, positive in slot 0, summed
// over positives. `sims[p]` = [f.theta+, f.negatives...].
inline real combined_contrastive_loss(const std::vector<std::vector<real>>& sims,
                                      real temp = real(0.07)) {
  check(temp > 0, "combined_contrastive_loss: temperature must be positive");
  real loss = 0;
  for (const auto& row : sims) {
    check(!row.empty(), "combined_contrastive_loss: empty similarity row");
    real mx = row[0];
    for (real s : row) mx = std::max(mx, s);
    mx /= temp;
    real z = 0;
    for (real s : row) z += std::exp(s / temp - mx);
    loss += -(row[0] / temp - mx - std::log(z));
  }
  return loss;
}

// Tape op: per-positive dot products of pixel features against a fixed
// direction matrix. dirs: {P, K, d}; value: {P, K}. Gradient flows only into
// the feature map (the directions are bank snapshots, stop-gradient).
inline Var contrastive_logits(Tape& t, Var F, const std::vector<int64_t>& pixels,
                              Tensor dirs) {
  const Tensor& Fv = t.val(F);
  check(Fv.shape.size() == 3 && dirs.shape.size() == 3, "contrastive_logits: bad ranks");
  int d = Fv.shape[2];
  check(dirs.shape[2] == d && int64_t(pixels.size()) == dirs.shape[0],
        "contrastive_logits: dimension mismatch");
  int P = dirs.shape[0], K = dirs.shape[1];
  Tensor out({P, K});
  for (int p = 0; p < P; ++p) {
    const real* f = &Fv[pixels[size_t(p)] * d];
    for (int k = 0; k < K; ++k) {
      const real* dir = &dirs[(int64_t(p) * K + k) * d];
      real s = 0;
      for (int c = 0; c < d; ++c) s += f[c] * dir[c];
      out.at(p, k) = s;
    }
  }
  int iF = F.id;
  return t.make(std::move(out), {iF},
                [iF, pixels, dirs = std::move(dirs), P, K, d](Tape& t, int self) {
    const Tensor& g = t.nodes[size_t(self)].grad;
    Tensor& gF = t.nodes[size_t(iF)].grad;
    for (int p = 0; p < P; ++p) {
      real* gf = &gF[pixels[size_t(p)] * d];
      for (int k = 0; k < K; ++k) {
        real gv = g.at(p, k);
        if (gv == 0) continue;
        const real* dir = &dirs[(int64_t(p) * K + k) * d];
        for (int c = 0; c < d; ++c) gf[c] += gv * dir[c];
      }
    }
  });
}

// ---------------------------------------------------------------------------

struct Model {
  FeatureExtractor extractor;
  std::vector<ShapeSpace> shapes;        // per class
  std::vector<NeuralTextureBank> banks;  // per class
  BackgroundBank background;
  real momentum = real(0.9);

  int class_count() const { return int(shapes.size()); }
};

inline Intrinsics feature_intrinsics(const Intrinsics& img, int stride) {
  check(img.width % stride == 0 && img.height % stride == 0,
        "feature_intrinsics: resolution not divisible by stride");
  return {img.width / stride, img.height / stride, img.focal / real(stride)};
}

struct TrainConfig {
  SamplerConfig sampler;
  real lr = real(1e-3);
  real temp = real(0.07);  // contrastive softmax temperature
  Intrinsics intrinsics;   // image-resolution intrinsics
};

struct TrainerState {
  std::vector<AdamState> opt;  // one per extractor weight tensor

  void init(const Model& m, real lr) {
    AdamConfig ac;
    ac.lr = lr;
    opt.clear();
    for (const auto& w : m.extractor.weights) opt.emplace_back(w.shape, ac);
  }
};

struct EpochMetrics {
  real mean_loss = 0;
  real mean_pos_sim = 0;
  real mean_neg_sim = 0;
  int skipped = 0;  // samples with no negatives available
};

// Snapshot of the per-positive direction matrix built from the pre-update
// banks; the contrastive gradient sees these fixed values.
namespace detail {

inline Tensor build_directions(const Model& model, int class_id, const FragmentMap& frag,
                               const Tensor& alpha_pixels, const SampledPairs& pairs,
                               const TrainConfig& cfg, Rng& rng, int* K_out) {
  const NeuralTextureBank& bank = model.banks[size_t(class_id)];
  int d = bank.d, b = bank.bin_count();
  int P = int(pairs.positives.size());
  int per_pos = 0;
  for (auto& n : pairs.negatives) per_pos = std::max(per_pos, int(n.size()));
  int n_class = 0;
  for (int c = 0; c < model.class_count(); ++c)
    if (c != class_id) n_class += cfg.sampler.class_negatives;
  int n_back = model.background.size > 0
                   ? std::min(cfg.sampler.background_negatives, model.background.size)
                   : 0;
  int K = 1 + per_pos + n_class + n_back;
  *K_out = K;

  // shared tail: class negatives and background negatives (one draw per step)
  Tensor tail({n_class + n_back, d});
  int row = 0;
  for (int c = 0; c < model.class_count(); ++c) {
    if (c == class_id) continue;
    const NeuralTextureBank& other = model.banks[size_t(c)];
    for (int i = 0; i < cfg.sampler.class_negatives; ++i, ++row) {
      int bi = uniform_int(rng, 0, other.bin_count() - 1);
      int uc = uniform_int(rng, 0, other.q - 1);
      int vr = uniform_int(rng, 0, other.q - 1);
      const real* th = &other.theta[other.texel_offset(bi, uc, vr)];
      for (int ch = 0; ch < d; ++ch) tail.at(row, ch) = th[ch];
    }
  }
  for (int i = 0; i < n_back; ++i, ++row) {
    int e = uniform_int(rng, 0, model.background.size - 1);
    for (int ch = 0; ch < d; ++ch)
      tail.at(row, ch) = model.background.feats.at(e, ch);
  }

  Tensor dirs({P, K, d});
  std::vector<real> theta(size_t(d), 0);
  auto combined_at_pixel = [&](int64_t px, real* out) {
    real u = frag.uv[size_t(px)][0], v = frag.uv[size_t(px)][1];
    const real* alpha = &alpha_pixels[px * b];
    for (int c = 0; c < d; ++c) out[c] = 0;
    std::vector<real> smp(size_t(d), 0);
    for (int bi = 0; bi < b; ++bi) {
      bank.sample(bi, u, v, smp.data());
      for (int c = 0; c < d; ++c) out[c] += alpha[bi] * smp[size_t(c)];
    }
  };
  for (int p = 0; p < P; ++p) {
    real* base = &dirs[(int64_t(p) * K) * d];
    combined_at_pixel(pairs.positives[size_t(p)], base);  // slot 0
    const auto& negs = pairs.negatives[size_t(p)];
    for (int j = 0; j < per_pos; ++j) {
      real* slot = base + int64_t(1 + j) * d;
      if (j < int(negs.size())) {
        combined_at_pixel(negs[size_t(j)], theta.data());
        std::copy(theta.begin(), theta.end(), slot);
      } else {
        std::fill(slot, slot + d, real(0));  // padded: zero similarity
      }
    }
    real* tail_slot = base + int64_t(1 + per_pos) * d;
    std::copy(tail.v.begin(), tail.v.end(), tail_slot);
  }
  return dirs;
}

}  // namespace detail

namespace detail {

// Only clearly-background pixels feed the bank: a feature pixel adjacent to
// the projected object sees mostly object through its receptive field, and
// storing it would let the background bank shadow the object itself.
inline void push_clear_background(Model& model, const UvGrid& grid, const Tensor& F) {
  int d = model.background.d;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x) {
      bool clear = true;
      for (int dy = -1; dy <= 1 && clear; ++dy)
        for (int dx = -1; dx <= 1 && clear; ++dx) {
          int nx = std::clamp(x + dx, 0, grid.width - 1);
          int ny = std::clamp(y + dy, 0, grid.height - 1);
          clear = !grid.on_object[size_t(grid.idx(nx, ny))];
        }
      if (clear) model.background.push(&F[grid.idx(x, y) * d]);
    }
}

}  // namespace detail

// One pass over the dataset; returns epoch metrics. Texture and background
// banks are updated by momentum/FIFO from the pre-step features; the
// extractor is updated by Adam on the contrastive loss computed against the
// pre-update banks, so the two updates are order-independent.
inline EpochMetrics train_epoch(const std::vector<TrainSample>& samples, Model& model,
                                TrainerState& trainer, const TrainConfig& cfg, Rng& rng) {
  check(!samples.empty(), "train_epoch: empty dataset");
  Intrinsics fin = feature_intrinsics(cfg.intrinsics, model.extractor.cfg.stride);

  EpochMetrics em;
  int64_t n_pos_total = 0, n_neg_total = 0;
  real pos_sim_sum = 0, neg_sim_sum = 0;
  int counted = 0;

  for (size_t si = 0; si < samples.size(); ++si) {
    const TrainSample& s = samples[si];
    check(s.class_id >= 0 && s.class_id < model.class_count(), "train_epoch: bad class id");
    NeuralTextureBank& bank = model.banks[size_t(s.class_id)];

    Tape tape;
    std::vector<Var> wv;
    Var Fv = model.extractor.lift(tape, hwc_to_chw(s.image), &wv);
    const Tensor& F = tape.val(Fv);

    Mesh mesh = model.shapes[size_t(s.class_id)].deform_one_hot(s.latent);
    VertexNormals vn = vertex_normals(mesh);
    FragmentMap frag = rasterize(mesh, s.pose, fin);
    if (frag.covered_count() == 0) { ++em.skipped; continue; }
    UvGrid grid = frag.uv_grid();

    // Occluded samples only expose the background bank to the occluder
    // appearance: the occluder hides an unknown part of the surface, so
    // neither the textures nor the contrastive pairs can trust the pixels.
    if (!s.occluder_free) {
      detail::push_clear_background(model, grid, F);
      ++em.skipped;
      continue;
    }

    Tensor alpha_px = alpha_field(frag, mesh, vn, s.pose, bank.bins, bank.temp);
    SampledPairs pairs = sample_positives_negatives(grid, cfg.sampler, rng);
    if (!pairs.any_negatives) { ++em.skipped; continue; }

    int K = 0;
    Tensor dirs = detail::build_directions(model, s.class_id, frag, alpha_px, pairs,
                                           cfg, rng, &K);
    Var logits = contrastive_logits(tape, Fv, pairs.positives, dirs);
    Var loss = tape.scale(tape.xent_first(tape.scale(logits, 1 / cfg.temp)),
                          real(pairs.positives.size()));
    real loss_v = tape.scalar(loss);
    check(is_finite(loss_v),
          "train_epoch: non-finite loss at sample " + std::to_string(si));

    {  // similarity metrics from the raw logits
      const Tensor& L = tape.val(logits);
      for (int p = 0; p < L.rows(); ++p) {
        pos_sim_sum += L.at(p, 0);
        ++n_pos_total;
        for (int k = 1; k < L.cols(); ++k) { neg_sim_sum += L.at(p, k); ++n_neg_total; }
      }
    }

    // bank updates from pre-step features
    TransferResult tr = transfer_forward(grid, F, bank.q);
    Tensor alpha_surf = alpha_field_surface(mesh, vn, s.pose, bank.bins, bank.temp, bank.q);
    momentum_update(bank, tr.surf, alpha_surf, model.momentum);
    detail::push_clear_background(model, grid, F);

    // extractor step against the pre-update banks
    tape.backward(loss);
    for (size_t w = 0; w < model.extractor.weights.size(); ++w)
      adam_step(trainer.opt[w], model.extractor.weights[w], tape.grad(wv[w]));

    em.mean_loss += loss_v / real(std::max<size_t>(1, pairs.positives.size()));
    ++counted;
  }

  if (counted > 0) em.mean_loss /= real(counted);
  if (n_pos_total > 0) em.mean_pos_sim = pos_sim_sum / real(n_pos_total);
  if (n_neg_total > 0) em.mean_neg_sim = neg_sim_sum / real(n_neg_total);
  return em;
}

}  // namespace dmnt
