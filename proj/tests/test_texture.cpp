#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmnt/finite_diff.hpp"
#include "dmnt/texture_bank.hpp"

using namespace dmnt;

namespace {

NeuralTextureBank make_bank(int q, int d, int bins, uint64_t seed) {
  NeuralTextureBank b;
  b.q = q;
  b.d = d;
  b.bins = make_viewing_bins(bins);
  Rng rng(seed);
  b.init(rng);
  return b;
}

SurfaceFeatureMap make_surf(int q, int d, Rng& rng, real vis_prob = real(0.6)) {
  SurfaceFeatureMap s;
  s.q = q;
  s.d = d;
  s.feat = random_tensor({q, q, d}, rng);
  s.weight = Tensor({q, q});
  s.visible.resize(size_t(q) * q);
  for (auto& v : s.visible) v = uniform(rng) < vis_prob;
  return s;
}

real cosine(const real* a, const real* b, int d) {
  real ab = 0, aa = 0, bb = 0;
  for (int c = 0; c < d; ++c) { ab += a[c] * b[c]; aa += a[c] * a[c]; bb += b[c] * b[c]; }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("viewing coefficients: one bin is always certain") {
  ViewingBinSet bins = make_viewing_bins(1);
  auto a = viewing_coefficients({0, 0, 1}, {1, 0, 0}, bins, 5);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == doctest::Approx(1));
}

TEST_CASE("viewing coefficients match a hand-rolled softmax") {
  ViewingBinSet bins = make_viewing_bins(7);
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    Vec3 n = normalized({gaussian(rng), gaussian(rng), gaussian(rng)});
    Vec3 v = normalized({gaussian(rng), gaussian(rng), gaussian(rng)});
    real T = uniform(rng, 1, 8);
    auto a = viewing_coefficients(n, v, bins, T);
    real z = 0;
    std::vector<real> e(7);
    for (int b = 0; b < 7; ++b) {
      e[size_t(b)] = std::exp(T * dot(v, bins.rot[size_t(b)] * n));
      z += e[size_t(b)];
    }
    real s = 0;
    for (int b = 0; b < 7; ++b) {
      CHECK(std::abs(a[size_t(b)] - e[size_t(b)] / z) < 1e-12);
      s += a[size_t(b)];
    }
    CHECK(s == doctest::Approx(1).epsilon(1e-12));
  }
}

TEST_CASE("viewing coefficients: frontal view favors the identity bin") {
  ViewingBinSet bins = make_viewing_bins(7);
  Vec3 n = {0, 0, 1};
  auto a = viewing_coefficients(n, n, bins, 5);
  for (int b = 1; b < 7; ++b) CHECK(a[0] > a[size_t(b)]);
}

TEST_CASE("bilinear sampling returns texel values at texel centers") {
  NeuralTextureBank b = make_bank(8, 3, 2, 5);
  for (int bin = 0; bin < 2; ++bin)
    for (int vr = 0; vr < 8; ++vr)
      for (int uc = 0; uc < 8; ++uc) {
        real out[3];
        b.sample(bin, (real(uc) + real(0.5)) / 8, (real(vr) + real(0.5)) / 8, out);
        const real* want = &b.theta[b.texel_offset(bin, uc, vr)];
        for (int c = 0; c < 3; ++c) CHECK(out[c] == doctest::Approx(want[c]).epsilon(1e-12));
      }
}

TEST_CASE("sampling wraps in u and clamps in v") {
  NeuralTextureBank b = make_bank(8, 2, 1, 7);
  real a0[2], a1[2];
  b.sample(0, real(0.0625), real(0.5), a0);   // u at the first texel center
  b.sample(0, real(1.0625), real(0.5), a1);   // one full wrap later
  for (int c = 0; c < 2; ++c) CHECK(a0[c] == doctest::Approx(a1[c]).epsilon(1e-12));
  b.sample(0, real(0.3), real(-2), a0);
  b.sample(0, real(0.3), 0, a1);
  for (int c = 0; c < 2; ++c) CHECK(a0[c] == doctest::Approx(a1[c]).epsilon(1e-12));
}

TEST_CASE("sample_vjp matches finite differences away from clamps") {
  NeuralTextureBank b = make_bank(16, 4, 3, 9);
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    int bin = uniform_int(rng, 0, 2);
    real u = uniform(rng, real(0.05), real(0.95));
    real v = uniform(rng, real(0.1), real(0.9));
    // stay away from texel-center kinks of the bilinear interpolant
    real fu = u * 16 - real(0.5), fv = v * 16 - real(0.5);
    if (std::abs(fu - std::round(fu)) < real(0.05) ||
        std::abs(fv - std::round(fv)) < real(0.05))
      continue;
    real g[4];
    for (auto& x : g) x = gaussian(rng);
    real gu = 0, gv = 0;
    b.sample_vjp(bin, u, v, g, gu, gv);
    real h = real(1e-7), s0[4], s1[4];
    auto val = [&](real uu, real vv) {
      real out[4], s = 0;
      b.sample(bin, uu, vv, out);
      for (int c = 0; c < 4; ++c) s += g[c] * out[c];
      return s;
    };
    (void)s0; (void)s1;
    CHECK(gu == doctest::Approx((val(u + h, v) - val(u - h, v)) / (2 * h)).epsilon(1e-4));
    CHECK(gv == doctest::Approx((val(u, v + h) - val(u, v - h)) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("gaussian log-likelihood anchors") {
  int d = 6;
  std::vector<real> f(size_t(d), 0), t(size_t(d), 0);
  f[0] = 1;
  t[0] = 1;
  real sigma = real(0.8);
  CHECK(gaussian_loglik(f.data(), t.data(), d, sigma) ==
        doctest::Approx(-std::log(sigma * std::sqrt(2 * kPi))));
  // orthogonal unit vectors: |f - t|^2 = 2, exponent -1/sigma^2
  t[0] = 0;
  t[1] = 1;
  CHECK(gaussian_loglik(f.data(), t.data(), d, sigma) ==
        doctest::Approx(-std::log(sigma * std::sqrt(2 * kPi)) - 1 / (sigma * sigma)));
}

TEST_CASE("foreground likelihood equals the naive mixture") {
  Rng rng(13);
  int d = 8, b = 5;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({d}, rng);
    std::vector<Tensor> theta;
    std::vector<const real*> ptrs;
    for (int i = 0; i < b; ++i) theta.push_back(random_tensor({d}, rng));
    for (auto& t : theta) ptrs.push_back(t.v.data());
    std::vector<real> alpha(size_t(b), 0);
    real z = 0;
    for (auto& a : alpha) { a = uniform(rng, real(0.01), 1); z += a; }
    for (auto& a : alpha) a /= z;
    real sigma = uniform(rng, real(0.5), 2);
    real got = foreground_loglik(f.v.data(), alpha.data(), ptrs, d, sigma);
    real mix = 0;
    for (int i = 0; i < b; ++i)
      mix += alpha[size_t(i)] * std::exp(gaussian_loglik(f.v.data(), ptrs[size_t(i)], d, sigma));
    CHECK(std::abs(got - std::log(mix)) < 1e-12);
  }
}

TEST_CASE("background likelihood is the exhaustive max") {
  Rng rng(17);
  BackgroundBank bank(6, 32);
  for (int i = 0; i < 20; ++i) {
    Tensor f = random_tensor({6}, rng);
    bank.push(f.v.data());
  }
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({6}, rng);
    real got = background_loglik(f.v.data(), bank, real(1.3));
    real want = -std::numeric_limits<real>::max();
    for (int i = 0; i < bank.size; ++i)
      want = std::max(want, gaussian_loglik(f.v.data(), &bank.feats.v[size_t(i) * 6], 6, real(1.3)));
    CHECK(got == doctest::Approx(want));
    CHECK(bank.best_similarity(f.v.data()) ==
          doctest::Approx([&] {
            real b = -std::numeric_limits<real>::max();
            for (int i = 0; i < bank.size; ++i) {
              real s = 0;
              for (int c = 0; c < 6; ++c) s += f[c] * bank.feats.at(i, c);
              b = std::max(b, s);
            }
            return b;
          }()));
  }
}

TEST_CASE("object likelihood is additive over observations") {
  Rng rng(19);
  NeuralTextureBank bank = make_bank(8, 4, 3, 21);
  BackgroundBank back(4, 16);
  for (int i = 0; i < 8; ++i) {
    Tensor f = random_tensor({4}, rng);
    back.push(f.v.data());
  }
  std::vector<Tensor> feats, alphas;
  for (int i = 0; i < 6; ++i) {
    feats.push_back(random_tensor({4}, rng));
    Tensor a({3});
    real z = 0;
    for (auto& x : a.v) { x = uniform(rng, real(0.1), 1); z += x; }
    for (auto& x : a.v) x /= z;
    alphas.push_back(a);
  }
  std::vector<FgObservation> fg;
  std::vector<const real*> bg;
  real sum_parts = 0;
  for (int i = 0; i < 4; ++i) {
    FgObservation ob{feats[size_t(i)].v.data(),
                     {uniform(rng, real(0.1), real(0.9)), uniform(rng, real(0.1), real(0.9))},
                     alphas[size_t(i)].v.data()};
    fg.push_back(ob);
    sum_parts += object_loglik({ob}, {}, bank, back);
  }
  for (int i = 4; i < 6; ++i) {
    bg.push_back(feats[size_t(i)].v.data());
    sum_parts += object_loglik({}, {feats[size_t(i)].v.data()}, bank, back);
  }
  CHECK(object_loglik(fg, bg, bank, back) == doctest::Approx(sum_parts).epsilon(1e-12));
}

TEST_CASE("momentum update: mu=1 is bitwise no-op, invisible texels untouched") {
  NeuralTextureBank bank = make_bank(8, 4, 3, 23);
  Rng rng(29);
  SurfaceFeatureMap surf = make_surf(8, 4, rng);
  Tensor alpha = random_tensor({8, 8, 3}, rng, real(0.1), 1);
  Tensor before = bank.theta;
  momentum_update(bank, surf, alpha, 1);
  CHECK(bank.theta.v == before.v);

  momentum_update(bank, surf, alpha, real(0.9));
  for (int vr = 0; vr < 8; ++vr)
    for (int uc = 0; uc < 8; ++uc) {
      if (surf.visible[size_t(surf.idx(uc, vr))]) continue;
      for (int b = 0; b < 3; ++b) {
        int64_t o = bank.texel_offset(b, uc, vr);
        for (int c = 0; c < 4; ++c) CHECK(bank.theta[o + c] == before[o + c]);
      }
    }
}

TEST_CASE("momentum update: mu=0 replaces with the normalized weighted feature") {
  NeuralTextureBank bank = make_bank(4, 3, 2, 31);
  Rng rng(37);
  SurfaceFeatureMap surf = make_surf(4, 3, rng, 1);
  Tensor alpha = random_tensor({4, 4, 2}, rng, real(0.2), 1);
  momentum_update(bank, surf, alpha, 0);
  for (int vr = 0; vr < 4; ++vr)
    for (int uc = 0; uc < 4; ++uc) {
      int64_t t = surf.idx(uc, vr);
      for (int b = 0; b < 2; ++b) {
        real want[3], s = 0;
        for (int c = 0; c < 3; ++c) {
          want[c] = alpha[t * 2 + b] * surf.feat[t * 3 + c];
          s += want[c] * want[c];
        }
        for (int c = 0; c < 3; ++c)
          CHECK(bank.theta[bank.texel_offset(b, uc, vr) + c] ==
                doctest::Approx(want[c] / std::sqrt(s)).epsilon(1e-9));
      }
    }
}

TEST_CASE("repeated momentum updates converge toward the observed feature") {
  NeuralTextureBank bank = make_bank(4, 6, 1, 41);
  Rng rng(43);
  SurfaceFeatureMap surf = make_surf(4, 6, rng, 1);
  Tensor alpha({4, 4, 1});
  alpha.fill(1);
  int64_t t = surf.idx(1, 2);
  real prev = cosine(&bank.theta[bank.texel_offset(0, 1, 2)], &surf.feat[t * 6], 6);
  for (int it = 0; it < 60; ++it) {
    momentum_update(bank, surf, alpha, real(0.9));
    real cur = cosine(&bank.theta[bank.texel_offset(0, 1, 2)], &surf.feat[t * 6], 6);
    CHECK(cur >= prev - 1e-12);
    prev = cur;
  }
  CHECK(prev > real(0.99));
}

TEST_CASE("background bank: FIFO eviction and unit norms") {
  BackgroundBank bank(3, 4);
  auto push_id = [&](real id) {
    real f[3] = {id, 1, 0};
    bank.push(f);
  };
  for (int i = 1; i <= 6; ++i) push_id(real(i));
  CHECK(bank.size == 4);
  // entries 1 and 2 were evicted; slots now hold 5, 6, 3, 4 (cursor wrapped)
  std::vector<real> ids;
  for (int i = 0; i < bank.size; ++i)
    ids.push_back(bank.feats.at(i, 0) / bank.feats.at(i, 1));
  CHECK(ids[0] == doctest::Approx(5));
  CHECK(ids[1] == doctest::Approx(6));
  CHECK(ids[2] == doctest::Approx(3));
  CHECK(ids[3] == doctest::Approx(4));

  Rng rng(47);
  BackgroundBank big(8, 64);
  for (int i = 0; i < 1000; ++i) {
    Tensor f = random_tensor({8}, rng, -3, 3);
    big.push(f.v.data());
  }
  CHECK(big.size == 64);
  for (int i = 0; i < big.size; ++i) {
    real s = 0;
    for (int c = 0; c < 8; ++c) s += big.feats.at(i, c) * big.feats.at(i, c);
    CHECK(s == doctest::Approx(1).epsilon(1e-6));
  }
}

TEST_CASE("bank init produces unit texels in every bin") {
  NeuralTextureBank bank = make_bank(8, 16, 7, 51);
  int64_t n = bank.theta.size() / bank.d;
  for (int64_t t = 0; t < n; ++t) {
    real s = 0;
    for (int c = 0; c < bank.d; ++c) s += bank.theta[t * bank.d + c] * bank.theta[t * bank.d + c];
    CHECK(s == doctest::Approx(1).epsilon(1e-9));
  }
}
