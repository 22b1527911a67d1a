#pragma once

// Latent-conditioned deformation field and shape-space fitting.
//
// A deformed mesh is  s * (v + psi(v, z))  per template vertex v, where psi
// is a small MLP over [v | z] whose displacement output is bounded by a tanh
// so early fitting steps cannot blow the mesh up.

#include "dmnt/adam.hpp"
#include "dmnt/distance.hpp"
#include "dmnt/mesh.hpp"
#include "dmnt/tape.hpp"

namespace dmnt {

struct DeformationField {
  int latent_dim = 1;
  std::vector<int> hidden = {128, 128, 128};
  real max_disp = 1;             // tanh output scale, in template-radius units
  std::vector<Tensor> W, b;      // per layer, W[l]: in x out

  void init(Rng& rng) {
    W.clear();
    b.clear();
    std::vector<int> dims;
    dims.push_back(3 + latent_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(3);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      Tensor w({dims[l], dims[l + 1]});
      bool last = l + 2 == dims.size();
      if (!last) {
        real s = std::sqrt(real(1) / real(dims[l]));
        for (auto& x : w.v) x = gaussian(rng, 0, s);
      }
      // last layer starts at zero so the field is the identity initially
      W.push_back(std::move(w));
      b.push_back(Tensor({1, dims[l + 1]}));
    }
  }

  int layer_count() const { return int(W.size()); }

  // Build [v | z] input rows for the given template vertices.
  Tensor input_matrix(const std::vector<Vec3>& verts, const std::vector<real>& z) const {
    check(int(z.size()) == latent_dim, "deformation field: latent size mismatch");
    int n = int(verts.size());
    Tensor in({n, 3 + latent_dim});
    for (int i = 0; i < n; ++i) {
      in.at(i, 0) = verts[size_t(i)].x;
      in.at(i, 1) = verts[size_t(i)].y;
      in.at(i, 2) = verts[size_t(i)].z;
      for (int k = 0; k < latent_dim; ++k) in.at(i, 3 + k) = z[size_t(k)];
    }
    return in;
  }

  struct TapeVars {
    std::vector<Var> W, b;
  };

  TapeVars lift(Tape& t) const {
    TapeVars v;
    for (auto& w : W) v.W.push_back(t.leaf(w));
    for (auto& bb : b) v.b.push_back(t.leaf(bb));
    return v;
  }

  Var forward(Tape& t, const TapeVars& p, Var input) const {
    Var x = input;
    for (int l = 0; l < layer_count(); ++l) {
      x = t.add_rowvec(t.matmul(x, p.W[size_t(l)]), p.b[size_t(l)]);
      x = t.tanh_(x);  // bounded displacement on the last layer as well
    }
    return t.scale(x, max_disp);
  }

  // Plain (tape-free) evaluation.
  std::vector<Vec3> displacements(const std::vector<Vec3>& verts,
                                  const std::vector<real>& z) const {
    Tape t;
    auto p = lift(t);
    Var out = forward(t, p, t.leaf(input_matrix(verts, z)));
    const Tensor& o = t.val(out);
    check(o.all_finite(), "deformation field produced non-finite output");
    std::vector<Vec3> d(verts.size());
    for (int i = 0; i < o.rows(); ++i) d[size_t(i)] = {o.at(i, 0), o.at(i, 1), o.at(i, 2)};
    return d;
  }
};

// Per-class shape space: template + field + log-scale.
struct ShapeSpace {
  Mesh tmpl;
  DeformationField field;
  Tensor log_s{{1, 3}};  // log of [s_h, s_w, s_d]

  Vec3 scale() const {
    return {std::exp(log_s[0]), std::exp(log_s[1]), std::exp(log_s[2])};
  }

  std::vector<real> one_hot(int k) const {
    std::vector<real> z(size_t(field.latent_dim), 0);
    z[size_t(k)] = 1;
    return z;
  }

  Mesh deform(const std::vector<real>& z) const {
    auto disp = field.displacements(tmpl.vertices, z);
    Mesh out = tmpl;
    Vec3 s = scale();
    for (size_t i = 0; i < out.vertices.size(); ++i)
      out.vertices[i] = cwise(s, tmpl.vertices[i] + disp[i]);
    check([&] {
      for (auto& v : out.vertices)
        if (!(is_finite(v.x) && is_finite(v.y) && is_finite(v.z))) return false;
      return true;
    }(), "deform: non-finite vertices");
    return out;
  }

  Mesh deform_one_hot(int k) const { return deform(one_hot(k)); }
};

struct FitConfig {
  int steps = 400;
  real lr = real(0.01);
  real lambda_lap = real(0.3);
  real lambda_n = real(0.1);
  std::vector<int> hidden = {128, 128, 128};
  real max_disp = 1;
  uint64_t seed = 0;
};

struct FitResult {
  std::vector<real> loss_history;
};

// Recenter to the bounding-box center and rescale so the largest half-extent
// over the class is 1. The common scale factor is folded back into s after
// fitting.
inline real canonicalize_exemplars(std::vector<Mesh>& exemplars) {
  real max_ext = 0;
  for (auto& m : exemplars) {
    Vec3 lo = m.vertices.at(0), hi = lo;
    for (auto& v : m.vertices)
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], v[d]);
        hi[d] = std::max(hi[d], v[d]);
      }
    Vec3 c = real(0.5) * (lo + hi);
    for (auto& v : m.vertices) v -= c;
    for (int d = 0; d < 3; ++d) max_ext = std::max(max_ext, (hi[d] - lo[d]) / 2);
  }
  check(max_ext > 0, "canonicalize_exemplars: degenerate exemplar extent");
  for (auto& m : exemplars)
    for (auto& v : m.vertices) v = v / max_ext;
  return max_ext;
}

// Minimize  sum_k mesh_distance(deform(z_k), exemplar_k)
//           + lambda_lap * laplacian + lambda_n * normal_consistency
// over the field weights and the shared log-scale, with Adam.
inline ShapeSpace fit_shape_space(std::vector<Mesh> exemplars, const Mesh& tmpl,
                                  const FitConfig& cfg, FitResult* result = nullptr) {
  check(!exemplars.empty(), "fit_shape_space: need at least one exemplar");
  real class_scale = canonicalize_exemplars(exemplars);

  ShapeSpace ss;
  ss.tmpl = tmpl;
  ss.field.latent_dim = int(exemplars.size());
  ss.field.hidden = cfg.hidden;
  ss.field.max_disp = cfg.max_disp;
  Rng rng(cfg.seed);
  ss.field.init(rng);

  AdamConfig ac;
  ac.lr = cfg.lr;
  std::vector<AdamState> opt_w, opt_b;
  for (auto& w : ss.field.W) opt_w.emplace_back(w.shape, ac);
  for (auto& b : ss.field.b) opt_b.emplace_back(b.shape, ac);
  AdamState opt_s(ss.log_s.shape, ac);

  int n_verts = tmpl.vertex_count();

  for (int step = 0; step < cfg.steps; ++step) {
    real total = 0;
    std::vector<Tensor> gW(ss.field.W.size()), gB(ss.field.b.size());
    for (size_t l = 0; l < gW.size(); ++l) {
      gW[l] = Tensor(ss.field.W[l].shape);
      gB[l] = Tensor(ss.field.b[l].shape);
    }
    Tensor gS(ss.log_s.shape);

    for (int k = 0; k < int(exemplars.size()); ++k) {
      Tape t;
      auto p = ss.field.lift(t);
      Var log_s = t.leaf(ss.log_s);
      Var v0 = t.leaf(ss.field.input_matrix(tmpl.vertices, ss.one_hot(k)));
      Var disp = ss.field.forward(t, p, v0);
      // vertex positions: exp(log_s) row-broadcast times (v0_xyz + disp)
      Tensor v0xyz({n_verts, 3});
      for (int i = 0; i < n_verts; ++i)
        for (int d = 0; d < 3; ++d) v0xyz.at(i, d) = tmpl.vertices[size_t(i)][d];
      Var verts = t.mul_rowvec(t.add(t.leaf(v0xyz), disp), t.exp_(log_s));

      // data + regularizer terms with hand gradients, attached as one node
      Mesh cur = tmpl;
      const Tensor& vt = t.val(verts);
      for (int i = 0; i < n_verts; ++i)
        cur.vertices[size_t(i)] = {vt.at(i, 0), vt.at(i, 1), vt.at(i, 2)};

      std::vector<Vec3> g_data, g_lap, g_nrm;
      real d_data = mesh_distance_grad(cur, exemplars[size_t(k)], g_data);
      real d_lap = laplacian_loss(cur, &g_lap);
      real d_nrm = normal_consistency_loss(cur, &g_nrm);
      real loss_k = d_data + cfg.lambda_lap * d_lap + cfg.lambda_n * d_nrm;

      Tensor gverts({n_verts, 3});
      for (int i = 0; i < n_verts; ++i)
        for (int d = 0; d < 3; ++d)
          gverts.at(i, d) = g_data[size_t(i)][d] + cfg.lambda_lap * g_lap[size_t(i)][d] +
                            cfg.lambda_n * g_nrm[size_t(i)][d];

      int iv = verts.id;
      Var loss = t.make(Tensor::scalar(loss_k), {iv}, [iv, gverts](Tape& tp, int self) {
        real g = tp.nodes[size_t(self)].grad[0];
        Tensor& gv = tp.nodes[size_t(iv)].grad;
        for (int64_t i = 0; i < gv.size(); ++i) gv[i] += g * gverts[i];
      });

      check(is_finite(loss_k), "fit_shape_space: non-finite loss at step " +
                                   std::to_string(step) + ", exemplar " + std::to_string(k));
      total += loss_k;
      t.backward(loss);
      for (size_t l = 0; l < gW.size(); ++l) {
        const Tensor& gw = t.grad(p.W[l]);
        for (int64_t i = 0; i < gw.size(); ++i) gW[l][i] += gw[i];
        const Tensor& gb = t.grad(p.b[l]);
        for (int64_t i = 0; i < gb.size(); ++i) gB[l][i] += gb[i];
      }
      const Tensor& gs = t.grad(log_s);
      for (int64_t i = 0; i < gs.size(); ++i) gS[i] += gs[i];
    }

    if (result) result->loss_history.push_back(total);
    for (size_t l = 0; l < gW.size(); ++l) {
      adam_step(opt_w[l], ss.field.W[l], gW[l]);
      adam_step(opt_b[l], ss.field.b[l], gB[l]);
    }
    adam_step(opt_s, ss.log_s, gS);
  }

  // fold the canonicalization scale back into s
  for (int d = 0; d < 3; ++d) ss.log_s[d] += std::log(class_scale);
  return ss;
}

}  // namespace dmnt
