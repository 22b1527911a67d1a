#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape owns a growing list of nodes; every op appends a node whose inputs
// have strictly smaller ids, so the graph is acyclic by construction and the
// reverse creation order is a reverse topological order. backward() visits
// each node exactly once in that order, which makes adjoints deterministic.

#include <functional>

#include "dmnt/tensor.hpp"

namespace dmnt {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, allocated before backward
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;  // accumulate into parents' grads
  };

  std::vector<Node> nodes;

  const Tensor& val(Var v) const { return nodes[size_t(v.id)].value; }
  Tensor& grad(Var v) { return nodes[size_t(v.id)].grad; }
  real scalar(Var v) const { return nodes[size_t(v.id)].value[0]; }

  Var leaf(Tensor t) {
    Node n;
    n.value = std::move(t);
    nodes.push_back(std::move(n));
    return {this, int(nodes.size()) - 1};
  }

  Var make(Tensor value, std::vector<int> parents,
           std::function<void(Tape&, int)> bw) {
    for (int p : parents)
      check(p >= 0 && p < int(nodes.size()), "tape: input node does not exist");
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(bw);
    nodes.push_back(std::move(n));
    return {this, int(nodes.size()) - 1};
  }

  // -------------------------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    check(A.same_shape(B), "add: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += B[i];
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] += g[i]; }
    });
  }

  Var sub(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    check(A.same_shape(B), "sub: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    check(A.same_shape(B), "mul: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      const Tensor &A = t.nodes[size_t(ia)].value, &B = t.nodes[size_t(ib)].value;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * B[i];
        gb[i] += g[i] * A[i];
      }
    });
  }

  Var scale(Var a, real c) {
    Tensor out = val(a);
    for (auto& x : out.v) x *= c;
    int ia = a.id;
    return make(std::move(out), {ia}, [ia, c](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }

  Var matmul(Var a, Var b) {  // (n x k) * (k x m)
    const Tensor &A = val(a), &B = val(b);
    check(A.shape.size() == 2 && B.shape.size() == 2 && A.cols() == B.rows(),
          "matmul: shape mismatch");
    int n = A.rows(), k = A.cols(), m = B.cols();
    Tensor out({n, m});
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < k; ++l) {
        real av = A.at(i, l);
        if (av == 0) continue;
        for (int j = 0; j < m; ++j) out.at(i, j) += av * B.at(l, j);
      }
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib, n, k, m](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      const Tensor &A = t.nodes[size_t(ia)].value, &B = t.nodes[size_t(ib)].value;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          real gv = g.at(i, j);
          if (gv == 0) continue;
          for (int l = 0; l < k; ++l) {
            ga.at(i, l) += gv * B.at(l, j);
            gb.at(l, j) += gv * A.at(i, l);
          }
        }
    });
  }

  Var add_rowvec(Var a, Var b) {  // (n x m) + (1 x m), broadcast over rows
    const Tensor &A = val(a), &B = val(b);
    check(A.shape.size() == 2 && B.size() == A.cols(), "add_rowvec: shape mismatch");
    Tensor out = A;
    int n = A.rows(), m = A.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out.at(i, j) += B[j];
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib, n, m](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          ga.at(i, j) += g.at(i, j);
          gb[j] += g.at(i, j);
        }
    });
  }

  Var mul_rowvec(Var a, Var b) {  // (n x m) * (1 x m), broadcast over rows
    const Tensor &A = val(a), &B = val(b);
    check(A.shape.size() == 2 && B.size() == A.cols(), "mul_rowvec: shape mismatch");
    Tensor out = A;
    int n = A.rows(), m = A.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out.at(i, j) *= B[j];
    int ia = a.id, ib = b.id;
    return make(std::move(out), {ia, ib}, [ia, ib, n, m](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      const Tensor &A = t.nodes[size_t(ia)].value, &B = t.nodes[size_t(ib)].value;
      Tensor &ga = t.nodes[size_t(ia)].grad, &gb = t.nodes[size_t(ib)].grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          ga.at(i, j) += g.at(i, j) * B[j];
          gb[j] += g.at(i, j) * A.at(i, j);
        }
    });
  }

  Var tanh_(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = std::tanh(x);
    int ia = a.id;
    return make(std::move(out), {ia}, [ia](Tape& t, int self) {
      const Tensor &g = t.nodes[size_t(self)].grad, &y = t.nodes[size_t(self)].value;
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1 - y[i] * y[i]);
    });
  }

  Var exp_(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = std::exp(x);
    int ia = a.id;
    return make(std::move(out), {ia}, [ia](Tape& t, int self) {
      const Tensor &g = t.nodes[size_t(self)].grad, &y = t.nodes[size_t(self)].value;
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
  }

  Var relu(Var a) {
    Tensor out = val(a);
    for (auto& x : out.v) x = x > 0 ? x : 0;
    int ia = a.id;
    return make(std::move(out), {ia}, [ia](Tape& t, int self) {
      const Tensor& g = t.nodes[size_t(self)].grad;
      const Tensor& x = t.nodes[size_t(ia)].value;
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0 ? g[i] : 0;
    });
  }

  Var sum(Var a) {
    real s = 0;
    for (real x : val(a).v) s += x;
    int ia = a.id;
    return make(Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
      real g = t.nodes[size_t(self)].grad[0];
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }

  Var mean(Var a) { return scale(sum(a), real(1) / real(val(a).size())); }

  Var dot(Var a, Var b) { return sum(mul(a, b)); }

  // Normalize each length-d group along the last dimension to unit L2 norm.
  Var last_dim_normalize(Var a, real eps = real(1e-12)) {
    const Tensor& A = val(a);
    check(!A.shape.empty(), "last_dim_normalize: empty shape");
    int d = A.shape.back();
    int64_t n = A.size() / d;
    Tensor out = A;
    std::vector<real> norms(size_t(n), 0);
    for (int64_t p = 0; p < n; ++p) {
      real s = 0;
      for (int c = 0; c < d; ++c) s += A[p * d + c] * A[p * d + c];
      real nv = std::sqrt(s) + eps;
      norms[size_t(p)] = nv;
      for (int c = 0; c < d; ++c) out[p * d + c] /= nv;
    }
    int ia = a.id;
    return make(std::move(out), {ia}, [ia, d, n, norms](Tape& t, int self) {
      const Tensor &g = t.nodes[size_t(self)].grad, &y = t.nodes[size_t(self)].value;
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int64_t p = 0; p < n; ++p) {
        real gy = 0;
        for (int c = 0; c < d; ++c) gy += g[p * d + c] * y[p * d + c];
        real inv = 1 / norms[size_t(p)];
        for (int c = 0; c < d; ++c)
          ga[p * d + c] += inv * (g[p * d + c] - gy * y[p * d + c]);
      }
    });
  }

  // Per-row softmax cross-entropy with the positive logit in column 0;
  // returns the mean over rows.
  Var xent_first(Var logits) {
    const Tensor& L = val(logits);
    check(L.shape.size() == 2, "xent_first: rank-2 input expected");
    int n = L.rows(), m = L.cols();
    Tensor probs({n, m});
    real loss = 0;
    for (int i = 0; i < n; ++i) {
      real mx = L.at(i, 0);
      for (int j = 1; j < m; ++j) mx = std::max(mx, L.at(i, j));
      real z = 0;
      for (int j = 0; j < m; ++j) z += std::exp(L.at(i, j) - mx);
      for (int j = 0; j < m; ++j) probs.at(i, j) = std::exp(L.at(i, j) - mx) / z;
      loss += -(L.at(i, 0) - mx - std::log(z));
    }
    loss /= real(n);
    int ia = logits.id;
    return make(Tensor::scalar(loss), {ia}, [ia, n, m, probs](Tape& t, int self) {
      real g = t.nodes[size_t(self)].grad[0] / real(n);
      Tensor& ga = t.nodes[size_t(ia)].grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          ga.at(i, j) += g * (probs.at(i, j) - (j == 0 ? 1 : 0));
    });
  }

  // -------------------------------------------------------------------------

  // Seeds `root` (must be scalar) with adjoint 1 and propagates in reverse
  // creation order. Leaves unreachable from root keep zero adjoints.
  void backward(Var root) {
    check(val(root).size() == 1, "backward: root must be scalar");
    for (auto& n : nodes) {
      n.grad = Tensor(n.value.shape);
    }
    nodes[size_t(root.id)].grad[0] = 1;
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes[size_t(i)];
      if (n.backward) n.backward(*this, i);
    }
  }
};

// Convenience operators.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }

}  // namespace dmnt
