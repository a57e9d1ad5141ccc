#pragma once

#include <cmath>
#include <stdexcept>

#include "hd/core/graph.hpp"

// Differentiable tensor ops. Forward computes the value eagerly; each op
// registers a backward closure that scatters into its parents' grad buffers.
// All loops are plain and sequential so results are bit-reproducible.

namespace hd {

namespace detail {

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

}  // namespace detail

// ---- elementwise binary ----

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return g.op(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    accumulate_grad(g, ai, go);
    accumulate_grad(g, bi, go);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return g.op(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    accumulate_grad(g, ai, go);
    if (g.node(bi).needs_grad) {
      Tensor<T>& gb = g.grad(bi);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return g.op(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    if (g.node(ai).needs_grad) {
      Tensor<T>& ga = g.grad(ai);
      const Tensor<T>& bv = g.value(bi);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.node(bi).needs_grad) {
      Tensor<T>& gb = g.grad(bi);
      const Tensor<T>& av = g.value(ai);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), b.value(), "div");
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= b.value()[i];
  return g.op(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& av = g.value(ai);
    const Tensor<T>& bv = g.value(bi);
    if (g.node(ai).needs_grad) {
      Tensor<T>& ga = g.grad(ai);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] / bv[i];
    }
    if (g.node(bi).needs_grad) {
      Tensor<T>& gb = g.grad(bi);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

// out = k*a + c, with compile-time constants k, c
template <class T>
Var<T> affine(Var<T> a, T k, T c) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = k * out[i] + c;
  return g.op(std::move(out), {a}, [ai = a.id(), k](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += k * go[i];
  });
}

template <class T>
Var<T> scale(Var<T> a, T k) { return affine(a, k, T(0)); }

// elementwise product with a constant tensor (e.g. a validity mask)
template <class T>
Var<T> mul_const(Var<T> a, const Tensor<T>& w) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), w, "mul_const");
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= w[i];
  return g.op(std::move(out), {a}, [ai = a.id(), w](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * w[i];
  });
}

// broadcast ops against a one-element Var
template <class T>
Var<T> mul_bscalar(Var<T> a, Var<T> s) {
  Graph<T>& g = *a.graph();
  if (s.value().numel() != 1) throw std::invalid_argument("mul_bscalar: s must be scalar");
  const T sv = s.value()[0];
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
  return g.op(std::move(out), {a, s}, [ai = a.id(), si = s.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    const T sv = g.value(si)[0];
    if (g.node(ai).needs_grad) {
      Tensor<T>& ga = g.grad(ai);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * sv;
    }
    if (g.node(si).needs_grad) {
      const Tensor<T>& av = g.value(ai);
      T acc = T(0);
      for (std::int64_t i = 0; i < go.numel(); ++i) acc += go[i] * av[i];
      g.grad(si)[0] += acc;
    }
  });
}

template <class T>
Var<T> div_bscalar(Var<T> a, Var<T> s) {
  Graph<T>& g = *a.graph();
  if (s.value().numel() != 1) throw std::invalid_argument("div_bscalar: s must be scalar");
  const T sv = s.value()[0];
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= sv;
  return g.op(std::move(out), {a, s}, [ai = a.id(), si = s.id()](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    const T sv = g.value(si)[0];
    if (g.node(ai).needs_grad) {
      Tensor<T>& ga = g.grad(ai);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] / sv;
    }
    if (g.node(si).needs_grad) {
      const Tensor<T>& av = g.value(ai);
      T acc = T(0);
      for (std::int64_t i = 0; i < go.numel(); ++i) acc += go[i] * av[i];
      g.grad(si)[0] -= acc / (sv * sv);
    }
  });
}

// ---- elementwise unary ----

namespace detail {

template <class T, class F, class DF>
Var<T> unary(Var<T> a, F f, DF df_from_x, const char*) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
  return g.op(std::move(out), {a}, [ai = a.id(), df_from_x](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& xv = g.value(ai);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * df_from_x(xv[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> relu(Var<T> a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); },
                       [](T x) { return x > T(0) ? T(1) : T(0); }, "relu");
}

// C1-smooth activation used throughout the nets (derivative continuous at 0)
template <class T>
Var<T> elu(Var<T> a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : std::expm1(x); },
                       [](T x) { return x > T(0) ? T(1) : std::exp(x); }, "elu");
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
  return g.op(std::move(out), {a}, [ai = a.id()](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& y = g.value(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * y[i] * (T(1) - y[i]);
  });
}

template <class T>
Var<T> exp_v(Var<T> a) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return g.op(std::move(out), {a}, [ai = a.id()](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& y = g.value(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * y[i];
  });
}

template <class T>
Var<T> log_v(Var<T> a) {
  return detail::unary(a, [](T x) { return std::log(x); },
                       [](T x) { return T(1) / x; }, "log");
}

template <class T>
Var<T> abs_v(Var<T> a) {
  return detail::unary(a, [](T x) { return std::abs(x); },
                       [](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); }, "abs");
}

template <class T>
Var<T> sqrt_v(Var<T> a) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
  return g.op(std::move(out), {a}, [ai = a.id()](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& y = g.value(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] / (T(2) * y[i]);
  });
}

template <class T>
Var<T> square(Var<T> a) { return mul(a, a); }

template <class T>
Var<T> reciprocal(Var<T> a) {
  return detail::unary(a, [](T x) { return T(1) / x; },
                       [](T x) { return T(-1) / (x * x); }, "reciprocal");
}

// ---- reductions ----

template <class T>
Var<T> sum(Var<T> a) {
  Graph<T>& g = *a.graph();
  T acc = T(0);
  for (std::int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
  Tensor<T> out({1}, acc);
  return g.op(std::move(out), {a}, [ai = a.id()](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const T go = g.grad(oi)[0];
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += go;
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  const std::int64_t n = a.value().numel();
  return scale(sum(a), T(1) / static_cast<T>(n));
}

// sum(a * w) for a constant weight tensor; used for masked reductions
template <class T>
Var<T> weighted_sum(Var<T> a, const Tensor<T>& w) {
  Graph<T>& g = *a.graph();
  detail::check_same_shape(a.value(), w, "weighted_sum");
  T acc = T(0);
  for (std::int64_t i = 0; i < w.numel(); ++i) acc += a.value()[i] * w[i];
  Tensor<T> out({1}, acc);
  return g.op(std::move(out), {a}, [ai = a.id(), w](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const T go = g.grad(oi)[0];
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += go * w[i];
  });
}

// ---- shape ----

template <class T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  Graph<T>& g = *a.graph();
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return g.op(std::move(out), {a}, [ai = a.id()](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& ga = g.grad(ai);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
}

// concatenate two {C,H,W} maps along channels
template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw std::invalid_argument("concat_channels: incompatible shapes " + av.shape_str() +
                                " vs " + bv.shape_str());
  Tensor<T> out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  return g.op(std::move(out), {a, b},
              [ai = a.id(), bi = b.id(), na = av.numel()](Graph<T>& g, int oi) {
                const Tensor<T>& go = g.grad(oi);
                if (g.node(ai).needs_grad) {
                  Tensor<T>& ga = g.grad(ai);
                  for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += go[i];
                }
                if (g.node(bi).needs_grad) {
                  Tensor<T>& gb = g.grad(bi);
                  for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += go[na + i];
                }
              });
}

// half-open sub-box of a rank-3 tensor
template <class T>
Var<T> slice3(Var<T> a, int c0, int c1, int y0, int y1, int x0, int x1) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  if (av.rank() != 3) throw std::invalid_argument("slice3: rank-3 input required");
  const int C = av.dim(0), H = av.dim(1), W = av.dim(2);
  if (c0 < 0 || y0 < 0 || x0 < 0 || c1 > C || y1 > H || x1 > W || c0 >= c1 || y0 >= y1 || x0 >= x1)
    throw std::invalid_argument("slice3: range out of bounds for " + av.shape_str());
  Tensor<T> out({c1 - c0, y1 - y0, x1 - x0});
  for (int c = c0; c < c1; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) out.at(c - c0, y - y0, x - x0) = av.at(c, y, x);
  return g.op(std::move(out), {a}, [ai = a.id(), c0, y0, x0](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& ga = g.grad(ai);
    for (int c = 0; c < go.dim(0); ++c)
      for (int y = 0; y < go.dim(1); ++y)
        for (int x = 0; x < go.dim(2); ++x) ga.at(c + c0, y + y0, x + x0) += go.at(c, y, x);
  });
}

// stack K vectors of equal length into a {K,C} matrix
template <class T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  Graph<T>& g = *rows[0].graph();
  const int C = static_cast<int>(rows[0].value().numel());
  Tensor<T> out({static_cast<int>(rows.size()), C});
  std::vector<int> ids;
  for (size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].value().numel() != C) throw std::invalid_argument("stack_rows: length mismatch");
    for (int c = 0; c < C; ++c) out.at(static_cast<int>(k), c) = rows[k].value()[c];
    ids.push_back(rows[k].id());
  }
  return g.op(std::move(out), rows, [ids, C](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (!g.node(ids[k]).needs_grad) continue;
      Tensor<T>& gr = g.grad(ids[k]);
      for (int c = 0; c < C; ++c) gr[c] += go.at(static_cast<int>(k), c);
    }
  });
}

// ---- linear algebra ----

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " vs " +
                                bv.shape_str());
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    T* orow = out.data() + static_cast<std::int64_t>(i) * n;
    const T* arow = av.data() + static_cast<std::int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const T aval = arow[l];
      const T* brow = bv.data() + static_cast<std::int64_t>(l) * n;
      for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
    }
  }
  return g.op(std::move(out), {a, b}, [ai = a.id(), bi = b.id(), m, k, n](Graph<T>& g, int oi) {
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& av = g.value(ai);
    const Tensor<T>& bv = g.value(bi);
    if (g.node(ai).needs_grad) {
      Tensor<T>& ga = g.grad(ai);  // dA = dC * B^T
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          const T* grow = go.data() + static_cast<std::int64_t>(i) * n;
          const T* brow = bv.data() + static_cast<std::int64_t>(l) * n;
          T acc = T(0);
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[static_cast<std::int64_t>(i) * k + l] += acc;
        }
    }
    if (g.node(bi).needs_grad) {
      Tensor<T>& gb = g.grad(bi);  // dB = A^T * dC
      for (int i = 0; i < m; ++i) {
        const T* arow = av.data() + static_cast<std::int64_t>(i) * k;
        const T* grow = go.data() + static_cast<std::int64_t>(i) * n;
        for (int l = 0; l < k; ++l) {
          const T aval = arow[l];
          T* gbrow = gb.data() + static_cast<std::int64_t>(l) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += aval * grow[j];
        }
      }
    }
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 input required");
  const int r = av.dim(0), c = av.dim(1);
  Tensor<T> out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return g.op(std::move(out), {a}, [ai = a.id(), r, c](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& ga = g.grad(ai);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ga.at(i, j) += go.at(j, i);
  });
}

// rows of a {K,C} matrix rescaled to unit L2 norm
template <class T>
Var<T> normalize_rows(Var<T> a, T eps = T(1e-12)) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("normalize_rows: rank-2 input required");
  const int K = av.dim(0), C = av.dim(1);
  Tensor<T> out({K, C});
  Tensor<T> norms({K});
  for (int i = 0; i < K; ++i) {
    T s = T(0);
    for (int c = 0; c < C; ++c) s += av.at(i, c) * av.at(i, c);
    const T nrm = std::max(std::sqrt(s), eps);
    norms[i] = nrm;
    for (int c = 0; c < C; ++c) out.at(i, c) = av.at(i, c) / nrm;
  }
  return g.op(std::move(out), {a}, [ai = a.id(), norms, K, C](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& y = g.value(oi);
    Tensor<T>& ga = g.grad(ai);
    for (int i = 0; i < K; ++i) {
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += go.at(i, c) * y.at(i, c);
      for (int c = 0; c < C; ++c) ga.at(i, c) += (go.at(i, c) - dot * y.at(i, c)) / norms[i];
    }
  });
}

// per-row standardization (x - mean) / sqrt(var + eps), no affine terms
template <class T>
Var<T> layer_norm_rows(Var<T> a, T eps = T(1e-5)) {
  Graph<T>& g = *a.graph();
  const Tensor<T>& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("layer_norm_rows: rank-2 input required");
  const int K = av.dim(0), C = av.dim(1);
  Tensor<T> out({K, C});
  Tensor<T> inv_std({K});
  for (int i = 0; i < K; ++i) {
    T mu = T(0);
    for (int c = 0; c < C; ++c) mu += av.at(i, c);
    mu /= static_cast<T>(C);
    T var = T(0);
    for (int c = 0; c < C; ++c) {
      const T d = av.at(i, c) - mu;
      var += d * d;
    }
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int c = 0; c < C; ++c) out.at(i, c) = (av.at(i, c) - mu) * is;
  }
  return g.op(std::move(out), {a}, [ai = a.id(), inv_std, K, C](Graph<T>& g, int oi) {
    if (!g.node(ai).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    const Tensor<T>& y = g.value(oi);
    Tensor<T>& ga = g.grad(ai);
    for (int i = 0; i < K; ++i) {
      T gmean = T(0), gymean = T(0);
      for (int c = 0; c < C; ++c) {
        gmean += go.at(i, c);
        gymean += go.at(i, c) * y.at(i, c);
      }
      gmean /= static_cast<T>(C);
      gymean /= static_cast<T>(C);
      for (int c = 0; c < C; ++c)
        ga.at(i, c) += inv_std[i] * (go.at(i, c) - gmean - y.at(i, c) * gymean);
    }
  });
}

// ---- convolution / resampling / pooling ----

// x {C,H,W}, w {O,C,k,k}, b {O}; zero padding
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Graph<T>& g = *x.graph();
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() != 3 || wv.rank() != 4)
    throw std::invalid_argument("conv2d: expects x {C,H,W}, w {O,C,k,k}");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int O = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != C)
    throw std::invalid_argument("conv2d: channel mismatch, x has " + std::to_string(C) +
                                ", w expects " + std::to_string(wv.dim(1)));
  if (bv.numel() != O) throw std::invalid_argument("conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
  Tensor<T> out({O, Ho, Wo});
  for (int o = 0; o < O; ++o) {
    const T bias = bv[o];
    T* oplane = out.data() + static_cast<std::int64_t>(o) * Ho * Wo;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) oplane[i] = bias;
    for (int c = 0; c < C; ++c) {
      const T* xplane = xv.data() + static_cast<std::int64_t>(c) * H * W;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wval = wv.at(o, c, ky, kx);
          if (wval == T(0)) continue;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            T* orow = oplane + static_cast<std::int64_t>(oy) * Wo;
            const T* xrow = xplane + static_cast<std::int64_t>(iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              orow[ox] += wval * xrow[ix];
            }
          }
        }
    }
  }
  return g.op(std::move(out), {x, w, b},
              [xi = x.id(), wi = w.id(), bi = b.id(), C, H, W, O, k, stride, pad, Ho,
               Wo](Graph<T>& g, int oi) {
                const Tensor<T>& go = g.grad(oi);
                const Tensor<T>& xv = g.value(xi);
                const Tensor<T>& wv = g.value(wi);
                const bool need_x = g.node(xi).needs_grad;
                const bool need_w = g.node(wi).needs_grad;
                const bool need_b = g.node(bi).needs_grad;
                Tensor<T>* gx = need_x ? &g.grad(xi) : nullptr;
                Tensor<T>* gw = need_w ? &g.grad(wi) : nullptr;
                Tensor<T>* gb = need_b ? &g.grad(bi) : nullptr;
                for (int o = 0; o < O; ++o) {
                  const T* gplane = go.data() + static_cast<std::int64_t>(o) * Ho * Wo;
                  if (need_b) {
                    T acc = T(0);
                    for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
                      acc += gplane[i];
                    (*gb)[o] += acc;
                  }
                  if (!need_x && !need_w) continue;
                  for (int c = 0; c < C; ++c) {
                    const T* xplane = xv.data() + static_cast<std::int64_t>(c) * H * W;
                    T* gxplane = need_x ? gx->data() + static_cast<std::int64_t>(c) * H * W : nullptr;
                    for (int ky = 0; ky < k; ++ky)
                      for (int kx = 0; kx < k; ++kx) {
                        const T wval = wv.at(o, c, ky, kx);
                        T wacc = T(0);
                        for (int oy = 0; oy < Ho; ++oy) {
                          const int iy = oy * stride - pad + ky;
                          if (iy < 0 || iy >= H) continue;
                          const T* grow = gplane + static_cast<std::int64_t>(oy) * Wo;
                          const T* xrow = xplane + static_cast<std::int64_t>(iy) * W;
                          T* gxrow = need_x ? gxplane + static_cast<std::int64_t>(iy) * W : nullptr;
                          for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            if (need_w) wacc += grow[ox] * xrow[ix];
                            if (need_x) gxrow[ix] += wval * grow[ox];
                          }
                        }
                        if (need_w) gw->at(o, c, ky, kx) += wacc;
                      }
                  }
                }
              });
}

namespace detail {

struct ResizeAxis {
  std::vector<int> i0, i1;
  std::vector<double> f;  // weight of i1
};

inline ResizeAxis resize_axis(int n_in, int n_out) {
  ResizeAxis ax;
  ax.i0.resize(static_cast<size_t>(n_out));
  ax.i1.resize(static_cast<size_t>(n_out));
  ax.f.resize(static_cast<size_t>(n_out));
  const double s = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) * s - 0.5;  // align_corners = false
    if (src < 0.0) src = 0.0;
    if (src > n_in - 1) src = n_in - 1;
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, n_in - 1);
    ax.i0[static_cast<size_t>(o)] = i0;
    ax.i1[static_cast<size_t>(o)] = i1;
    ax.f[static_cast<size_t>(o)] = src - i0;
  }
  return ax;
}

}  // namespace detail

// bilinear resize of a {C,H,W} map, align_corners disabled
template <class T>
Var<T> bilinear_resize(Var<T> x, int Ho, int Wo) {
  Graph<T>& g = *x.graph();
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw std::invalid_argument("bilinear_resize: rank-3 input required");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const detail::ResizeAxis ay = detail::resize_axis(H, Ho);
  const detail::ResizeAxis axs = detail::resize_axis(W, Wo);
  Tensor<T> out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < Ho; ++oy) {
      const int y0 = ay.i0[oy], y1 = ay.i1[oy];
      const T fy = static_cast<T>(ay.f[oy]);
      for (int ox = 0; ox < Wo; ++ox) {
        const int x0 = axs.i0[ox], x1 = axs.i1[ox];
        const T fx = static_cast<T>(axs.f[ox]);
        const T v00 = xv.at(c, y0, x0), v01 = xv.at(c, y0, x1);
        const T v10 = xv.at(c, y1, x0), v11 = xv.at(c, y1, x1);
        out.at(c, oy, ox) = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                            fy * ((T(1) - fx) * v10 + fx * v11);
      }
    }
  return g.op(std::move(out), {x}, [xi = x.id(), ay, axs, C, Ho, Wo](Graph<T>& g, int oi) {
    if (!g.node(xi).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& gx = g.grad(xi);
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy) {
        const int y0 = ay.i0[oy], y1 = ay.i1[oy];
        const T fy = static_cast<T>(ay.f[oy]);
        for (int ox = 0; ox < Wo; ++ox) {
          const int x0 = axs.i0[ox], x1 = axs.i1[ox];
          const T fx = static_cast<T>(axs.f[ox]);
          const T gv = go.at(c, oy, ox);
          gx.at(c, y0, x0) += gv * (T(1) - fy) * (T(1) - fx);
          gx.at(c, y0, x1) += gv * (T(1) - fy) * fx;
          gx.at(c, y1, x0) += gv * fy * (T(1) - fx);
          gx.at(c, y1, x1) += gv * fy * fx;
        }
      }
  });
}

// 3x3 box mean with reflection at borders, stride 1, same size
template <class T>
Var<T> avg_pool3_reflect(Var<T> x) {
  Graph<T>& g = *x.graph();
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw std::invalid_argument("avg_pool3_reflect: rank-3 input required");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  Tensor<T> out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x2 = 0; x2 < W; ++x2) {
        T acc = T(0);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += xv.at(c, reflect(y + dy, H), reflect(x2 + dx, W));
        out.at(c, y, x2) = acc / T(9);
      }
  return g.op(std::move(out), {x}, [xi = x.id(), C, H, W, reflect](Graph<T>& g, int oi) {
    if (!g.node(xi).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& gx = g.grad(xi);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
          const T gv = go.at(c, y, x2) / T(9);
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) gx.at(c, reflect(y + dy, H), reflect(x2 + dx, W)) += gv;
        }
  });
}

// {C,h,w} -> {C}: mean over the spatial extent
template <class T>
Var<T> spatial_mean(Var<T> x) {
  Graph<T>& g = *x.graph();
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw std::invalid_argument("spatial_mean: rank-3 input required");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const T inv = T(1) / static_cast<T>(H * W);
  Tensor<T> out({C});
  for (int c = 0; c < C; ++c) {
    T acc = T(0);
    const T* plane = xv.data() + static_cast<std::int64_t>(c) * H * W;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) acc += plane[i];
    out[c] = acc * inv;
  }
  return g.op(std::move(out), {x}, [xi = x.id(), C, H, W, inv](Graph<T>& g, int oi) {
    if (!g.node(xi).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& gx = g.grad(xi);
    for (int c = 0; c < C; ++c) {
      const T gv = go[c] * inv;
      T* plane = gx.data() + static_cast<std::int64_t>(c) * H * W;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) plane[i] += gv;
    }
  });
}

// ---- ordinal hinge over a square similarity matrix ----
// L = sum over pairs i' < i of max(0, S[i',i] - S[i,i]); zero exactly when each
// column's diagonal entry dominates everything above it.
template <class T>
Var<T> ordinal_hinge(Var<T> S) {
  Graph<T>& g = *S.graph();
  const Tensor<T>& sv = S.value();
  if (sv.rank() != 2 || sv.dim(0) != sv.dim(1))
    throw std::invalid_argument("ordinal_hinge: square matrix required, got " + sv.shape_str());
  const int K = sv.dim(0);
  T acc = T(0);
  for (int i = 1; i < K; ++i)
    for (int ip = 0; ip < i; ++ip) {
      const T d = sv.at(ip, i) - sv.at(i, i);
      // negated form keeps NaN differences in the sum instead of treating
      // them as satisfied constraints
      if (!(d <= T(0))) acc += d;
    }
  Tensor<T> out({1}, acc);
  return g.op(std::move(out), {S}, [si = S.id(), K](Graph<T>& g, int oi) {
    if (!g.node(si).needs_grad) return;
    const T go = g.grad(oi)[0];
    const Tensor<T>& sv = g.value(si);
    Tensor<T>& gs = g.grad(si);
    for (int i = 1; i < K; ++i)
      for (int ip = 0; ip < i; ++ip)
        if (sv.at(ip, i) - sv.at(i, i) > T(0)) {
          gs.at(ip, i) += go;
          gs.at(i, i) -= go;
        }
  });
}

}  // namespace hd
