#pragma once

#include <vector>

#include "hd/core/ops.hpp"
#include "hd/core/rng.hpp"

// Thin layer wrappers: parameters owned by the layer, applied through a graph.

namespace hd {

template <class T>
struct Conv2dLayer {
  ParamTensor<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_,
              RngState& rng)
      : w(name + ".w", rng.normal_tensor<T>({out_ch, in_ch, k, k}, 0.0,
                                            std::sqrt(2.0 / (in_ch * k * k)))),
        b(name + ".b", Tensor<T>({out_ch})),
        stride(stride_),
        pad(pad_) {}

  Var<T> operator()(Graph<T>& g, Var<T> x, bool train = true) {
    return conv2d(x, g.param(w, train), g.param(b, train), stride, pad);
  }

  void collect(std::vector<ParamTensor<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// y = x W + b for row-vector batches {N,in} -> {N,out}
template <class T>
struct LinearLayer {
  ParamTensor<T> w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in_dim, int out_dim, RngState& rng, bool zero_init = false)
      : w(name + ".w", zero_init ? Tensor<T>({in_dim, out_dim})
                                 : rng.normal_tensor<T>({in_dim, out_dim}, 0.0,
                                                        std::sqrt(1.0 / in_dim))),
        b(name + ".b", Tensor<T>({1, out_dim})) {}

  Var<T> operator()(Graph<T>& g, Var<T> x, bool train = true) {
    const int n = x.value().dim(0);
    Var<T> y = matmul(x, g.param(w, train));
    Var<T> bias = g.param(b, train);
    if (n == 1) return add(y, bias);
    // replicate the bias row
    std::vector<Var<T>> rows;
    Var<T> brow = reshape(bias, {b.value.dim(1)});
    for (int i = 0; i < n; ++i) rows.push_back(brow);
    return add(y, stack_rows(rows));
  }

  void collect(std::vector<ParamTensor<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

}  // namespace hd
