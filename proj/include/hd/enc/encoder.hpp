#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hd/core/nn.hpp"
#include "hd/core/types.hpp"

// Feature-extraction contract. Backends produce a 4-level pyramid at strides
// 4/8/16/32; the graph path is the primary one so training can differentiate
// through backend parameters, and the plain path wraps it with a scratch graph.

namespace hd {

template <class T>
struct PyramidVars {
  std::array<Var<T>, kPyramidLevels> levels;
  PyramidTag source_tag = PyramidTag::Fused;
};

template <class T>
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual const std::string& name() const = 0;
  virtual std::array<int, kPyramidLevels> channel_widths() const = 0;
  virtual bool trainable() const = 0;
  virtual PyramidTag tag() const = 0;
  virtual std::vector<ParamTensor<T>*> params() = 0;
  virtual PyramidVars<T> extract_graph(Graph<T>& g, const ImageFrameT<T>& image, bool train) = 0;

  FeaturePyramidT<T> extract(const ImageFrameT<T>& image) {
    image.validate();
    Graph<T> g;
    PyramidVars<T> p = extract_graph(g, image, false);
    FeaturePyramidT<T> out;
    out.source_tag = p.source_tag;
    for (int s = 0; s < kPyramidLevels; ++s)
      out.levels[static_cast<size_t>(s)] = p.levels[static_cast<size_t>(s)].value();
    out.validate(image.height(), image.width());
    return out;
  }
};

// Maps prompt token-vector sequences to one embedding row per prompt. Frozen:
// parameters never enter the graph as trainables, but gradients flow into the
// token inputs (which is how learnable depth tokens train).
template <class T>
class TextEncoderBackend {
 public:
  virtual ~TextEncoderBackend() = default;

  virtual const std::string& name() const = 0;
  virtual int token_dim() const = 0;
  virtual int embed_dim() const = 0;
  bool frozen() const { return true; }

  // rows: {K, token_dim}, each row an already-pooled token sequence
  virtual Var<T> encode_rows(Graph<T>& g, Var<T> rows) = 0;

  // prompts: one {L, token_dim} sequence per prompt, pooled by the mean
  Tensor<T> encode_prompts(const std::vector<Tensor<T>>& prompts) {
    if (prompts.empty()) throw std::invalid_argument("encode_prompts: empty prompt sequence");
    const int K = static_cast<int>(prompts.size());
    const int d = token_dim();
    Tensor<T> rows({K, d});
    for (int k = 0; k < K; ++k) {
      const Tensor<T>& seq = prompts[static_cast<size_t>(k)];
      if (seq.rank() != 2 || seq.dim(1) != d || seq.dim(0) < 1)
        throw std::invalid_argument("encode_prompts: prompt " + std::to_string(k) +
                                    " must be {L>=1," + std::to_string(d) + "}, got " +
                                    seq.shape_str());
      for (int i = 0; i < seq.dim(0); ++i)
        for (int j = 0; j < d; ++j) rows.at(k, j) += seq.at(i, j) / static_cast<T>(seq.dim(0));
    }
    Graph<T> g;
    return encode_rows(g, g.constant(rows)).value();
  }
};

// Hybrid fusion: per level, resize the coarse-grid global map onto the local
// map's grid and concatenate channels. Spatial dims always follow the local
// pyramid; gradients flow into both inputs.
template <class T>
PyramidVars<T> fuse(Graph<T>&, const PyramidVars<T>& global_feats,
                    const PyramidVars<T>& local_feats) {
  PyramidVars<T> out;
  out.source_tag = PyramidTag::Fused;
  for (int s = 0; s < kPyramidLevels; ++s) {
    Var<T> gl = global_feats.levels[static_cast<size_t>(s)];
    Var<T> lo = local_feats.levels[static_cast<size_t>(s)];
    if (!gl.valid() || !lo.valid())
      throw std::invalid_argument("fuse: missing pyramid level " + std::to_string(s));
    const int h = lo.value().dim(1), w = lo.value().dim(2);
    if (gl.value().dim(1) != h || gl.value().dim(2) != w) gl = bilinear_resize(gl, h, w);
    out.levels[static_cast<size_t>(s)] = concat_channels(gl, lo);
  }
  return out;
}

template <class T>
FeaturePyramidT<T> fuse(const FeaturePyramidT<T>& global_feats,
                        const FeaturePyramidT<T>& local_feats) {
  Graph<T> g;
  PyramidVars<T> gv{{}, global_feats.source_tag}, lv{{}, local_feats.source_tag};
  for (int s = 0; s < kPyramidLevels; ++s) {
    const Tensor<T>& a = global_feats.levels[static_cast<size_t>(s)];
    const Tensor<T>& b = local_feats.levels[static_cast<size_t>(s)];
    if (a.rank() != 3 || b.rank() != 3)
      throw std::invalid_argument("fuse: level " + std::to_string(s) + " is not a {C,H,W} map");
    gv.levels[static_cast<size_t>(s)] = g.constant(a);
    lv.levels[static_cast<size_t>(s)] = g.constant(b);
  }
  PyramidVars<T> fused = fuse(g, gv, lv);
  FeaturePyramidT<T> out;
  out.source_tag = PyramidTag::Fused;
  for (int s = 0; s < kPyramidLevels; ++s)
    out.levels[static_cast<size_t>(s)] = fused.levels[static_cast<size_t>(s)].value();
  return out;
}

}  // namespace hd
