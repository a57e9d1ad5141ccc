#pragma once

#include <cctype>

#include "hd/enc/encoder.hpp"

// Desk-scale stand-ins for the two image encoders and the text encoder. The
// wide-context profile stacks 5x5 convolutions (large receptive field, coarse
// semantics); the shallow profile uses a single 3x3 reduction per level and
// keeps to local structure.

namespace hd {

template <class T>
class ToyConvEncoder final : public EncoderBackend<T> {
 public:
  enum class Profile { WideContext, ShallowDetail };

  ToyConvEncoder(std::string name, Profile profile, std::uint64_t seed,
                 std::array<int, kPyramidLevels> widths = {8, 16, 32, 64}, bool trainable = true)
      : name_(std::move(name)), profile_(profile), widths_(widths), trainable_(trainable) {
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("ToyConvEncoder: channel widths must be positive");
    RngState rng = make_rng(seed, name_ + "/init");
    if (profile == Profile::WideContext) {
      const int mid = std::max(widths[0] / 2, 1);
      stem0_ = Conv2dLayer<T>("stem0", 3, mid, 5, 2, 2, rng);
      stem1_ = Conv2dLayer<T>("stem1", mid, widths[0], 5, 2, 2, rng);
      for (int s = 1; s < kPyramidLevels; ++s)
        down_[static_cast<size_t>(s)] = Conv2dLayer<T>(
            "l" + std::to_string(s), widths[static_cast<size_t>(s - 1)],
            widths[static_cast<size_t>(s)], 5, 2, 2, rng);
    } else {
      stem0_ = Conv2dLayer<T>("stem0", 3, widths[0], 3, 4, 1, rng);
      for (int s = 1; s < kPyramidLevels; ++s)
        down_[static_cast<size_t>(s)] = Conv2dLayer<T>(
            "l" + std::to_string(s), widths[static_cast<size_t>(s - 1)],
            widths[static_cast<size_t>(s)], 3, 2, 1, rng);
    }
  }

  const std::string& name() const override { return name_; }
  std::array<int, kPyramidLevels> channel_widths() const override { return widths_; }
  bool trainable() const override { return trainable_; }
  PyramidTag tag() const override {
    return profile_ == Profile::WideContext ? PyramidTag::GlobalSemantics
                                            : PyramidTag::LocalDetails;
  }
  Profile profile() const { return profile_; }

  // identity activations, for zero-propagation and linearity checks
  void set_linear_mode(bool on) { linear_mode_ = on; }

  std::vector<ParamTensor<T>*> params() override {
    std::vector<ParamTensor<T>*> out;
    stem0_.collect(out);
    if (profile_ == Profile::WideContext) stem1_.collect(out);
    for (int s = 1; s < kPyramidLevels; ++s) down_[static_cast<size_t>(s)].collect(out);
    return out;
  }

  PyramidVars<T> extract_graph(Graph<T>& g, const ImageFrameT<T>& image, bool train) override {
    image.validate();
    const bool tr = train && trainable_;
    Var<T> x = g.constant(image.pixels);
    Var<T> f = act(stem0_(g, x, tr));
    if (profile_ == Profile::WideContext) f = act(stem1_(g, f, tr));
    PyramidVars<T> out;
    out.source_tag = tag();
    out.levels[0] = f;
    for (int s = 1; s < kPyramidLevels; ++s) {
      f = act(down_[static_cast<size_t>(s)](g, f, tr));
      out.levels[static_cast<size_t>(s)] = f;
    }
    return out;
  }

 private:
  Var<T> act(Var<T> x) const { return linear_mode_ ? x : elu(x); }

  std::string name_;
  Profile profile_;
  std::array<int, kPyramidLevels> widths_;
  bool trainable_ = true;
  bool linear_mode_ = false;
  Conv2dLayer<T> stem0_, stem1_;
  std::array<Conv2dLayer<T>, kPyramidLevels> down_;
};

// Deterministic word-hash tokenizer: every distinct word maps to a fixed
// random vector, so prompt token sequences need no vocabulary file.
template <class T>
struct HashTokenizer {
  std::uint64_t seed = 0;
  int dim = 32;

  Tensor<T> token(const std::string& word) const {
    RngState rng = make_rng(seed, "word/" + word);
    return rng.template normal_tensor<T>({1, dim}, 0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  }

  // lowercases and splits on non-alphanumeric characters -> {L, dim}
  Tensor<T> tokens(const std::string& text) const {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
      if (std::isalnum(static_cast<unsigned char>(ch)))
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      else if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(cur);
    if (words.empty()) throw std::invalid_argument("tokenizer: no words in \"" + text + "\"");
    Tensor<T> out({static_cast<int>(words.size()), dim});
    for (size_t i = 0; i < words.size(); ++i) {
      const Tensor<T> t = token(words[i]);
      for (int j = 0; j < dim; ++j) out.at(static_cast<int>(i), j) = t.at(0, j);
    }
    return out;
  }
};

// Frozen random projection + row layer norm. Differentiable in its inputs,
// constant in its weights.
template <class T>
class ToyTextEncoder final : public TextEncoderBackend<T> {
 public:
  ToyTextEncoder(std::string name, std::uint64_t seed, int token_dim, int embed_dim)
      : name_(std::move(name)), token_dim_(token_dim), embed_dim_(embed_dim) {
    if (token_dim < 1 || embed_dim < 1)
      throw std::invalid_argument("ToyTextEncoder: dims must be positive");
    RngState rng = make_rng(seed, name_ + "/proj");
    proj_ = rng.template normal_tensor<T>({token_dim, embed_dim}, 0.0,
                                          1.0 / std::sqrt(static_cast<double>(token_dim)));
  }

  const std::string& name() const override { return name_; }
  int token_dim() const override { return token_dim_; }
  int embed_dim() const override { return embed_dim_; }

  Var<T> encode_rows(Graph<T>& g, Var<T> rows) override {
    if (rows.value().rank() != 2 || rows.value().dim(1) != token_dim_)
      throw std::invalid_argument("encode_rows: expected {K," + std::to_string(token_dim_) +
                                  "}, got " + rows.value().shape_str());
    return layer_norm_rows(matmul(rows, g.constant(proj_)));
  }

 private:
  std::string name_;
  int token_dim_, embed_dim_;
  Tensor<T> proj_;
};

}  // namespace hd
