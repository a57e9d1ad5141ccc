#pragma once

#include "hd/core/nn.hpp"
#include "hd/enc/encoder.hpp"

namespace hd {

template <class T>
struct DisparityFieldT {
  Tensor<T> sigma;  // {H,W} in [0,1]
};
using DisparityField = DisparityFieldT<float>;

// Coarsest-to-finest refinement ladder: upsample x2, fuse, add the skip from
// the next aligned level, then a final x4 upsample and sigmoid. Every bias is
// zero-initialized, so all-zero aligned features decode to sigma 0.5.
template <class T>
class DepthDecoder {
 public:
  DepthDecoder(const std::string& name, int in_channels, int width, RngState& rng)
      : in_channels_(in_channels), width_(width) {
    skips_.reserve(kPyramidLevels);
    fuses_.reserve(kPyramidLevels - 1);
    for (int l = 0; l < kPyramidLevels; ++l)
      skips_.emplace_back(name + ".skip" + std::to_string(l), in_channels, width, 3, 1, 1, rng);
    for (int l = 0; l < kPyramidLevels - 1; ++l)
      fuses_.emplace_back(name + ".fuse" + std::to_string(l), width, width, 3, 1, 1, rng);
    out_ = std::make_unique<Conv2dLayer<T>>(name + ".out", width, 1, 3, 1, 1, rng);
  }

  int in_channels() const { return in_channels_; }
  int width() const { return width_; }

  // aligned levels {K,H/4,W/4}..{K,H/32,W/32} -> sigma {out_h, out_w}
  Var<T> operator()(Graph<T>& g, const PyramidVars<T>& aligned, int out_h, int out_w,
                    bool train = true) {
    for (int l = 0; l < kPyramidLevels; ++l) {
      const Tensor<T>& m = aligned.levels[static_cast<size_t>(l)].value();
      if (m.rank() != 3 || m.dim(0) != in_channels_)
        throw std::invalid_argument("decoder: level " + std::to_string(l) + " must be {" +
                                    std::to_string(in_channels_) + ",h,w}, got " + m.shape_str());
    }
    Var<T> x = elu(skips_[kPyramidLevels - 1](g, aligned.levels[kPyramidLevels - 1], train));
    for (int l = kPyramidLevels - 2; l >= 0; --l) {
      const Tensor<T>& m = aligned.levels[static_cast<size_t>(l)].value();
      x = bilinear_resize(x, m.dim(1), m.dim(2));
      x = elu(add(fuses_[static_cast<size_t>(l)](g, x, train),
                  skips_[static_cast<size_t>(l)](g, aligned.levels[static_cast<size_t>(l)], train)));
    }
    x = bilinear_resize(x, out_h, out_w);
    Var<T> sig = sigmoid((*out_)(g, x, train));  // {1, out_h, out_w}
    return reshape(sig, {out_h, out_w});
  }

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out;
    for (auto& c : skips_) c.collect(out);
    for (auto& c : fuses_) c.collect(out);
    out_->collect(out);
    return out;
  }

 private:
  int in_channels_, width_;
  std::vector<Conv2dLayer<T>> skips_;
  std::vector<Conv2dLayer<T>> fuses_;
  std::unique_ptr<Conv2dLayer<T>> out_;
};

}  // namespace hd
