#pragma once

#include "hd/enc/encoder.hpp"

// Adapter conformance: any backend, built-in or loaded from file, must give
// shape-correct, deterministic, finite pyramids. Throws with a reason on the
// first violation so test frameworks and CLI users get the same diagnostics.

namespace hd {

template <class T>
void check_encoder_conformance(EncoderBackend<T>& enc, int h = 64, int w = 96,
                               std::uint64_t seed = 1) {
  auto fail = [&](const std::string& why) -> std::runtime_error {
    return std::runtime_error("encoder '" + enc.name() + "' conformance: " + why);
  };
  RngState rng = make_rng(seed, "conformance/image");
  Tensor<T> px = rng.template uniform_tensor<T>({3, h, w}, 0.0, 1.0);
  const ImageFrameT<T> image(px);

  const FeaturePyramidT<T> p1 = enc.extract(image);
  p1.validate(h, w);  // stride shapes and finiteness
  const std::array<int, kPyramidLevels> widths = enc.channel_widths();
  for (int s = 0; s < kPyramidLevels; ++s)
    if (p1.channels(s) != widths[static_cast<size_t>(s)])
      throw fail("level " + std::to_string(s) + " has " + std::to_string(p1.channels(s)) +
                 " channels, declared " + std::to_string(widths[static_cast<size_t>(s)]));
  if (p1.source_tag != PyramidTag::GlobalSemantics && p1.source_tag != PyramidTag::LocalDetails)
    throw fail("source tag must identify one of the two encoder roles");

  const FeaturePyramidT<T> p2 = enc.extract(image);
  for (int s = 0; s < kPyramidLevels; ++s) {
    const Tensor<T>& a = p1.levels[static_cast<size_t>(s)];
    const Tensor<T>& b = p2.levels[static_cast<size_t>(s)];
    for (std::int64_t i = 0; i < a.numel(); ++i)
      if (a[i] != b[i]) throw fail("repeated extraction differs at level " + std::to_string(s));
  }
}

}  // namespace hd
