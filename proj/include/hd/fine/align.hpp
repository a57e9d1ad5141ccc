#pragma once

#include "hd/coarse/losses.hpp"
#include "hd/enc/encoder.hpp"

namespace hd {

// Pixel-level alignment: flatten the map, project each pixel's feature to the
// text dim, take inner products with the token embedding rows, and fold the
// token axis back into channels. A null projection means the features already
// live in the text dim. Raw inner products by default; cosine is the ablation.
template <class T>
Var<T> align(Graph<T>& g, Var<T> fused, Var<T> g_embed, LinearLayer<T>* projection = nullptr,
             bool train = true, bool cosine = false) {
  if (fused.value().rank() != 3)
    throw std::invalid_argument("align: feature map must be {C,H,W}, got " +
                                fused.value().shape_str());
  if (g_embed.value().rank() != 2)
    throw std::invalid_argument("align: token embeddings must be {K,C_t}, got " +
                                g_embed.value().shape_str());
  const int C = fused.value().dim(0);
  const int H = fused.value().dim(1);
  const int W = fused.value().dim(2);
  const int K = g_embed.value().dim(0);
  const int Ct = g_embed.value().dim(1);

  Var<T> pixels = transpose(reshape(fused, {C, H * W}));  // {HW, C}
  if (projection) pixels = (*projection)(g, pixels, train);
  if (pixels.value().dim(1) != Ct)
    throw std::invalid_argument("align: projected pixel dim " +
                                std::to_string(pixels.value().dim(1)) +
                                " does not match token embedding dim " + std::to_string(Ct));
  if (cosine) {
    pixels = normalize_rows(pixels);
    g_embed = normalize_rows(g_embed);
  }
  Var<T> scores = matmul(pixels, transpose(g_embed));  // {HW, K}
  return reshape(transpose(scores), {K, H, W});
}

// Applies align at every pyramid level through the stage-1 projection heads.
template <class T>
PyramidVars<T> align_pyramid(Graph<T>& g, const PyramidVars<T>& fused, Var<T> g_embed,
                             ProjectionHeads<T>& heads, bool train = true, bool cosine = false) {
  PyramidVars<T> out;
  out.source_tag = PyramidTag::Aligned;
  for (int level = 0; level < kPyramidLevels; ++level)
    out.levels[static_cast<size_t>(level)] =
        align(g, fused.levels[static_cast<size_t>(level)], g_embed,
              &heads.heads.at(static_cast<size_t>(level)), train, cosine);
  return out;
}

}  // namespace hd
