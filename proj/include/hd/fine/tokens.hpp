#pragma once

#include "hd/enc/encoder.hpp"

namespace hd {

inline constexpr int kDefaultTokenCount = 256;
inline constexpr int kDefaultTokenDim = 512;

// Trainable depth tokens. The token vectors are the only learnable part of
// the language path; their embeddings are recomputed through the frozen text
// encoder every step, so optimizing the tokens steers the embedding rows.
template <class T>
struct LearnableTokenBank {
  ParamTensor<T> tokens;  // {K_tokens, token_dim}

  LearnableTokenBank(int k_tokens, int token_dim, std::uint64_t seed)
      : tokens("depth_tokens", make_rng(seed, "fine/tokens")
                                   .template normal_tensor<T>({k_tokens, token_dim}, 0.0, 0.02)) {
    if (k_tokens < 1 || token_dim < 1)
      throw std::invalid_argument("LearnableTokenBank: need positive token count and dim");
  }

  int count() const { return tokens.value.dim(0); }
  int dim() const { return tokens.value.dim(1); }

  Var<T> embeddings(Graph<T>& g, TextEncoderBackend<T>& text, bool train = true) {
    if (dim() != text.token_dim())
      throw std::invalid_argument("token dim " + std::to_string(dim()) +
                                  " does not match the text encoder's " +
                                  std::to_string(text.token_dim()));
    return text.encode_rows(g, g.param(tokens, train));
  }
};

}  // namespace hd
