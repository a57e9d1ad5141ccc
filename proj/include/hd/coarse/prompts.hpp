#pragma once

#include "hd/enc/toy.hpp"

// Ranked depth prompts. Row 0 always describes the farthest patch; the
// vocabulary is a fixed monotone distance scale sampled at k points.

namespace hd {

inline constexpr const char* kPromptTemplate = "This patch appears to be ";

inline const std::vector<std::string>& rank_vocabulary() {
  static const std::vector<std::string> words = {
      "very distant", "distant", "somewhat distant", "midway",
      "somewhat close", "close", "very close"};
  return words;
}

inline std::vector<std::string> ranked_prompts(int k) {
  const auto& vocab = rank_vocabulary();
  const int n = static_cast<int>(vocab.size());
  if (k < 2) throw std::invalid_argument("ranked_prompts: need k >= 2");
  if (k > n)
    throw std::invalid_argument("ranked_prompts: vocabulary has " + std::to_string(n) +
                                " ranks, requested " + std::to_string(k));
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) {
    // evenly spaced vocabulary indices, endpoints always included
    const int idx = static_cast<int>(std::lround(i * double(n - 1) / (k - 1)));
    out.push_back(kPromptTemplate + vocab[static_cast<size_t>(idx)]);
  }
  return out;
}

template <class T>
struct RankedPromptBankT {
  std::vector<std::string> prompts;  // row 0 = farthest
  Tensor<T> embeddings;              // {K, C_t}
};
using RankedPromptBank = RankedPromptBankT<float>;

template <class T>
RankedPromptBankT<T> build_prompt_bank(TextEncoderBackend<T>& backend,
                                       const HashTokenizer<T>& tokenizer, int k) {
  RankedPromptBankT<T> bank;
  bank.prompts = ranked_prompts(k);
  std::vector<Tensor<T>> sequences;
  for (const std::string& p : bank.prompts) sequences.push_back(tokenizer.tokens(p));
  bank.embeddings = backend.encode_prompts(sequences);
  return bank;
}

}  // namespace hd
