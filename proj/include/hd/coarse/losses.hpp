#pragma once

#include "hd/coarse/patches.hpp"
#include "hd/coarse/prompts.hpp"

// Ordinal contrastive objectives. Both losses hinge on the same constraint
// family: in every column i, the diagonal entry must dominate all entries
// above it, so each patch is most similar to itself (or to its own prompt).

namespace hd {

namespace detail {

template <class T>
double ordinal_hinge_sum(const Tensor<T>& S) {
  if (S.rank() != 2 || S.dim(0) != S.dim(1))
    throw std::invalid_argument("ordinal hinge: matrix must be square, got " + S.shape_str());
  double total = 0;
  for (int i = 0; i < S.dim(0); ++i)
    for (int ip = 0; ip < i; ++ip)
      total += std::max(0.0, static_cast<double>(S.at(ip, i)) - static_cast<double>(S.at(i, i)));
  return total;
}

}  // namespace detail

// S_intra[i][j] = <pooled_i, pooled_j>; rows are unit-norm already.
template <class T>
Tensor<T> intra_similarity(const PatchSetT<T>& patches) {
  const Tensor<T>& f = patches.pooled;
  const int K = f.dim(0), C = f.dim(1);
  Tensor<T> S({K, K});
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      double d = 0;
      for (int c = 0; c < C; ++c) d += static_cast<double>(f.at(i, c)) * f.at(j, c);
      S.at(i, j) = static_cast<T>(d);
    }
  return S;
}

template <class T>
Var<T> intra_similarity(Graph<T>&, const PatchSetVarsT<T>& patches) {
  return matmul(patches.pooled, transpose(patches.pooled));
}

template <class T>
LossValue intramodal_loss(const Tensor<T>& S_intra) {
  LossValue v;
  v.scalar = detail::ordinal_hinge_sum(S_intra);
  v.components["intramodal"] = v.scalar;
  return v;
}

// S_cross[i][j] = <projected_i, T_j>, both sides L2-normalized.
template <class T>
Tensor<T> cross_similarity(const Tensor<T>& projected, const RankedPromptBankT<T>& bank) {
  if (projected.rank() != 2 || projected.dim(0) != bank.embeddings.dim(0) ||
      projected.dim(1) != bank.embeddings.dim(1))
    throw std::invalid_argument("cross_similarity: projected features " + projected.shape_str() +
                                " vs prompt embeddings " + bank.embeddings.shape_str() +
                                " (project features to the text dim first)");
  Graph<T> g;
  return matmul(normalize_rows(g.constant(projected)),
                transpose(normalize_rows(g.constant(bank.embeddings))))
      .value();
}

template <class T>
Var<T> cross_similarity(Graph<T>& g, Var<T> projected, const RankedPromptBankT<T>& bank) {
  if (projected.value().rank() != 2 || projected.value().dim(0) != bank.embeddings.dim(0) ||
      projected.value().dim(1) != bank.embeddings.dim(1))
    throw std::invalid_argument("cross_similarity: projected features " +
                                projected.value().shape_str() + " vs prompt embeddings " +
                                bank.embeddings.shape_str());
  return matmul(normalize_rows(projected),
                transpose(normalize_rows(g.constant(bank.embeddings))));
}

template <class T>
LossValue language_guided_loss(const Tensor<T>& S_cross) {
  LossValue v;
  v.scalar = detail::ordinal_hinge_sum(S_cross);
  v.components["language"] = v.scalar;
  return v;
}

// One linear head per pyramid level maps that level's fused channel count to
// the text embedding dim; trained in stage 1, reused in stage 2.
template <class T>
struct ProjectionHeads {
  std::vector<LinearLayer<T>> heads;

  ProjectionHeads() = default;
  ProjectionHeads(const std::string& name, const std::array<int, kPyramidLevels>& fused_widths,
                  int embed_dim, RngState& rng) {
    for (int s = 0; s < kPyramidLevels; ++s)
      heads.emplace_back(name + ".l" + std::to_string(s), fused_widths[static_cast<size_t>(s)],
                         embed_dim, rng);
  }

  Var<T> operator()(Graph<T>& g, int level, Var<T> pooled_rows, bool train = true) {
    return heads.at(static_cast<size_t>(level))(g, pooled_rows, train);
  }

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out;
    for (LinearLayer<T>& h : heads) h.collect(out);
    return out;
  }
};

}  // namespace hd
