#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hd/coarse/lanes.hpp"
#include "hd/coarse/losses.hpp"
#include "hd/coarse/patches.hpp"
#include "hd/coarse/prompts.hpp"
#include "hd/core/ops.hpp"
#include "hd/enc/encoder.hpp"
#include "hd/train/optim.hpp"

namespace hd {

template <class T>
struct CoarseBatchItem {
  ImageFrameT<T> image;
  std::vector<LaneAnnotation> lanes;
};

struct CoarseTrainerConfig {
  double lr = 1e-4;
  int k_patches = kDefaultPatchCount;
  int extent = kPatchExtent;
  bool use_intramodal = true;
  bool use_language = true;
  bool train_encoders = true;
};

// Stage-1 trainer: ranks lane patches by ordinal hinge, both against each
// other and against the frozen prompt embeddings. Updates the two visual
// encoders and the per-level projection heads; the text side never moves.
template <class T>
class CoarseTrainer {
 public:
  CoarseTrainer(EncoderBackend<T>& global_enc, EncoderBackend<T>& local_enc,
                RankedPromptBankT<T> bank, CoarseTrainerConfig cfg = {}, std::uint64_t seed = 0)
      : global_(&global_enc),
        local_(&local_enc),
        bank_(std::move(bank)),
        cfg_(cfg),
        heads_rng_(make_rng(seed, "coarse/heads")),
        heads_("proj", fused_widths(), static_cast<int>(bank_.embeddings.shape()[1]), heads_rng_),
        opt_(cfg.lr),
        jitter_seed_(seed) {
    if (bank_.embeddings.shape()[0] != cfg_.k_patches)
      throw std::invalid_argument("prompt bank rank count does not match k_patches");
    if (!cfg_.use_intramodal && !cfg_.use_language)
      throw std::invalid_argument("both stage-1 loss terms are disabled");
  }

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out;
    if (cfg_.train_encoders) {
      for (auto* p : global_->params()) out.push_back(p);
      for (auto* p : local_->params()) out.push_back(p);
    }
    for (auto* p : heads_.params()) out.push_back(p);
    return out;
  }

  const RankedPromptBankT<T>& prompt_bank() const { return bank_; }
  ProjectionHeads<T>& heads() { return heads_; }
  AdamW<T>& optimizer() { return opt_; }
  const CoarseTrainerConfig& config() const { return cfg_; }

  // One optimizer step over a batch. Loss per item averages the hinge terms
  // over every (lane, pyramid level) pair with enough rows for k patches.
  LossValue step(const std::vector<CoarseBatchItem<T>>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    auto trainables = params();
    for (auto* p : trainables) p->zero_grad();

    Graph<T> g;
    Var<T> total = g.constant(Tensor<T>({1}));
    double intra_acc = 0.0, lang_acc = 0.0;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
      const auto& item = batch[bi];
      if (item.lanes.empty()) throw std::invalid_argument("batch item has no lanes");
      auto gp = global_->extract_graph(g, item.image, cfg_.train_encoders);
      auto lp = local_->extract_graph(g, item.image, cfg_.train_encoders);
      auto fused = fuse(g, gp, lp);

      Var<T> item_sum = g.constant(Tensor<T>({1}));
      double item_intra = 0.0, item_lang = 0.0;
      int n_feasible = 0;
      for (const auto& lane : item.lanes) {
        for (int level = 0; level < kPyramidLevels; ++level) {
          const int stride = kPyramidStrides[level];
          if (!lane_feasible(lane, stride, cfg_.k_patches)) continue;
          auto rng = make_rng(jitter_seed_, "coarse/jitter/s" + std::to_string(step_count_) +
                                                "/b" + std::to_string(bi) + "/l" +
                                                std::to_string(level));
          auto patches = select_patches(g, fused.levels[level], level, stride, lane, rng,
                                        cfg_.k_patches, cfg_.extent);
          ++n_feasible;
          if (cfg_.use_intramodal) {
            auto li = ordinal_hinge(intra_similarity(g, patches));
            item_intra += static_cast<double>(li.value()[0]);
            item_sum = add(item_sum, li);
          }
          if (cfg_.use_language) {
            auto projected = heads_(g, level, patches.pooled, cfg_.train_encoders);
            auto lc = ordinal_hinge(cross_similarity(g, projected, bank_));
            item_lang += static_cast<double>(lc.value()[0]);
            item_sum = add(item_sum, lc);
          }
        }
      }
      if (n_feasible == 0)
        throw std::runtime_error("no pyramid level has enough rows for " +
                                 std::to_string(cfg_.k_patches) + " patches on any lane");
      const double inv = 1.0 / n_feasible;
      total = add(total, scale(item_sum, static_cast<T>(inv)));
      intra_acc += item_intra * inv;
      lang_acc += item_lang * inv;
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    total = scale(total, static_cast<T>(inv_b));
    const double loss = static_cast<double>(total.value()[0]);
    if (!std::isfinite(loss)) throw std::runtime_error("stage-1 loss diverged (non-finite)");

    g.backward(total);
    opt_.step(trainables);
    ++step_count_;

    LossValue lv;
    lv.scalar = loss;
    lv.components["intramodal"] = intra_acc * inv_b;
    lv.components["language"] = lang_acc * inv_b;
    lv.check();
    return lv;
  }

 private:
  std::array<int, 4> fused_widths() const {
    auto gw = global_->channel_widths();
    auto lw = local_->channel_widths();
    std::array<int, 4> out{};
    for (int i = 0; i < 4; ++i) out[i] = gw[i] + lw[i];
    return out;
  }

  EncoderBackend<T>* global_;
  EncoderBackend<T>* local_;
  RankedPromptBankT<T> bank_;
  CoarseTrainerConfig cfg_;
  RngState heads_rng_;
  ProjectionHeads<T> heads_;
  AdamW<T> opt_;
  std::uint64_t jitter_seed_;
  int step_count_ = 0;
};

}  // namespace hd
