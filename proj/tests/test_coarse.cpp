#include <catch2/catch_amalgamated.hpp>

#include "hd/coarse/trainer.hpp"
#include "hd/synth/render.hpp"

using namespace hd;

namespace {

LaneAnnotation two_point_lane(double x0, double y0, double x1, double y1) {
  LaneAnnotation lane;
  lane.polyline = {{x0, y0}, {x1, y1}};
  return lane;
}

TensorD unit_rows(int k, int c, std::uint64_t seed) {
  RngState rng = make_rng(seed, "test/rows");
  TensorD rows = rng.normal_tensor({k, c}, 0.0, 1.0);
  for (int i = 0; i < k; ++i) {
    double n = 0;
    for (int j = 0; j < c; ++j) n += rows.at(i, j) * rows.at(i, j);
    n = std::sqrt(n);
    for (int j = 0; j < c; ++j) rows.at(i, j) /= n;
  }
  return rows;
}

// pairwise-dot oracle with optional row normalization, plain loops
TensorD dot_oracle(const TensorD& a, const TensorD& b, bool normalize) {
  const int k = a.dim(0), c = a.dim(1);
  TensorD s({k, k});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double d = 0, na = 0, nb = 0;
      for (int t = 0; t < c; ++t) {
        d += a.at(i, t) * b.at(j, t);
        na += a.at(i, t) * a.at(i, t);
        nb += b.at(j, t) * b.at(j, t);
      }
      s.at(i, j) = normalize ? d / (std::sqrt(na) * std::sqrt(nb)) : d;
    }
  return s;
}

struct TrainerRig {
  ToyConvEncoder<float> global{"g", ToyConvEncoder<float>::Profile::WideContext, 7, {4, 6, 8, 10}};
  ToyConvEncoder<float> local{"l", ToyConvEncoder<float>::Profile::ShallowDetail, 8, {4, 6, 8, 10}};
  HashTokenizer<float> tok{5};
  ToyTextEncoder<float> text{"t", 5, 32, 16};
  RankedPromptBankT<float> bank;

  explicit TrainerRig(int k = kDefaultPatchCount) { bank = build_prompt_bank(text, tok, k); }
};

CoarseBatchItem<float> corridor_item(std::uint64_t scene_seed) {
  const CameraModel cam = make_corridor_camera(192, 64);
  const SceneSpec spec = make_corridor_spec(scene_seed, cam, 2);
  RenderedFrame frame = render(spec, 0);
  return {std::move(frame.image), std::move(frame.lanes)};
}

}  // namespace

TEST_CASE("patch rows are regular along the lane and ranked far to near") {
  const LaneAnnotation lane = two_point_lane(60, 100, 40, 20);
  const int stride = 4;
  REQUIRE(lane_feasible(lane, stride, 7));

  RngState rng = make_rng(3, "test/place");
  auto patches = place_patches(lane, stride, 32, 32, rng, 7);
  REQUIRE(patches.size() == 7);

  int min_gap = 1 << 20, max_gap = 0;
  for (size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i].rank_index == static_cast<int>(i));
    if (i > 0) {
      const int gap = patches[i].center_y - patches[i - 1].center_y;
      REQUIRE(gap > 0);
      min_gap = std::min(min_gap, gap);
      max_gap = std::max(max_gap, gap);
    }
    // column stays within jitter range of the lane at that row
    const double lane_x = lane.x_at(detail::to_pixel(patches[i].center_y, stride));
    const long lane_col = std::lround(detail::to_feature(lane_x, stride));
    CHECK(std::abs(patches[i].center_x - lane_col) <= 2);
  }
  CHECK(max_gap - min_gap <= 1);

  RngState rng2 = make_rng(3, "test/place");
  auto again = place_patches(lane, stride, 32, 32, rng2, 7);
  for (size_t i = 0; i < patches.size(); ++i) {
    CHECK(again[i].center_x == patches[i].center_x);
    CHECK(again[i].center_y == patches[i].center_y);
  }
}

TEST_CASE("patch rows ignore the seed, columns jitter with it") {
  const LaneAnnotation lane = two_point_lane(60, 100, 40, 20);
  std::vector<std::vector<PatchDescriptor>> runs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngState rng = make_rng(seed, "test/jitter");
    runs.push_back(place_patches(lane, 4, 32, 32, rng, 7));
  }
  bool any_column_differs = false;
  for (const auto& run : runs)
    for (size_t i = 0; i < run.size(); ++i) {
      CHECK(run[i].center_y == runs[0][i].center_y);
      any_column_differs |= run[i].center_x != runs[0][i].center_x;
    }
  CHECK(any_column_differs);
}

TEST_CASE("short lanes and rank-collapsing clamps are rejected") {
  const LaneAnnotation short_lane = two_point_lane(50, 50, 48, 40);
  CHECK(lane_feasible(short_lane, 4, 3));
  CHECK_FALSE(lane_feasible(short_lane, 32, 7));
  RngState rng = make_rng(1, "test/reject");
  CHECK_THROWS_WITH(place_patches(short_lane, 32, 8, 8, rng, 7),
                    Catch::Matchers::ContainsSubstring("feature rows"));
  CHECK_THROWS_AS(place_patches(short_lane, 4, 32, 32, rng, 1), std::invalid_argument);

  // feasible span, but the map is too short: clamping merges rows
  const LaneAnnotation tall = two_point_lane(30, 158, 30, 2);
  REQUIRE(lane_feasible(tall, 8, 7));
  CHECK_THROWS_WITH(place_patches(tall, 8, 8, 32, rng, 7),
                    Catch::Matchers::ContainsSubstring("rank ordering"));
}

TEST_CASE("lane text files round-trip") {
  std::vector<LaneAnnotation> lanes = {two_point_lane(60, 100, 40, 20),
                                       two_point_lane(96.5, 63, 101.25, 30.5)};
  lanes[0].polyline.push_back({38, 12});
  const std::string text = lanes_to_text(lanes);
  auto parsed = lanes_from_text(text, 9);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].image_id == 9);
  for (size_t l = 0; l < lanes.size(); ++l) {
    REQUIRE(parsed[l].polyline.size() == lanes[l].polyline.size());
    for (size_t i = 0; i < lanes[l].polyline.size(); ++i) {
      CHECK(parsed[l].polyline[i][0] == Catch::Approx(lanes[l].polyline[i][0]));
      CHECK(parsed[l].polyline[i][1] == Catch::Approx(lanes[l].polyline[i][1]));
    }
  }
  CHECK_THROWS_AS(lanes_from_text("12;40,13;40"), std::invalid_argument);
}

TEST_CASE("patch ranks follow rendered ground depth") {
  int lanes_checked = 0;
  for (std::uint64_t scene_seed : {11u, 12u, 13u}) {
    const CameraModel cam = make_corridor_camera(192, 64);
    const SceneSpec spec = make_corridor_spec(scene_seed, cam, 2);
    const RenderedFrame frame = render(spec, 0);
    for (const LaneAnnotation& lane : frame.lanes) {
      if (!lane_feasible(lane, 4, 7)) continue;
      RngState rng = make_rng(scene_seed, "test/rank");
      auto patches = place_patches(lane, 4, 16, 48, rng, 7);
      double prev_depth = 1e18;
      for (const auto& p : patches) {
        const int py = static_cast<int>(std::lround(detail::to_pixel(p.center_y, 4)));
        const int px = static_cast<int>(std::lround(detail::to_pixel(p.center_x, 4)));
        REQUIRE(frame.depth.valid.at(py, px) == 1);
        const double d = frame.depth.depth.at(py, px);
        CHECK(d < prev_depth);  // rank 0 is farthest
        prev_depth = d;
      }
      ++lanes_checked;
    }
  }
  CHECK(lanes_checked >= 3);
}

TEST_CASE("prompt bank spells out the ranked vocabulary") {
  const std::string t = kPromptTemplate;
  CHECK(ranked_prompts(7) ==
        std::vector<std::string>{t + "very distant", t + "distant", t + "somewhat distant",
                                 t + "midway", t + "somewhat close", t + "close",
                                 t + "very close"});
  CHECK(ranked_prompts(2) == std::vector<std::string>{t + "very distant", t + "very close"});
  CHECK(ranked_prompts(4) == std::vector<std::string>{t + "very distant", t + "somewhat distant",
                                                      t + "somewhat close", t + "very close"});
  CHECK_THROWS_AS(ranked_prompts(1), std::invalid_argument);
  CHECK_THROWS_AS(ranked_prompts(8), std::invalid_argument);

  HashTokenizer<double> tok(5);
  ToyTextEncoder<double> text("t", 5, 32, 16);
  auto bank = build_prompt_bank(text, tok, 7);
  REQUIRE(bank.embeddings.shape() == std::vector<int>({7, 16}));
  REQUIRE(bank.prompts.size() == 7);
  for (int i = 0; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j) {
      double dist = 0;
      for (int c = 0; c < 16; ++c) {
        const double d = bank.embeddings.at(i, c) - bank.embeddings.at(j, c);
        dist += d * d;
      }
      CHECK(dist > 1e-6);  // ranks get distinct embeddings
    }
  auto bank2 = build_prompt_bank(text, tok, 7);
  CHECK(bank2.embeddings.raw() == bank.embeddings.raw());
}

TEST_CASE("intra similarity matches a pairwise-dot oracle") {
  PatchSetT<double> set;
  set.pooled = unit_rows(7, 12, 21);
  const TensorD oracle = dot_oracle(set.pooled, set.pooled, false);

  const TensorD s = intra_similarity(set);
  Graph<double> g;
  PatchSetVarsT<double> vars;
  vars.pooled = g.constant(set.pooled);
  const TensorD s_graph = intra_similarity(g, vars).value();
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      CHECK(s.at(i, j) == Catch::Approx(oracle.at(i, j)).margin(1e-6));
      CHECK(s_graph.at(i, j) == Catch::Approx(oracle.at(i, j)).margin(1e-6));
      CHECK(s.at(i, j) == Catch::Approx(s.at(j, i)).margin(1e-12));
    }
  for (int i = 0; i < 7; ++i) CHECK(s.at(i, i) == Catch::Approx(1.0).margin(1e-6));

  PatchSetT<double> ortho;
  ortho.pooled = TensorD({4, 4});
  for (int i = 0; i < 4; ++i) ortho.pooled.at(i, i) = 1.0;
  const TensorD id = intra_similarity(ortho);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(id.at(i, j) == Catch::Approx(i == j ? 1.0 : 0.0));

  // duplicated patch: similarity exactly one
  PatchSetT<double> dup;
  dup.pooled = unit_rows(2, 6, 4);
  for (int c = 0; c < 6; ++c) dup.pooled.at(1, c) = dup.pooled.at(0, c);
  CHECK(intra_similarity(dup).at(0, 1) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("cross similarity normalizes both sides and checks dims") {
  RankedPromptBankT<double> bank;
  bank.embeddings = make_rng(31, "test/bank").normal_tensor({7, 16}, 0.0, 1.0);
  const TensorD projected = make_rng(32, "test/proj").normal_tensor({7, 16}, 0.0, 1.0);
  const TensorD oracle = dot_oracle(projected, bank.embeddings, true);

  const TensorD s = cross_similarity(projected, bank);
  Graph<double> g;
  const TensorD s_graph = cross_similarity(g, g.constant(projected), bank).value();
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      CHECK(s.at(i, j) == Catch::Approx(oracle.at(i, j)).margin(1e-6));
      CHECK(s_graph.at(i, j) == Catch::Approx(oracle.at(i, j)).margin(1e-6));
    }

  // projected rows equal to the prompt rows: diagonal of ones
  const TensorD diag = cross_similarity(bank.embeddings, bank);
  for (int i = 0; i < 7; ++i) CHECK(diag.at(i, i) == Catch::Approx(1.0).margin(1e-9));

  // orthonormal prompt rows, patch 0 aligned with prompt 0
  RankedPromptBankT<double> ortho;
  ortho.embeddings = TensorD({4, 8});
  for (int i = 0; i < 4; ++i) ortho.embeddings.at(i, i) = 2.0;  // scale must not matter
  TensorD pooled({4, 8});
  pooled.at(0, 0) = 0.5;
  for (int i = 1; i < 4; ++i) pooled.at(i, 7) = 1.0;
  const TensorD ind = cross_similarity(pooled, ortho);
  for (int j = 0; j < 4; ++j) CHECK(ind.at(0, j) == Catch::Approx(j == 0 ? 1.0 : 0.0).margin(1e-9));

  const TensorD narrow = make_rng(33, "test/narrow").normal_tensor({7, 12}, 0.0, 1.0);
  CHECK_THROWS_WITH(cross_similarity(narrow, bank),
                    Catch::Matchers::ContainsSubstring("text dim"));
}

TEST_CASE("ordinal hinge worked examples") {
  TensorD sat({3, 3});
  for (int i = 0; i < 3; ++i) sat.at(i, i) = 1.0;
  CHECK(intramodal_loss(sat).scalar == 0.0);
  CHECK(language_guided_loss(sat).scalar == 0.0);

  TensorD one_violation = sat;
  one_violation.at(0, 1) = 1.2;  // patch 1 looks more like patch 0 than itself
  const LossValue li = intramodal_loss(one_violation);
  CHECK(li.scalar == Catch::Approx(0.2).margin(1e-12));
  CHECK(li.components.at("intramodal") == Catch::Approx(0.2).margin(1e-12));

  TensorD col({3, 3});
  col.at(0, 2) = 0.9;
  col.at(1, 2) = 0.2;
  col.at(2, 2) = 0.5;
  const LossValue lc = language_guided_loss(col);
  CHECK(lc.scalar == Catch::Approx(0.4).margin(1e-12));
  CHECK(lc.components.at("language") == Catch::Approx(0.4).margin(1e-12));

  CHECK_THROWS_AS(intramodal_loss(TensorD({3, 4})), std::invalid_argument);
}

TEST_CASE("ordinal hinge invariances and zero condition") {
  const TensorD S = make_rng(41, "test/hinge").uniform_tensor({7, 7}, -1.0, 1.0);
  const double base = detail::ordinal_hinge_sum(S);
  CHECK(base > 0.0);

  for (double c : {0.37, -1.2}) {
    TensorD shifted = S;
    for (auto& v : shifted.raw()) v += c;
    CHECK(detail::ordinal_hinge_sum(shifted) == Catch::Approx(base).margin(1e-9));
  }

  for (int j = 0; j < 7; ++j) {
    TensorD bumped = S;
    bumped.at(j, j) += 0.3;
    CHECK(detail::ordinal_hinge_sum(bumped) <= base + 1e-12);
  }

  // permuting patch storage and un-permuting the matrix changes nothing
  const TensorD rows = unit_rows(7, 10, 42);
  PatchSetT<double> set;
  set.pooled = rows;
  const TensorD s0 = intra_similarity(set);
  const int perm[7] = {3, 0, 6, 1, 5, 2, 4};
  PatchSetT<double> shuffled;
  shuffled.pooled = TensorD({7, 10});
  for (int i = 0; i < 7; ++i)
    for (int c = 0; c < 10; ++c) shuffled.pooled.at(i, c) = rows.at(perm[i], c);
  const TensorD sp = intra_similarity(shuffled);
  TensorD unperm({7, 7});
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) unperm.at(perm[i], perm[j]) = sp.at(i, j);
  CHECK(detail::ordinal_hinge_sum(unperm) == Catch::Approx(detail::ordinal_hinge_sum(s0)).margin(1e-12));

  // constructively satisfied: every column decays above its diagonal
  TensorD good({5, 5});
  for (int i = 0; i < 5; ++i)
    for (int ip = 0; ip <= i; ++ip) good.at(ip, i) = 0.5 - 0.1 * (i - ip);
  CHECK(detail::ordinal_hinge_sum(good) == 0.0);

  Graph<double> g;
  auto gv = g.input(good);
  g.backward(ordinal_hinge(gv));
  const TensorD flat = g.grad_of(gv);
  for (double gr : flat.raw()) CHECK(gr == 0.0);  // flat at satisfied constraints

  TensorD bad = good;
  bad.at(1, 3) = 0.9;  // single violated pair
  CHECK(detail::ordinal_hinge_sum(bad) == Catch::Approx(0.4).margin(1e-12));
  Graph<double> g2;
  auto bv = g2.input(bad);
  g2.backward(ordinal_hinge(bv));
  const TensorD grad = g2.grad_of(bv);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double expect = (i == 1 && j == 3) ? 1.0 : (i == 3 && j == 3) ? -1.0 : 0.0;
      CHECK(grad.at(i, j) == expect);
    }
}

TEST_CASE("projection heads map each level to the text width") {
  RngState rng = make_rng(9, "test/heads");
  ProjectionHeads<double> heads("proj", {4, 6, 8, 10}, 16, rng);
  REQUIRE(heads.heads.size() == 4);
  REQUIRE(heads.params().size() == 8);
  CHECK(heads.params()[0]->name == "proj.l0.w");

  Graph<double> g;
  const std::array<int, 4> widths = {4, 6, 8, 10};
  for (int level = 0; level < 4; ++level) {
    auto rows = g.constant(make_rng(10 + level, "test/rows").normal_tensor({7, widths[level]}, 0.0, 1.0));
    auto out = heads(g, level, rows);
    CHECK(out.shape() == std::vector<int>({7, 16}));
  }
}

TEST_CASE("one coarse step trains vision and leaves text untouched") {
  TrainerRig rig;
  const TensorF bank_before = rig.bank.embeddings;
  CoarseTrainerConfig cfg;
  cfg.lr = 1e-3;
  CoarseTrainer<float> trainer(rig.global, rig.local, rig.bank, cfg, 42);

  const float head_w0 = trainer.heads().params()[0]->value[0];
  const auto item = corridor_item(5);
  const LossValue lv = trainer.step({item});

  CHECK(std::isfinite(lv.scalar));
  CHECK(lv.scalar >= 0.0);
  CHECK(lv.scalar == Catch::Approx(lv.components.at("intramodal") + lv.components.at("language"))
                         .margin(1e-4));

  auto grad_norm = [](const std::vector<ParamTensor<float>*>& ps) {
    double n = 0;
    for (auto* p : ps)
      for (float gv : p->grad.raw()) n += std::abs(gv);
    return n;
  };
  CHECK(grad_norm(rig.global.params()) > 0.0);
  CHECK(grad_norm(rig.local.params()) > 0.0);
  CHECK(grad_norm(trainer.heads().params()) > 0.0);
  CHECK(trainer.heads().params()[0]->value[0] != head_w0);  // optimizer applied
  CHECK(trainer.prompt_bank().embeddings.raw() == bank_before.raw());  // text frozen

  // identical fresh setup reproduces the loss exactly
  TrainerRig rig2;
  CoarseTrainer<float> trainer2(rig2.global, rig2.local, rig2.bank, cfg, 42);
  CHECK(trainer2.step({corridor_item(5)}).scalar == lv.scalar);
}

TEST_CASE("coarse loss toggles and guards") {
  TrainerRig rig;
  CoarseTrainerConfig cfg;
  cfg.use_language = false;
  CoarseTrainer<float> intra_only(rig.global, rig.local, rig.bank, cfg, 1);
  const LossValue lv = intra_only.step({corridor_item(6)});
  CHECK(lv.components.at("language") == 0.0);
  CHECK(lv.scalar == Catch::Approx(lv.components.at("intramodal")).margin(1e-5));

  CoarseTrainerConfig neither;
  neither.use_intramodal = false;
  neither.use_language = false;
  CHECK_THROWS_AS(CoarseTrainer<float>(rig.global, rig.local, rig.bank, neither, 1),
                  std::invalid_argument);

  TrainerRig narrow(5);  // 5 prompt ranks vs 7 requested patches
  CHECK_THROWS_WITH(CoarseTrainer<float>(narrow.global, narrow.local, narrow.bank, {}, 1),
                    Catch::Matchers::ContainsSubstring("k_patches"));

  CoarseTrainer<float> trainer(rig.global, rig.local, rig.bank, {}, 2);
  CHECK_THROWS_AS(trainer.step({}), std::invalid_argument);

  auto item = corridor_item(7);
  item.lanes.clear();
  CHECK_THROWS_AS(trainer.step({item}), std::invalid_argument);

  auto steep = corridor_item(7);
  steep.lanes = {two_point_lane(96, 60, 96, 56)};  // spans too few rows at every level
  CHECK_THROWS_WITH(trainer.step({steep}), Catch::Matchers::ContainsSubstring("patches"));

  // divergence guard fires on a poisoned parameter
  TrainerRig sick;
  CoarseTrainer<float> diverged(sick.global, sick.local, sick.bank, {}, 3);
  sick.global.params()[0]->value[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH(diverged.step({corridor_item(8)}),
                    Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("pooled patch features are unit rows pooled from the map") {
  // constant map: pooling any window gives the same vector, normalized
  const int C = 5;
  TensorD map({C, 16, 48});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 48; ++x) map.at(c, y, x) = c + 1.0;

  FeaturePyramidT<double> pyr;
  pyr.levels[0] = map;
  pyr.levels[1] = TensorD({C, 8, 24});
  pyr.levels[2] = TensorD({C, 4, 12});
  pyr.levels[3] = TensorD({C, 2, 6});

  const LaneAnnotation lane = two_point_lane(100, 60, 90, 20);
  RngState rng = make_rng(2, "test/pool");
  PatchSetT<double> set = select_patches(pyr, lane, rng, 7);
  set.validate();
  CHECK(set.level == 0);
  CHECK(set.stride == 4);

  double norm = 0;
  for (int c = 0; c < C; ++c) norm += (c + 1.0) * (c + 1.0);
  norm = std::sqrt(norm);
  for (int i = 0; i < 7; ++i)
    for (int c = 0; c < C; ++c)
      CHECK(set.pooled.at(i, c) == Catch::Approx((c + 1.0) / norm).margin(1e-12));

  // pooling gradient: moving one cell inside a window moves the pooled row
  Graph<double> g;
  auto lv = g.input(map);
  RngState rng2 = make_rng(2, "test/pool");
  auto vars = select_patches(g, lv, 0, 4, lane, rng2, 7);
  TensorD w({7, C});
  w.fill(1.0);
  g.backward(weighted_sum(vars.pooled, w));
  const TensorD grad = g.grad_of(lv);
  double total = 0;
  for (double v : grad.raw()) total += std::abs(v);
  CHECK(total > 0.0);
}
