#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "hd/core/gradcheck.hpp"
#include "hd/enc/conformance.hpp"
#include "hd/enc/file_backend.hpp"
#include "hd/enc/registry.hpp"

using namespace hd;

namespace {

ImageFrameT<double> random_image(int h, int w, std::uint64_t seed) {
  RngState rng = make_rng(seed, "test/image");
  return ImageFrameT<double>(rng.uniform_tensor({3, h, w}, 0.0, 1.0));
}

// independent align-corners-false bilinear resize, plain loops
TensorD resize_oracle(const TensorD& x, int ho, int wo) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  TensorD out({C, ho, wo});
  const double sy = static_cast<double>(H) / ho, sx = static_cast<double>(W) / wo;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ho; ++y)
      for (int xo = 0; xo < wo; ++xo) {
        const double fy = std::min(std::max((y + 0.5) * sy - 0.5, 0.0), H - 1.0);
        const double fx = std::min(std::max((xo + 0.5) * sx - 0.5, 0.0), W - 1.0);
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
        const double ay = fy - y0, ax = fx - x0;
        out.at(c, y, xo) = (1 - ay) * ((1 - ax) * x.at(c, y0, x0) + ax * x.at(c, y0, x1)) +
                           ay * ((1 - ax) * x.at(c, y1, x0) + ax * x.at(c, y1, x1));
      }
  return out;
}

}  // namespace

TEST_CASE("toy encoders produce the documented pyramid shapes") {
  for (auto profile : {ToyConvEncoder<double>::Profile::WideContext,
                       ToyConvEncoder<double>::Profile::ShallowDetail}) {
    ToyConvEncoder<double> enc("e", profile, 7);
    const FeaturePyramidT<double> p = enc.extract(random_image(64, 96, 1));
    const int hs[4] = {16, 8, 4, 2}, ws[4] = {24, 12, 6, 3}, cs[4] = {8, 16, 32, 64};
    for (int s = 0; s < 4; ++s) {
      const TensorD& m = p.levels[static_cast<size_t>(s)];
      REQUIRE(m.dim(0) == cs[s]);
      REQUIRE(m.dim(1) == hs[s]);
      REQUIRE(m.dim(2) == ws[s]);
    }
  }
}

TEST_CASE("toy encoder tags match their granularity roles") {
  ToyConvEncoder<double> wide("w", ToyConvEncoder<double>::Profile::WideContext, 7);
  ToyConvEncoder<double> local("l", ToyConvEncoder<double>::Profile::ShallowDetail, 7);
  REQUIRE(wide.tag() == PyramidTag::GlobalSemantics);
  REQUIRE(local.tag() == PyramidTag::LocalDetails);
  REQUIRE(wide.extract(random_image(64, 96, 1)).source_tag == PyramidTag::GlobalSemantics);
}

TEST_CASE("zero image propagates to all-zero feature maps in linear mode") {
  ToyConvEncoder<double> enc("e", ToyConvEncoder<double>::Profile::WideContext, 7);
  enc.set_linear_mode(true);  // biases start at zero, so only weights act
  ImageFrameT<double> zero(TensorD({3, 64, 96}));
  const FeaturePyramidT<double> p = enc.extract(zero);
  for (int s = 0; s < 4; ++s)
    for (std::int64_t i = 0; i < p.levels[static_cast<size_t>(s)].numel(); ++i)
      REQUIRE(p.levels[static_cast<size_t>(s)][i] == 0.0);
}

TEST_CASE("encoders with the same seed are interchangeable") {
  ToyConvEncoder<double> a("e", ToyConvEncoder<double>::Profile::ShallowDetail, 12);
  ToyConvEncoder<double> b("e", ToyConvEncoder<double>::Profile::ShallowDetail, 12);
  const ImageFrameT<double> img = random_image(64, 64, 3);
  const FeaturePyramidT<double> pa = a.extract(img), pb = b.extract(img);
  for (int s = 0; s < 4; ++s)
    for (std::int64_t i = 0; i < pa.levels[static_cast<size_t>(s)].numel(); ++i)
      REQUIRE(pa.levels[static_cast<size_t>(s)][i] == pb.levels[static_cast<size_t>(s)][i]);
}

TEST_CASE("extraction rejects extents not divisible by 32") {
  ToyConvEncoder<double> enc("e", ToyConvEncoder<double>::Profile::WideContext, 7);
  ImageFrameT<double> bad;  // assembled by hand to bypass the ctor check
  bad.pixels = TensorD({3, 60, 96});
  REQUIRE_THROWS_AS(enc.extract(bad), std::invalid_argument);
  REQUIRE_THROWS_AS(random_image(64, 40, 1), std::invalid_argument);
}

TEST_CASE("extraction gradients reach the convolution parameters") {
  ToyConvEncoder<double> enc("e", ToyConvEncoder<double>::Profile::ShallowDetail, 4,
                             {2, 3, 4, 5});
  const ImageFrameT<double> img = random_image(32, 32, 9);
  RngState rng = make_rng(10, "test/wout");
  const TensorD wout = rng.normal_tensor({5, 1, 1}, 0.0, 1.0);

  auto loss_value = [&]() {
    Graph<double> g;
    PyramidVars<double> p = enc.extract_graph(g, img, true);
    return weighted_sum(p.levels[3], wout).value()[0];
  };
  for (ParamTensor<double>* p : enc.params()) p->zero_grad();
  {
    Graph<double> g;
    PyramidVars<double> p = enc.extract_graph(g, img, true);
    g.backward(weighted_sum(p.levels[3], wout));
  }
  for (ParamTensor<double>* p : enc.params()) {
    const TensorD saved = p->value;
    GradCheckResult res = check_gradient(
        [&](const TensorD& cand) {
          p->value = cand;
          const double v = loss_value();
          p->value = saved;
          return v;
        },
        saved, p->grad);
    INFO(p->name << ": " << res.summary());
    CHECK(res.ok);
  }
}

TEST_CASE("fusion resizes the global map onto the local grid and stacks channels") {
  // one level checked by the documented shapes, all levels by the wiring
  RngState rng = make_rng(6, "test/fuse");
  FeaturePyramidT<double> global_p, local_p;
  global_p.source_tag = PyramidTag::GlobalSemantics;
  local_p.source_tag = PyramidTag::LocalDetails;
  const int lh[4] = {12, 6, 3, 2}, lw[4] = {20, 10, 5, 2};
  for (int s = 0; s < 4; ++s) {
    global_p.levels[static_cast<size_t>(s)] =
        rng.uniform_tensor({8, lh[s] / 2 + 1, lw[s] / 2 + 1}, -1.0, 1.0);
    local_p.levels[static_cast<size_t>(s)] = rng.uniform_tensor({8, lh[s], lw[s]}, -1.0, 1.0);
  }
  const FeaturePyramidT<double> fused = fuse(global_p, local_p);
  REQUIRE(fused.source_tag == PyramidTag::Fused);
  for (int s = 0; s < 4; ++s) {
    const TensorD& m = fused.levels[static_cast<size_t>(s)];
    REQUIRE(m.dim(0) == 16);
    REQUIRE(m.dim(1) == lh[s]);
    REQUIRE(m.dim(2) == lw[s]);
    // against the independent resize-then-stack oracle
    const TensorD rs = resize_oracle(global_p.levels[static_cast<size_t>(s)], lh[s], lw[s]);
    for (int c = 0; c < 16; ++c)
      for (int y = 0; y < lh[s]; ++y)
        for (int x = 0; x < lw[s]; ++x) {
          const double want = c < 8 ? rs.at(c, y, x)
                                    : local_p.levels[static_cast<size_t>(s)].at(c - 8, y, x);
          REQUIRE(m.at(c, y, x) == Catch::Approx(want).margin(1e-6));
        }
  }
}

TEST_CASE("fusing a spatially constant global map keeps it constant") {
  FeaturePyramidT<double> global_p, local_p;
  for (int s = 0; s < 4; ++s) {
    global_p.levels[static_cast<size_t>(s)] = TensorD({2, 3, 4}, 0.731);
    local_p.levels[static_cast<size_t>(s)] = TensorD({1, 7, 9}, -0.2);
  }
  const FeaturePyramidT<double> fused = fuse(global_p, local_p);
  for (int s = 0; s < 4; ++s)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        REQUIRE(fused.levels[static_cast<size_t>(s)].at(0, y, x) == Catch::Approx(0.731));
        REQUIRE(fused.levels[static_cast<size_t>(s)].at(2, y, x) == Catch::Approx(-0.2));
      }
}

TEST_CASE("fusion gradients reach both input pyramids") {
  RngState rng = make_rng(8, "test/fusegrad");
  const TensorD g0 = rng.uniform_tensor({2, 3, 5}, -1.0, 1.0);
  const TensorD l0 = rng.uniform_tensor({3, 6, 10}, -1.0, 1.0);
  const TensorD wout = rng.normal_tensor({5, 6, 10}, 0.0, 1.0);

  auto loss_of = [&](const TensorD& gv, const TensorD& lv) {
    Graph<double> g;
    PyramidVars<double> gp, lp;
    for (int s = 0; s < 4; ++s) {
      gp.levels[static_cast<size_t>(s)] = g.input(gv, false);
      lp.levels[static_cast<size_t>(s)] = g.input(lv, false);
    }
    PyramidVars<double> fused = fuse(g, gp, lp);
    Var<double> sum = weighted_sum(fused.levels[0], wout);
    for (int s = 1; s < 4; ++s)
      sum = add(sum, weighted_sum(fused.levels[static_cast<size_t>(s)], wout));
    return sum;
  };

  Graph<double> g;
  Var<double> gin, lin;
  {
    PyramidVars<double> gp, lp;
    for (int s = 0; s < 4; ++s) {
      gp.levels[static_cast<size_t>(s)] = (s == 0) ? (gin = g.input(g0)) : g.input(g0, false);
      lp.levels[static_cast<size_t>(s)] = (s == 0) ? (lin = g.input(l0)) : g.input(l0, false);
    }
    PyramidVars<double> fused = fuse(g, gp, lp);
    Var<double> sum = weighted_sum(fused.levels[0], wout);
    for (int s = 1; s < 4; ++s)
      sum = add(sum, weighted_sum(fused.levels[static_cast<size_t>(s)], wout));
    g.backward(sum);
  }
  // finite-difference sensitivity against the level-0 analytic grads
  GradCheckResult rg = check_gradient(
      [&](const TensorD& cand) {
        Graph<double> g2;
        PyramidVars<double> gp, lp;
        for (int s = 0; s < 4; ++s) {
          gp.levels[static_cast<size_t>(s)] = g2.input(s == 0 ? cand : g0, false);
          lp.levels[static_cast<size_t>(s)] = g2.input(l0, false);
        }
        PyramidVars<double> fused = fuse(g2, gp, lp);
        Var<double> sum = weighted_sum(fused.levels[0], wout);
        for (int s = 1; s < 4; ++s)
          sum = add(sum, weighted_sum(fused.levels[static_cast<size_t>(s)], wout));
        return sum.value()[0];
      },
      g0, g.grad_of(gin));
  INFO("global: " << rg.summary());
  CHECK(rg.ok);
  bool any = false;
  for (std::int64_t i = 0; i < g.grad_of(lin).numel(); ++i) any = any || g.grad_of(lin)[i] != 0;
  REQUIRE(any);
  (void)loss_of;
}

TEST_CASE("text embeddings are frozen, repeatable, and prompt-sensitive") {
  ToyTextEncoder<double> txt("t", 11, 32, 16);
  HashTokenizer<double> tok{11, 32};
  const char* ranks[7] = {"very distant", "distant",       "somewhat distant", "midway",
                          "somewhat close", "close",         "very close"};
  std::vector<TensorD> prompts;
  for (const char* r : ranks)
    prompts.push_back(tok.tokens(std::string("This patch appears to be ") + r));

  const TensorD e1 = txt.encode_prompts(prompts);
  const TensorD e2 = txt.encode_prompts(prompts);
  REQUIRE(e1.dim(0) == 7);
  REQUIRE(e1.dim(1) == 16);
  for (std::int64_t i = 0; i < e1.numel(); ++i) REQUIRE(e1[i] == e2[i]);

  // pairwise-distinct rows
  double min_dist = 1e18;
  for (int a = 0; a < 7; ++a)
    for (int b = a + 1; b < 7; ++b) {
      double d2 = 0;
      for (int j = 0; j < 16; ++j) d2 += (e1.at(a, j) - e1.at(b, j)) * (e1.at(a, j) - e1.at(b, j));
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  REQUIRE(min_dist > 1e-3);

  // identical prompts give identical rows
  std::vector<TensorD> same(5, prompts[2]);
  const TensorD es = txt.encode_prompts(same);
  for (int k = 1; k < 5; ++k)
    for (int j = 0; j < 16; ++j) REQUIRE(es.at(k, j) == es.at(0, j));

  REQUIRE_THROWS_AS(txt.encode_prompts({}), std::invalid_argument);
}

TEST_CASE("text encoder is differentiable in its inputs with normalized rows") {
  ToyTextEncoder<double> txt("t", 11, 8, 6);
  RngState rng = make_rng(14, "test/rows");
  const TensorD rows0 = rng.normal_tensor({3, 8}, 0.0, 1.0);
  const TensorD wout = rng.normal_tensor({3, 6}, 0.0, 1.0);

  Graph<double> g;
  Var<double> rows = g.input(rows0);
  Var<double> emb = txt.encode_rows(g, rows);
  // layer-normalized rows: zero mean, unit variance
  for (int k = 0; k < 3; ++k) {
    double m = 0, v = 0;
    for (int j = 0; j < 6; ++j) m += emb.value().at(k, j) / 6.0;
    for (int j = 0; j < 6; ++j) v += (emb.value().at(k, j) - m) * (emb.value().at(k, j) - m) / 6.0;
    REQUIRE(m == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(v == Catch::Approx(1.0).margin(1e-4));
  }
  g.backward(weighted_sum(emb, wout));
  GradCheckResult res = check_gradient(
      [&](const TensorD& cand) {
        Graph<double> g2;
        Var<double> e = txt.encode_rows(g2, g2.input(cand, false));
        return weighted_sum(e, wout).value()[0];
      },
      rows0, g.grad_of(rows));
  INFO(res.summary());
  CHECK(res.ok);
}

TEST_CASE("registry resolves the built-in backends and rejects unknown names") {
  auto& reg = EncoderRegistry<double>::global();
  auto wide = reg.create("toy-wide", 3);
  auto local = reg.create("toy-local", 3);
  REQUIRE(wide->tag() == PyramidTag::GlobalSemantics);
  REQUIRE(local->tag() == PyramidTag::LocalDetails);
  REQUIRE_THROWS_WITH(reg.create("resnet-50", 3), Catch::Matchers::ContainsSubstring("toy-wide"));

  EncoderRegistry<double> custom;
  custom.add("x", [](std::uint64_t) { return std::unique_ptr<EncoderBackend<double>>(); });
  REQUIRE_THROWS_AS(custom.add("x", [](std::uint64_t) {
                      return std::unique_ptr<EncoderBackend<double>>();
                    }),
                    std::invalid_argument);
}

TEST_CASE("encoder weight files round-trip through the array container") {
  const std::string path = "/tmp/hd_test_encoder.hdt";
  ToyConvEncoder<float> src("src", ToyConvEncoder<float>::Profile::ShallowDetail, 21,
                            {4, 6, 8, 10});
  save_encoder_file(src, path);

  auto loaded = load_encoder_file<float>("imported", path);
  REQUIRE(loaded->trainable() == false);
  REQUIRE(loaded->channel_widths() == std::array<int, 4>{4, 6, 8, 10});
  RngState rng = make_rng(2, "test/image");
  const ImageFrameT<float> img(rng.uniform_tensor<float>({3, 32, 64}, 0.0, 1.0));
  const auto pa = src.extract(img), pb = loaded->extract(img);
  for (int s = 0; s < 4; ++s)
    for (std::int64_t i = 0; i < pa.levels[static_cast<size_t>(s)].numel(); ++i)
      REQUIRE(pa.levels[static_cast<size_t>(s)][i] == pb.levels[static_cast<size_t>(s)][i]);

  check_encoder_conformance(*loaded);
  std::remove(path.c_str());
}

TEST_CASE("encoder file loading rejects malformed containers") {
  const std::string path = "/tmp/hd_test_encoder_bad.hdt";
  ToyConvEncoder<float> src("src", ToyConvEncoder<float>::Profile::ShallowDetail, 21);
  save_encoder_file(src, path);

  // drop one weight array
  ArrayStore store = ArrayStore::load(path);
  store.arrays.erase(store.arrays.begin());
  store.save(path);
  REQUIRE_THROWS_WITH(load_encoder_file<float>("x", path),
                      Catch::Matchers::ContainsSubstring("stem0.w"));

  // metadata with the wrong format marker
  ArrayStore wrong = ArrayStore::load(path);
  wrong.meta = "{\"format\":\"something-else\"}";
  wrong.save(path);
  REQUIRE_THROWS_WITH(load_encoder_file<float>("x", path),
                      Catch::Matchers::ContainsSubstring("something-else"));

  // not a container at all
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "PNG stuff";
  }
  REQUIRE_THROWS_WITH(load_encoder_file<float>("x", path),
                      Catch::Matchers::ContainsSubstring("not an array container"));
  std::remove(path.c_str());
}

TEST_CASE("array container preserves dtypes, dims, and metadata") {
  RngState rng = make_rng(17, "test/store");
  ArrayStore store;
  store.meta = "{\"hello\":1}";
  store.add("a", rng.uniform_tensor<float>({2, 3}, -1.0, 1.0));
  store.add("b", rng.uniform_tensor({4}, -1.0, 1.0));  // double
  Tensor<uint8_t> flags({5});
  for (int i = 0; i < 5; ++i) flags[i] = static_cast<uint8_t>(i * 7 % 256);
  store.add("flags", flags);
  REQUIRE_THROWS_AS(store.add("a", TensorD({1})), std::invalid_argument);

  const std::string path = "/tmp/hd_test_store.hdt";
  store.save(path);
  const ArrayStore back = ArrayStore::load(path);
  REQUIRE(back.meta == store.meta);
  REQUIRE(back.arrays.size() == 3);
  REQUIRE(back.at("a").dtype == ArrayDType::F32);
  REQUIRE(back.at("b").dtype == ArrayDType::F64);
  REQUIRE(back.at("flags").dtype == ArrayDType::U8);

  const Tensor<float> a = back.at("a").as<float>();
  const TensorD a0 = store.at("a").as<double>();
  for (std::int64_t i = 0; i < a.numel(); ++i)
    REQUIRE(static_cast<double>(a[i]) == Catch::Approx(a0[i]));
  const Tensor<uint8_t> fl = back.at("flags").as<uint8_t>();
  for (int i = 0; i < 5; ++i) REQUIRE(fl[i] == flags[i]);

  REQUIRE_THROWS_AS(back.at("missing"), std::runtime_error);
  REQUIRE_THROWS_AS(ArrayStore::load("/tmp/does_not_exist.hdt"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("built-in backends pass the adapter conformance checks") {
  for (const std::string& name : {std::string("toy-wide"), std::string("toy-local")}) {
    auto enc = EncoderRegistry<float>::global().create(name, 5);
    check_encoder_conformance(*enc);
  }
}
