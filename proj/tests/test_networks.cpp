#include <gtest/gtest.h>

#include <set>

#include "fsgfa/networks.hpp"
#include "fsgfa/rng.hpp"

using namespace fsgfa;

TEST(Networks, PaperParameterCounts) {
  Rng rng(1);
  auto m = build<float>(NetConfig::paper(), rng);
  ParamCounts c = count_parameters(m);
  EXPECT_EQ(c.extractor, 5902528);
  EXPECT_EQ(c.decoder, 555712);
  EXPECT_EQ(c.embedding, 525312);
  EXPECT_EQ(c.aggregation, 526848);
  EXPECT_EQ(c.classifier, 4427703);
  EXPECT_EQ(c.test_subset(), 6427840);
}

TEST(Networks, ClassifierCountArithmetic) {
  // (Q, b) for classes=8631, embed=512: 512*8631 + 8631.
  EXPECT_EQ(512 * 8631 + 8631, 4427703);
}

TEST(Networks, BatchNormCountOver512Channels) {
  Rng rng(1);
  auto m = build<float>(NetConfig::paper(), rng);
  // phi_tilde = 1x1 conv (1024 -> 512) weights plus one BN affine pair.
  EXPECT_EQ(m.phit_conv.weight.value.numel(), 1024 * 512);
  EXPECT_EQ(m.phit_bn.gamma.value.numel() + m.phit_bn.beta.value.numel(), 1024);
}

TEST(Networks, BuildIsDeterministic) {
  Rng a(42), b(42);
  auto m1 = build<float>(NetConfig::desk(), a);
  auto m2 = build<float>(NetConfig::desk(), b);
  auto p1 = m1.collect_all();
  auto p2 = m2.collect_all();
  ASSERT_EQ(p1.params.size(), p2.params.size());
  for (std::size_t i = 0; i < p1.params.size(); ++i) {
    EXPECT_EQ(p1.params[i]->name, p2.params[i]->name);
    EXPECT_EQ(p1.params[i]->value.data, p2.params[i]->value.data);
  }
}

TEST(Networks, ParameterNamesUnique) {
  Rng rng(3);
  auto m = build<float>(NetConfig::desk(), rng);
  std::set<std::string> names;
  for (auto* p : m.collect_all().params) EXPECT_TRUE(names.insert(p->name).second) << p->name;
}

TEST(Networks, DeskForwardShapes) {
  Rng rng(7);
  auto m = build<float>(NetConfig::desk(), rng);
  Tape<float> t;
  Tensor<float> x({1, 3, 112, 112});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Var h_f = m.extract(t, t.leaf(x), BnMode::eval);
  EXPECT_EQ(t.val(h_f).shape, (std::vector<int>{1, 256, 28, 28}));
}

TEST(Networks, DeskForwardTrainShapesAndRanges) {
  Rng rng(7);
  auto m = build<float>(NetConfig::desk(), rng);
  Tape<float> t;
  Tensor<float> x({2, 3, 112, 112});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> hs({2, 3, 28, 28});
  for (auto& v : hs.data) v = static_cast<float>(rng.uniform(0, 1));
  TrainForward f = m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::train_no_update);
  EXPECT_EQ(t.val(f.h_f).shape, (std::vector<int>{2, 256, 28, 28}));
  EXPECT_EQ(t.val(f.h_c).shape, (std::vector<int>{2, 259, 28, 28}));
  EXPECT_EQ(t.val(f.agg).shape, (std::vector<int>{2, 128, 28, 28}));
  EXPECT_EQ(t.val(f.emb).shape, (std::vector<int>{2, 128, 28, 28}));
  EXPECT_EQ(t.val(f.g_agg).shape, (std::vector<int>{2, 128}));
  EXPECT_EQ(t.val(f.g_emb).shape, (std::vector<int>{2, 128}));
  EXPECT_EQ(t.val(f.logits).shape, (std::vector<int>{2, 20}));
  EXPECT_EQ(t.val(f.x_recon).shape, (std::vector<int>{2, 3, 56, 56}));
  for (float v : t.val(f.x_recon).data) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_TRUE(t.val(f.x_recon).all_finite());
}

TEST(Networks, ZeroHeatmapStillDefined) {
  Rng rng(9);
  auto m = build<float>(NetConfig::desk(), rng);
  Tape<float> t;
  Tensor<float> x({1, 3, 112, 112});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> hs({1, 3, 28, 28});  // all zeros
  TrainForward f = m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::train_no_update);
  // h_c = [0 || h_f]: the first three channels are exactly zero.
  const Tensor<float>& hc = t.val(f.h_c);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 28 * 28; ++i) EXPECT_EQ(hc.at4(0, c, i / 28, i % 28), 0.0f);
  EXPECT_TRUE(t.val(f.logits).all_finite());
}

TEST(Networks, HeatmapSpatialMismatchRejected) {
  Rng rng(9);
  auto m = build<float>(NetConfig::desk(), rng);
  Tape<float> t;
  Tensor<float> x({1, 3, 112, 112});
  Tensor<float> hs({1, 3, 56, 56});
  EXPECT_THROW(m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::train_no_update),
               std::invalid_argument);
}

TEST(Networks, InferMatchesTrainEmbeddingPath) {
  Rng rng(11);
  auto m = build<float>(NetConfig::desk(), rng);
  Tensor<float> x({1, 3, 112, 112});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> feat = m.forward_infer(x);
  EXPECT_EQ(feat.shape, (std::vector<int>{1, 128}));

  Tape<float> t;
  Tensor<float> hs({1, 3, 28, 28});
  TrainForward f = m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::eval);
  const Tensor<float>& g = t.val(f.g_emb);
  for (int i = 0; i < 128; ++i) EXPECT_EQ(feat[i], g[i]);
}

TEST(Networks, InferenceTouchesOnlyTestSubset) {
  Rng rng(11);
  auto m = build<float>(NetConfig::desk(), rng);
  Tensor<float> x({1, 3, 112, 112});
  std::vector<std::string> touched;
  m.forward_infer(x, &touched);
  EXPECT_FALSE(touched.empty());
  for (const auto& name : touched) {
    const bool ok = name.rfind("F.", 0) == 0 || name.rfind("phi_tilde.", 0) == 0;
    EXPECT_TRUE(ok) << "inference touched " << name;
  }
}

TEST(Networks, IdenticalImagesIdenticalFeatures) {
  Rng rng(13);
  auto m = build<float>(NetConfig::desk(), rng);
  Tensor<float> x({1, 3, 112, 112});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> f1 = m.forward_infer(x);
  Tensor<float> f2 = m.forward_infer(x);
  EXPECT_EQ(f1.data, f2.data);
}

TEST(Networks, InvalidConfigRejected) {
  NetConfig c = NetConfig::desk();
  c.decode_size = 112;  // not 2x feature size
  Rng rng(1);
  EXPECT_THROW(build<float>(c, rng), std::invalid_argument);
  NetConfig d = NetConfig::desk();
  d.num_classes = 100;  // desk invariant: <= 64
  EXPECT_THROW(build<float>(d, rng), std::invalid_argument);
}

// Heavy: full paper-scale forward shape check (Table dimensions).
TEST(Networks, PaperForwardShapes) {
  Rng rng(5);
  auto m = build<float>(NetConfig::paper(), rng);
  Tape<float> t(/*grad_enabled=*/false);
  Tensor<float> x({1, 3, 224, 224});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> hs({1, 3, 56, 56});
  for (auto& v : hs.data) v = static_cast<float>(rng.uniform(0, 1));
  TrainForward f = m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::train_no_update);
  EXPECT_EQ(t.val(f.h_f).shape, (std::vector<int>{1, 1024, 56, 56}));
  EXPECT_EQ(t.val(f.h_c).shape, (std::vector<int>{1, 1027, 56, 56}));
  EXPECT_EQ(t.val(f.agg).shape, (std::vector<int>{1, 512, 56, 56}));
  EXPECT_EQ(t.val(f.x_recon).shape, (std::vector<int>{1, 3, 112, 112}));
  EXPECT_EQ(t.val(f.logits).shape, (std::vector<int>{1, 8631}));
  EXPECT_EQ(t.val(f.g_emb).shape, (std::vector<int>{1, 512}));
}
