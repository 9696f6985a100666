#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fsgfa/explain.hpp"
#include "testutil.hpp"

using namespace fsgfa;
using testutil::randu;

namespace fs = std::filesystem;

namespace {

NetConfig tiny_config() {
  NetConfig c;
  c.name = "tiny";
  c.input_size = 32;
  c.stem_channels = 4;
  c.stage_mid_channels = {2, 2, 2, 4};
  c.stage_depths = {1, 1, 1, 1};
  c.embed_channels = 8;
  c.num_classes = 5;
  c.decode_size = 16;
  c.decoder_channels = 4;
  return c;
}

}  // namespace

TEST(CamCombine, SymbolicLinearToyModel) {
  // Toy: activations A (1 x K x h x w), score = sum_k Q_kc * mean(A_k) + b_c.
  // Then dscore/dA_k = Q_kc / (h w) everywhere, so the combined map is
  // ReLU(sum_k Q_kc / (h w) * A_k) -- computable by hand.
  Rng rng(1);
  const int K = 3, h = 2, w = 2, C = 4, target = 2;
  Tensor<double> acts = randu<double>({1, K, h, w}, rng);
  Tensor<double> q = randu<double>({K, C}, rng);
  Tensor<double> b = randu<double>({C}, rng);

  Tape<double> t;
  Var a = t.leaf(acts, /*needs_grad=*/true);
  Var logits = linear(t, global_avg_pool(t, a), t.leaf(q), t.leaf(b));
  Var score = fsgfa::detail::select_logit(t, logits, 0, target);
  t.backward(score);
  Tensor<double> map = cam_combine(t.val(a), t.grad(a));

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double want = 0;
      for (int k = 0; k < K; ++k) want += q.at2(k, target) / (h * w) * acts.at4(0, k, y, x);
      want = std::max(0.0, want);
      EXPECT_NEAR(map.at2(y, x), want, 1e-12);
    }
}

TEST(GradCam, ShapeNonNegativityDeterminism) {
  Rng rng(2);
  auto m = build<float>(tiny_config(), rng);
  Tensor<float> img = randu<float>({3, 32, 32}, rng);
  ActivationMap<float> cam = grad_cam(m, img, 1);
  EXPECT_EQ(cam.values.shape, (std::vector<int>{8, 8}));  // input/4
  EXPECT_EQ(cam.target_class, 1);
  for (float v : cam.values.data) EXPECT_GE(v, 0.0f);
  ActivationMap<float> cam2 = grad_cam(m, img, 1);
  EXPECT_EQ(cam.values.data, cam2.values.data);
}

TEST(GradCam, InvalidClassRejected) {
  Rng rng(3);
  auto m = build<float>(tiny_config(), rng);
  Tensor<float> img({3, 32, 32}, 0.1f);
  EXPECT_THROW(grad_cam(m, img, -1), std::invalid_argument);
  EXPECT_THROW(grad_cam(m, img, 5), std::invalid_argument);
}

TEST(GradCam, ParametersReceiveNoUpdates) {
  Rng rng(4);
  auto m = build<float>(tiny_config(), rng);
  std::vector<std::vector<float>> before;
  for (auto* p : m.collect_all().params) before.push_back(p->value.data);
  Tensor<float> img = randu<float>({3, 32, 32}, rng);
  grad_cam(m, img, 0);
  auto refs = m.collect_all();
  for (std::size_t i = 0; i < refs.params.size(); ++i)
    EXPECT_EQ(refs.params[i]->value.data, before[i]) << refs.params[i]->name;
}

TEST(GradCam, PaperScaleMapIs56) {
  Rng rng(5);
  auto m = build<float>(NetConfig::paper(), rng);
  Tensor<float> img = randu<float>({3, 224, 224}, rng);
  ActivationMap<float> cam = grad_cam(m, img, 123);
  EXPECT_EQ(cam.values.shape, (std::vector<int>{56, 56}));
  for (float v : cam.values.data) EXPECT_GE(v, 0.0f);
}

TEST(Overlay, ZeroMapBlendsWithRampZeroColor) {
  ActivationMap<float> cam;
  cam.values = Tensor<float>({4, 4});
  Image img(8, 8, 3);
  for (auto& p : img.px) p = 100;
  Image out = overlay(cam, img, "");
  const Color zero = cam_ramp(0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c)
        EXPECT_EQ(out.at(y, x, c),
                  static_cast<std::uint8_t>(std::lround(0.5 * 100 + 0.5 * zero[c])));
}

TEST(Overlay, PeakLocationSurvivesUpscale) {
  ActivationMap<float> cam;
  cam.values = Tensor<float>({4, 4});
  cam.values.at2(1, 2) = 3.0f;  // single spike
  Image img(16, 16, 3);
  for (auto& p : img.px) p = 50;
  Image out = overlay(cam, img, "");
  // Expected peak: argmax of the bilinear upscale of the map.
  Tensor<float> chw({1, 4, 4});
  std::copy_n(cam.values.data.data(), 16, chw.data.data());
  Tensor<float> up = bilinear_resize_chw(chw, 16, 16);
  int bx = -1, by = -1;
  float best = -1;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (up.at3(0, y, x) > best) {
        best = up.at3(0, y, x);
        bx = x;
        by = y;
      }
  const Color peak = cam_ramp(1.0);
  for (int c = 0; c < 3; ++c)
    EXPECT_EQ(out.at(by, bx, c),
              static_cast<std::uint8_t>(std::lround(0.5 * 50 + 0.5 * peak[c])));
}

TEST(Overlay, DeterministicBytesOnDisk) {
  Rng rng(6);
  ActivationMap<float> cam;
  cam.values = randu<float>({6, 6}, rng, 0, 1);
  Image img(12, 12, 3);
  for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const std::string a = (fs::temp_directory_path() / "fsgfa_cam_a.png").string();
  const std::string b = (fs::temp_directory_path() / "fsgfa_cam_b.png").string();
  overlay(cam, img, a);
  overlay(cam, img, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  EXPECT_EQ(ba, bb);
  fs::remove(a);
  fs::remove(b);
}

TEST(RawMap, GrayscaleNormalized) {
  ActivationMap<float> cam;
  cam.values = Tensor<float>({2, 2}, std::vector<float>{0.0f, 1.0f, 2.0f, 4.0f});
  Image img = raw_map_image(cam);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.at(0, 0, 0), 0);
  EXPECT_EQ(img.at(0, 1, 0), 64);
  EXPECT_EQ(img.at(1, 0, 0), 128);
  EXPECT_EQ(img.at(1, 1, 0), 255);
}
