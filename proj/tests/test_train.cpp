#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fsgfa/train.hpp"
#include "testutil.hpp"

using namespace fsgfa;
using testutil::randu;

namespace fs = std::filesystem;

namespace {

NetConfig tiny_config(int classes) {
  NetConfig c;
  c.name = "tiny";
  c.input_size = 32;
  c.stem_channels = 4;
  c.stage_mid_channels = {2, 2, 2, 4};
  c.stage_depths = {1, 1, 1, 1};
  c.embed_channels = 8;
  c.num_classes = classes;
  c.decode_size = 16;
  c.decoder_channels = 4;
  return c;
}

DatasetManifest tiny_dataset(const std::string& tag, int ids = 3, int renders = 4) {
  GenConfig cfg;
  cfg.out_dir = (fs::temp_directory_path() / ("fsgfa_train_" + tag)).string();
  fs::remove_all(cfg.out_dir);
  cfg.identities = ids;
  cfg.renders_per_id = renders;
  cfg.val_identities = 1;
  cfg.val_renders_per_id = 2;
  cfg.canvas = 96;
  cfg.seed = 5;
  return generate_dataset(cfg);
}

}  // namespace

TEST(Schedule, TableValues) {
  TrainConfig cfg;  // paper defaults: lr 0.1, decay 0.1 every 30
  EXPECT_DOUBLE_EQ(lr_at(1, cfg), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(30, cfg), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(31, cfg), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(60, cfg), 0.01);
  EXPECT_NEAR(lr_at(61, cfg), 0.001, 1e-15);
  EXPECT_THROW(lr_at(0, cfg), std::invalid_argument);
}

TEST(Schedule, UnitDecayFactorIsConstant) {
  TrainConfig cfg;
  cfg.lr_decay_factor = 1.0;
  for (int e = 1; e <= 100; e += 7) EXPECT_DOUBLE_EQ(lr_at(e, cfg), 0.1);
}

TEST(Momentum, TwoStepScalarRecurrence) {
  // Constant gradient g: step 1 moves -lr*g, step 2 moves -lr*(tau+1)*g.
  Parameter<double> w("w", Tensor<double>({1}, 10.0));
  ParamRefs<double> refs;
  refs.params.push_back(&w);
  MomentumState<double> mom(refs);
  const double g = 2.0, lr = 0.1, tau = 0.9;
  w.grad[0] = g;
  mom.step(refs, lr, tau, true);
  EXPECT_NEAR(w.value[0], 10.0 - 0.1 * g, 1e-15);
  w.grad[0] = g;
  mom.step(refs, lr, tau, false);
  EXPECT_NEAR(w.value[0], 10.0 - 0.1 * g - 0.19 * g, 1e-15);
}

TEST(Momentum, RestartUsesRawGradient) {
  Parameter<double> w("w", Tensor<double>({1}, 0.0));
  ParamRefs<double> refs;
  refs.params.push_back(&w);
  MomentumState<double> mom(refs);
  w.grad[0] = 3.0;
  mom.step(refs, 0.1, 0.9, true);
  EXPECT_DOUBLE_EQ(mom.v[0][0], 3.0);
  w.grad[0] = 1.0;
  mom.step(refs, 0.1, 0.9, true);  // the b = 1 branch again
  EXPECT_DOUBLE_EQ(mom.v[0][0], 1.0);
}

TEST(Momentum, QuadraticToyMatchesClosedFormRecurrence) {
  // f(w) = 0.5 a w^2, gradient a w; compare against a hand recurrence.
  const double a = 0.7, lr = 0.1, tau = 0.9;
  Parameter<double> w("w", Tensor<double>({1}, 5.0));
  ParamRefs<double> refs;
  refs.params.push_back(&w);
  MomentumState<double> mom(refs);
  double wref = 5.0, vref = 0.0;
  for (int step = 0; step < 10; ++step) {
    w.grad[0] = a * w.value[0];
    mom.step(refs, lr, tau, step == 0);
    const double gref = a * wref;
    vref = step == 0 ? gref : tau * vref + gref;
    wref -= lr * vref;
    EXPECT_NEAR(w.value[0], wref, 1e-7);
  }
}

TEST(Momentum, FrozenParameterNeverChanges) {
  Parameter<double> frozen("s", Tensor<double>({2}, 4.0), /*train=*/false);
  ParamRefs<double> refs;
  refs.params.push_back(&frozen);
  MomentumState<double> mom(refs);
  frozen.grad.fill(123.0);
  mom.step(refs, 0.1, 0.9, true);
  EXPECT_DOUBLE_EQ(frozen.value[0], 4.0);
  EXPECT_DOUBLE_EQ(frozen.value[1], 4.0);
}

TEST(Train, ProviderStateOutsideTheta) {
  Rng rng(1);
  auto m = build<float>(tiny_config(3), rng);
  for (auto* p : m.collect_all().params) {
    const bool known = p->name.rfind("F.", 0) == 0 || p->name.rfind("D.", 0) == 0 ||
                       p->name.rfind("phi.", 0) == 0 || p->name.rfind("phi_tilde.", 0) == 0 ||
                       p->name.rfind("cls.", 0) == 0;
    EXPECT_TRUE(known) << p->name;
  }
}

TEST(Train, TinyRunIsDeterministicAndLogged) {
  DatasetManifest data = tiny_dataset("det");
  auto samples = load_split(data, "train");
  OracleKeypointProvider provider = make_oracle_provider(samples);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 9;

  Rng r1(33);
  auto m1 = build<float>(tiny_config(3), r1);
  auto log1 = train(m1, samples, provider, cfg);
  Rng r2(33);
  auto m2 = build<float>(tiny_config(3), r2);
  auto log2 = train(m2, samples, provider, cfg);

  ASSERT_EQ(log1.size(), 2u);
  EXPECT_EQ(log1[0].epoch, 1);
  EXPECT_DOUBLE_EQ(log1[0].lr, 0.1);
  for (std::size_t i = 0; i < log1.size(); ++i) {
    EXPECT_TRUE(std::isfinite(log1[i].total));
    EXPECT_EQ(log1[i].cls, log2[i].cls);
    EXPECT_EQ(log1[i].pa, log2[i].pa);
    EXPECT_EQ(log1[i].fa, log2[i].fa);
    EXPECT_EQ(log1[i].total, log2[i].total);
  }
  auto p1 = m1.collect_all();
  auto p2 = m2.collect_all();
  for (std::size_t i = 0; i < p1.params.size(); ++i)
    EXPECT_EQ(p1.params[i]->value.data, p2.params[i]->value.data) << p1.params[i]->name;
  fs::remove_all(data.root);
}

TEST(Train, LossCsvFormat) {
  std::vector<EpochLog> log{{1, 0.1, 2.0, 3.0, 4.0, 9.0}, {2, 0.1, 1.0, 2.0, 3.0, 6.0}};
  const std::string path = (fs::temp_directory_path() / "fsgfa_loss.csv").string();
  write_loss_csv(path, log, "config_hash=abc123");
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "# config_hash=abc123");
  std::getline(f, line);
  EXPECT_EQ(line, "epoch,lr,L_cls,L_pa,L_fa,L_total");
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 2);
  fs::remove(path);
}

TEST(Checkpoint, RoundTripBitwiseForwardIdentity) {
  Rng rng(21);
  auto m = build<float>(tiny_config(4), rng);
  // Dirty the running stats so buffers carry information.
  Tensor<float> x = randu<float>({2, 3, 32, 32}, rng);
  {
    Tape<float> t;
    Tensor<float> hs({2, 3, 8, 8}, 0.5f);
    m.forward_train(t, t.leaf(x), t.leaf(hs), BnMode::train);
  }
  Tensor<float> probe = randu<float>({1, 3, 32, 32}, rng);
  Tensor<float> before = m.forward_infer(probe);

  const std::string path = (fs::temp_directory_path() / "fsgfa_ckpt.bin").string();
  save_checkpoint(m, path);
  LoadedCheckpoint<float> lc = load_checkpoint<float>(path);
  EXPECT_EQ(lc.subset, CheckpointSubset::full);
  Tensor<float> after = lc.bundle.forward_infer(probe);
  EXPECT_EQ(before.data, after.data);  // bitwise
  fs::remove(path);
}

TEST(Checkpoint, TruncatedFileRejected) {
  Rng rng(22);
  auto m = build<float>(tiny_config(4), rng);
  const std::string path = (fs::temp_directory_path() / "fsgfa_ckpt_trunc.bin").string();
  save_checkpoint(m, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 17));
  out.close();
  EXPECT_THROW(load_checkpoint<float>(path), std::runtime_error);
  std::ofstream bad(path, std::ios::binary | std::ios::trunc);
  bad << "NOTFSGFA-----";
  bad.close();
  EXPECT_THROW(load_checkpoint<float>(path), std::runtime_error);
  fs::remove(path);
}

TEST(Checkpoint, TestSubsetOmitsTrainingHeads) {
  Rng rng(23);
  auto m = build<float>(tiny_config(4), rng);
  const std::string path = (fs::temp_directory_path() / "fsgfa_ckpt_test.bin").string();
  save_checkpoint(m, path, CheckpointSubset::test);

  LoadedCheckpoint<float> lc = load_checkpoint<float>(path);
  EXPECT_EQ(lc.subset, CheckpointSubset::test);
  EXPECT_FALSE(lc.bundle.has_training_heads);

  // Inference agrees with the full bundle; the training path is rejected.
  Rng prng(24);
  Tensor<float> probe = randu<float>({1, 3, 32, 32}, prng);
  EXPECT_EQ(m.forward_infer(probe).data, lc.bundle.forward_infer(probe).data);
  Tape<float> t;
  Tensor<float> hs({1, 3, 8, 8}, 0.0f);
  EXPECT_THROW(lc.bundle.forward_train(t, t.leaf(probe), t.leaf(hs), BnMode::eval),
               std::runtime_error);

  // The file itself must not contain decoder/aggregation/classifier records.
  detail::Reader r(path);
  char magic[6];
  r.bytes(magic, 6);
  r.u8();
  detail::read_config(r);
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    detail::RawRecord rec = detail::read_record(r);
    const bool test_side =
        rec.name.rfind("F.", 0) == 0 || rec.name.rfind("phi_tilde.", 0) == 0;
    EXPECT_TRUE(test_side) << rec.name;
  }
  fs::remove(path);
}

TEST(Checkpoint, ResumeContinuesScheduleAndMatchesUninterrupted) {
  DatasetManifest data = tiny_dataset("resume");
  auto samples = load_split(data, "train");
  OracleKeypointProvider provider = make_oracle_provider(samples);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.seed = 13;
  cfg.lr_decay_every = 2;  // decay inside the window so resume must honor it

  // Uninterrupted run.
  Rng r1(55);
  auto m1 = build<float>(tiny_config(3), r1);
  auto log_full = train(m1, samples, provider, cfg);

  // Two epochs, checkpoint, then resume for the rest.
  const std::string path = (fs::temp_directory_path() / "fsgfa_resume.bin").string();
  Rng r2(55);
  auto m2 = build<float>(tiny_config(3), r2);
  TrainConfig half = cfg;
  half.epochs = 2;
  train(m2, samples, provider, half, path);
  LoadedCheckpoint<float> lc = load_checkpoint<float>(path);
  ASSERT_TRUE(lc.train_state.has_value());
  EXPECT_EQ(lc.train_state->epoch, 2);
  auto log_resumed =
      train(lc.bundle, samples, provider, cfg, "", nullptr, &*lc.train_state);

  ASSERT_EQ(log_resumed.size(), 2u);
  EXPECT_EQ(log_resumed[0].epoch, 3);
  EXPECT_DOUBLE_EQ(log_resumed[0].lr, lr_at(3, cfg));  // 0.01 after one decay
  // Same losses as the uninterrupted run's epochs 3 and 4.
  EXPECT_EQ(log_resumed[0].total, log_full[2].total);
  EXPECT_EQ(log_resumed[1].total, log_full[3].total);
  fs::remove(path);
  fs::remove_all(data.root);
}

TEST(Train, NonFiniteLossAbortsWithBatchIndex) {
  DatasetManifest data = tiny_dataset("blowup", 2, 2);
  auto samples = load_split(data, "train");
  OracleKeypointProvider provider = make_oracle_provider(samples);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 1;
  Rng rng(7);
  auto m = build<float>(tiny_config(2), rng);
  // Poison a parameter so the first forward produces NaN.
  m.q.value[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(m, samples, provider, cfg);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.epoch, 1);
    EXPECT_EQ(e.batch, 1);
  }
  fs::remove_all(data.root);
}
