#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "fsgfa/checkpoint.hpp"
#include "fsgfa/data.hpp"
#include "fsgfa/losses.hpp"
#include "fsgfa/networks.hpp"

namespace fsgfa {

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 100;
  int batch_size = 64;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 30;
  LossWeights weights;
  std::uint64_t seed = 0;
  ClsMode cls_mode = ClsMode::literal;
  // Algorithm treats the first batch of every epoch as a momentum restart;
  // this flag allows carrying momentum across epochs for comparison.
  bool reset_momentum_each_epoch = true;

  static TrainConfig paper() { return TrainConfig{}; }

  static TrainConfig desk() {
    TrainConfig c;
    c.epochs = 20;
    c.batch_size = 16;
    return c;
  }

  void validate() const {
    check(lr > 0, "train: learning rate must be positive");
    check(momentum >= 0 && momentum < 1, "train: momentum must be in [0, 1)");
    check(batch_size >= 1 && epochs >= 1, "train: batch_size and epochs must be >= 1");
    check(lr_decay_factor > 0 && lr_decay_every >= 1, "train: bad decay schedule");
  }
};

/// Step schedule: lr * factor^floor((epoch - 1) / every), epochs 1-based.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  check(epoch >= 1, "lr_at: epochs are 1-based");
  return cfg.lr * std::pow(cfg.lr_decay_factor, (epoch - 1) / cfg.lr_decay_every);
}

/// One velocity buffer per trainable parameter, matched by construction
/// order against collect_all().
template <class T>
struct MomentumState {
  std::vector<Tensor<T>> v;

  explicit MomentumState(ParamRefs<T>& refs) {
    for (auto* p : refs.params) v.emplace_back(p->value.shape);
  }

  /// v <- grad on a restart step, else v <- tau v + grad; then p -= lr v.
  void step(ParamRefs<T>& refs, T lr, T tau, bool restart) {
    for (std::size_t i = 0; i < refs.params.size(); ++i) {
      Parameter<T>& p = *refs.params[i];
      if (!p.trainable) continue;
      Tensor<T>& vel = v[i];
      if (restart) {
        for (std::int64_t j = 0; j < vel.numel(); ++j) vel[j] = p.grad[j];
      } else {
        for (std::int64_t j = 0; j < vel.numel(); ++j) vel[j] = tau * vel[j] + p.grad[j];
      }
      for (std::int64_t j = 0; j < vel.numel(); ++j) p.value[j] -= lr * vel[j];
    }
  }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double cls = 0;
  double pa = 0;
  double fa = 0;
  double total = 0;
};

inline void write_loss_csv(const std::string& path, const std::vector<EpochLog>& log,
                           const std::string& header_comment = "") {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "epoch,lr,L_cls,L_pa,L_fa,L_total\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%.8g,%.8g,%.8g,%.8g\n", e.epoch, e.lr, e.cls, e.pa,
                  e.fa, e.total);
    f << buf;
  }
}

/// Thrown when a batch produces a non-finite loss.
struct NonFiniteLoss : std::runtime_error {
  int epoch, batch;
  NonFiniteLoss(int e, int b)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(e) + ", batch " +
                           std::to_string(b)),
        epoch(e), batch(b) {}
};

/// The training loop: per epoch, per batch a full forward through the shape
/// prior, extractor, aggregation, embedding, classifier and decoder, the
/// three losses, one backward pass, and a momentum update. Heatmaps come
/// from the provider in the source frame and are carried through the random
/// crop into the network's feature resolution.
template <class T>
std::vector<EpochLog> train(ModelBundle<T>& bundle, const std::vector<LoadedSample>& samples,
                            const KeypointProvider& provider, const TrainConfig& cfg,
                            const std::string& checkpoint_path = "",
                            const std::function<void(const EpochLog&)>& on_epoch = nullptr,
                            const TrainStateData* resume = nullptr) {
  cfg.validate();
  check(!samples.empty(), "train: empty training split");
  if (!bundle.has_training_heads)
    throw std::runtime_error("train: bundle lacks training heads (test-subset checkpoint)");

  const int n = static_cast<int>(samples.size());
  const int input = bundle.config.input_size;
  const int dec = bundle.config.decode_size;
  const int fs = bundle.config.feature_size();

  // Per-sample caches: byte-domain source, normalized aligned target, label.
  std::vector<Tensor<T>> sources(samples.size());
  std::vector<Tensor<T>> targets(samples.size());
  parallel_for(n, [&](int i, int) {
    const LoadedSample& s = samples[static_cast<std::size_t>(i)];
    sources[static_cast<std::size_t>(i)] = to_chw<T>(s.image);
    targets[static_cast<std::size_t>(i)] = normalize_pixels(
        well_aligned_crop(sources[static_cast<std::size_t>(i)], s.keypoints, s.bbox, dec));
  });

  ParamRefs<T> refs = bundle.collect_all();
  MomentumState<T> mom(refs);
  int start_epoch = 1;
  if (resume) {
    start_epoch = resume->epoch + 1;
    std::map<std::string, const Tensor<float>*> table;
    for (auto& [name, t] : resume->momentum) table[name] = &t;
    for (std::size_t i = 0; i < refs.params.size(); ++i) {
      auto it = table.find(refs.params[i]->name);
      if (it == table.end())
        throw std::runtime_error("resume: missing momentum buffer for " + refs.params[i]->name);
      for (std::int64_t j = 0; j < mom.v[i].numel(); ++j)
        mom.v[i][j] = static_cast<T>((*it->second)[j]);
    }
  }

  std::vector<EpochLog> log;
  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i))]);
    Rng crop_rng(mix_seed(cfg.seed, 0xC809 + static_cast<std::uint64_t>(epoch)));

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    double weight_sum = 0;
    const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      const int bn = hi - lo;

      Tensor<T> x_r({bn, 3, input, input});
      Tensor<T> h_s({bn, 3, fs, fs});
      Tensor<T> x_w({bn, 3, dec, dec});
      std::vector<int> labels(static_cast<std::size_t>(bn));
      for (int k = 0; k < bn; ++k) {
        const int idx = order[static_cast<std::size_t>(lo + k)];
        const LoadedSample& s = samples[static_cast<std::size_t>(idx)];
        RandomCrop<T> rc = random_crop(sources[static_cast<std::size_t>(idx)], s.bbox, crop_rng,
                                       input);
        KeypointSet kr = rc.map_keypoints(provider.keypoints(s.id));
        Tensor<T> xr = normalize_pixels(std::move(rc.image));
        Tensor<T> prior = postprocess_z(render_heatmaps<T>(kr, 64, 2.0), fs);
        const Tensor<T>& xw = targets[static_cast<std::size_t>(idx)];
        std::copy_n(xr.data.data(), xr.numel(), x_r.data.data() + static_cast<std::int64_t>(k) * xr.numel());
        std::copy_n(prior.data.data(), prior.numel(),
                    h_s.data.data() + static_cast<std::int64_t>(k) * prior.numel());
        std::copy_n(xw.data.data(), xw.numel(), x_w.data.data() + static_cast<std::int64_t>(k) * xw.numel());
        labels[static_cast<std::size_t>(k)] = s.label;
      }

      Tape<T> tape;
      TrainForward f = bundle.forward_train(tape, tape.leaf(std::move(x_r)),
                                            tape.leaf(std::move(h_s)), BnMode::train);
      Var l_cls = cls_loss(tape, f.logits, labels, cfg.cls_mode);
      Var l_pa = pixel_align_loss(tape, tape.leaf(std::move(x_w)), f.x_recon);
      Var l_fa = feature_align_loss(tape, f.g_agg, f.g_emb);
      Var l = total_loss(tape, l_cls, l_pa, l_fa, cfg.weights);
      const double cls_v = tape.val(l_cls)[0];
      const double pa_v = tape.val(l_pa)[0];
      const double fa_v = tape.val(l_fa)[0];
      const double total_v = tape.val(l)[0];
      if (!std::isfinite(total_v)) throw NonFiniteLoss(epoch, b + 1);

      bundle.zero_grads();
      tape.backward(l);
      tape.accumulate_param_grads();
      const bool restart = (b == 0) && (cfg.reset_momentum_each_epoch || epoch == 1);
      mom.step(refs, static_cast<T>(lr), static_cast<T>(cfg.momentum), restart);

      el.cls += cls_v * bn;
      el.pa += pa_v * bn;
      el.fa += fa_v * bn;
      el.total += total_v * bn;
      weight_sum += bn;
    }
    el.cls /= weight_sum;
    el.pa /= weight_sum;
    el.fa /= weight_sum;
    el.total /= weight_sum;
    log.push_back(el);
    if (on_epoch) on_epoch(el);
  }

  if (!checkpoint_path.empty()) {
    TrainStateData ts;
    ts.epoch = cfg.epochs;
    for (std::size_t i = 0; i < refs.params.size(); ++i)
      ts.momentum.emplace_back(refs.params[i]->name, mom.v[i].template cast<float>());
    save_checkpoint(bundle, checkpoint_path, CheckpointSubset::full, &ts);
  }
  return log;
}

}  // namespace fsgfa
