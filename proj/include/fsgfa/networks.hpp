#pragma once

#include <array>
#include <string>
#include <vector>

#include "fsgfa/layers.hpp"

namespace fsgfa {

/// Named size configuration for the four trainable sub-networks.
struct NetConfig {
  std::string name = "paper";
  int input_size = 224;
  int stem_channels = 64;
  std::array<int, 4> stage_mid_channels{32, 64, 128, 256};
  std::array<int, 4> stage_depths{3, 4, 6, 3};
  int embed_channels = 512;
  int num_classes = 8631;
  int decode_size = 112;
  int decoder_channels = 64;

  static NetConfig paper() { return NetConfig{}; }

  static NetConfig desk(int classes = 20) {
    NetConfig c;
    c.name = "desk";
    c.input_size = 112;
    c.stem_channels = 16;
    c.stage_mid_channels = {8, 16, 32, 64};
    c.stage_depths = {1, 1, 1, 1};
    c.embed_channels = 128;
    c.num_classes = classes;
    c.decode_size = 56;
    c.decoder_channels = 16;
    return c;
  }

  static NetConfig named(const std::string& n, int classes = -1) {
    if (n == "paper") {
      NetConfig c = paper();
      if (classes > 0) c.num_classes = classes;
      return c;
    }
    if (n == "desk") return desk(classes > 0 ? classes : 20);
    throw std::invalid_argument("unknown model config '" + n + "' (expected paper or desk)");
  }

  int feature_channels() const { return 4 * stage_mid_channels[3]; }
  int feature_size() const { return input_size / 4; }

  void validate() const {
    check(input_size > 0 && input_size % 4 == 0, "config: input_size must be a positive multiple of 4");
    check(stem_channels > 0 && embed_channels > 0 && decoder_channels > 0,
          "config: channel counts must be positive");
    for (int m : stage_mid_channels) check(m > 0, "config: stage mid channels must be positive");
    for (int d : stage_depths) check(d >= 1, "config: stage depths must be >= 1");
    check(num_classes >= 2, "config: num_classes must be >= 2");
    check(decode_size == 2 * feature_size(),
          "config: decode_size must be twice the feature map size (deconv doubles resolution)");
    if (name == "desk") check(num_classes <= 64, "config: desk num_classes must be <= 64");
  }
};

/// Per-component trainable parameter counts (running statistics excluded).
struct ParamCounts {
  std::int64_t extractor = 0;   // F
  std::int64_t decoder = 0;     // D
  std::int64_t embedding = 0;   // phi_tilde
  std::int64_t aggregation = 0; // phi
  std::int64_t classifier = 0;  // Q, b

  std::int64_t train_total() const {
    return extractor + decoder + embedding + aggregation + classifier;
  }
  std::int64_t test_subset() const { return extractor + embedding; }
};

/// Outputs of the training-time forward pass, all recorded on the caller's
/// tape. agg feeds the decoder; emb feeds the classifier; the pooled vectors
/// are the two ends of the feature-alignment loss.
struct TrainForward {
  Var h_f;      // face appearance feature maps
  Var h_c;      // [h_s || h_f]
  Var agg;      // phi(h_c)
  Var emb;      // phi_tilde(h_f)
  Var g_agg;    // pooled phi(h_c)
  Var g_emb;    // pooled phi_tilde(h_f)
  Var logits;
  Var x_recon;  // decoded well-aligned image, values in (-1, 1)
};

enum class NetComponent { extractor, decoder, embedding, aggregation, classifier };

/// The trainable bundle: extractor F, decoder D, channel aggregation phi,
/// feature-map embedding phi_tilde, and the classifier head (Q, b).
template <class T>
struct ModelBundle {
  NetConfig config;

  // F
  Conv2dLayer<T> stem_conv;
  BatchNorm2dLayer<T> stem_bn;
  std::vector<BottleneckBlock<T>> blocks;  // all four stages, flattened in order

  // phi / phi_tilde
  Conv2dLayer<T> phi_conv;
  BatchNorm2dLayer<T> phi_bn;
  Conv2dLayer<T> phit_conv;
  BatchNorm2dLayer<T> phit_bn;

  // D
  Conv2dLayer<T> dec_conv1;
  BatchNorm2dLayer<T> dec_bn1;
  Deconv2dLayer<T> dec_up;
  BatchNorm2dLayer<T> dec_up_bn;
  std::vector<BasicBlock<T>> dec_blocks;
  Conv2dLayer<T> dec_out;

  // classifier
  Parameter<T> q;
  Parameter<T> b;

  /// False for bundles restored from a test-subset checkpoint: only F and
  /// phi_tilde carry real values, and training-path entry points reject use.
  bool has_training_heads = true;

  ParamRefs<T> collect(NetComponent which) {
    ParamRefs<T> out;
    switch (which) {
      case NetComponent::extractor:
        stem_conv.collect(out);
        stem_bn.collect(out);
        for (auto& blk : blocks) blk.collect(out);
        break;
      case NetComponent::decoder:
        dec_conv1.collect(out);
        dec_bn1.collect(out);
        dec_up.collect(out);
        dec_up_bn.collect(out);
        for (auto& blk : dec_blocks) blk.collect(out);
        dec_out.collect(out);
        break;
      case NetComponent::embedding:
        phit_conv.collect(out);
        phit_bn.collect(out);
        break;
      case NetComponent::aggregation:
        phi_conv.collect(out);
        phi_bn.collect(out);
        break;
      case NetComponent::classifier:
        out.params.push_back(&q);
        out.params.push_back(&b);
        break;
    }
    return out;
  }

  ParamRefs<T> collect_all() {
    ParamRefs<T> out;
    for (NetComponent c : {NetComponent::extractor, NetComponent::decoder,
                           NetComponent::embedding, NetComponent::aggregation,
                           NetComponent::classifier}) {
      ParamRefs<T> part = collect(c);
      out.params.insert(out.params.end(), part.params.begin(), part.params.end());
      out.buffers.insert(out.buffers.end(), part.buffers.begin(), part.buffers.end());
    }
    return out;
  }

  /// Test-time subset: F plus phi_tilde.
  ParamRefs<T> collect_test_subset() {
    ParamRefs<T> out = collect(NetComponent::extractor);
    ParamRefs<T> emb = collect(NetComponent::embedding);
    out.params.insert(out.params.end(), emb.params.begin(), emb.params.end());
    out.buffers.insert(out.buffers.end(), emb.buffers.begin(), emb.buffers.end());
    return out;
  }

  void zero_grads() {
    for (auto* p : collect_all().params) p->zero_grad();
  }

  // ---- forward paths ----

  Var extract(Tape<T>& t, Var x, BnMode mode) {
    Var y = relu(t, stem_bn(t, stem_conv(t, x), mode));
    y = maxpool2d(t, y, 3, 2, 1);
    for (auto& blk : blocks) y = blk(t, y, mode);
    return y;
  }

  Var embed(Tape<T>& t, Var h_f, BnMode mode) {
    return relu(t, phit_bn(t, phit_conv(t, h_f), mode));
  }

  Var aggregate(Tape<T>& t, Var h_c, BnMode mode) {
    return phi_bn(t, phi_conv(t, h_c), mode);  // no activation
  }

  Var decode(Tape<T>& t, Var agg, BnMode mode) {
    Var y = relu(t, dec_bn1(t, dec_conv1(t, agg), mode));
    y = relu(t, dec_up_bn(t, dec_up(t, y), mode));
    for (auto& blk : dec_blocks) y = blk(t, y, mode);
    return tanh_op(t, dec_out(t, y));
  }

  Var classify(Tape<T>& t, Var g_emb) { return linear(t, g_emb, t.param(q), t.param(b)); }

  TrainForward forward_train(Tape<T>& t, Var x_r, Var h_s, BnMode mode) {
    if (!has_training_heads)
      throw std::runtime_error(
          "forward_train: bundle was restored from a test-subset checkpoint");
    const Tensor<T>& hv = t.val(h_s);
    check(hv.rank() == 4 && hv.dim(1) == 3,
          "forward_train: shape prior must be N x 3 x S x S, got " + hv.shape_string());
    TrainForward f;
    f.h_f = extract(t, x_r, mode);
    const Tensor<T>& fv = t.val(f.h_f);
    if (hv.dim(2) != fv.dim(2) || hv.dim(3) != fv.dim(3))
      throw std::invalid_argument("forward_train: heatmap " + hv.shape_string() +
                                  " does not align with feature maps " + fv.shape_string());
    f.h_c = concat_channels(t, h_s, f.h_f);
    f.agg = aggregate(t, f.h_c, mode);
    f.emb = embed(t, f.h_f, mode);
    f.g_agg = global_avg_pool(t, f.agg);
    f.g_emb = global_avg_pool(t, f.emb);
    f.logits = classify(t, f.g_emb);
    f.x_recon = decode(t, f.agg, mode);
    return f;
  }

  /// Inference path: g(phi_tilde(F(x))). Touches only F and phi_tilde; the
  /// shape prior, decoder, aggregation layer, and classifier never run.
  Tensor<T> forward_infer(const Tensor<T>& x, std::vector<std::string>* touched = nullptr) {
    Tape<T> t(/*grad_enabled=*/false);
    Var xv = t.leaf(x);
    Var g = global_avg_pool(t, embed(t, extract(t, xv, BnMode::eval), BnMode::eval));
    if (touched) *touched = t.touched_params();
    return t.val(g);
  }
};

template <class T>
ModelBundle<T> build(const NetConfig& config, Rng& rng) {
  config.validate();
  ModelBundle<T> m;
  m.config = config;

  m.stem_conv = Conv2dLayer<T>("F.stem.conv", 3, config.stem_channels, 7, 2, 3, false, rng);
  m.stem_bn = BatchNorm2dLayer<T>("F.stem.bn", config.stem_channels);
  int cin = config.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const int mid = config.stage_mid_channels[static_cast<std::size_t>(s)];
    for (int d = 0; d < config.stage_depths[static_cast<std::size_t>(s)]; ++d) {
      std::string name =
          "F.s" + std::to_string(s + 1) + ".b" + std::to_string(d);
      m.blocks.emplace_back(name, cin, mid, rng);
      cin = 4 * mid;
    }
  }

  const int fc = config.feature_channels();
  m.phi_conv = Conv2dLayer<T>("phi.conv", fc + 3, config.embed_channels, 1, 1, 0, false, rng);
  m.phi_bn = BatchNorm2dLayer<T>("phi.bn", config.embed_channels);
  m.phit_conv = Conv2dLayer<T>("phi_tilde.conv", fc, config.embed_channels, 1, 1, 0, false, rng);
  m.phit_bn = BatchNorm2dLayer<T>("phi_tilde.bn", config.embed_channels);

  const int dc = config.decoder_channels;
  m.dec_conv1 = Conv2dLayer<T>("D.conv1", config.embed_channels, dc, 3, 1, 1, false, rng);
  m.dec_bn1 = BatchNorm2dLayer<T>("D.bn1", dc);
  m.dec_up = Deconv2dLayer<T>("D.up", dc, dc, 3, 2, 1, 1, rng);
  m.dec_up_bn = BatchNorm2dLayer<T>("D.up_bn", dc);
  for (int i = 0; i < 3; ++i)
    m.dec_blocks.emplace_back("D.block" + std::to_string(i + 1), dc, rng);
  m.dec_out = Conv2dLayer<T>("D.out", dc, 3, 3, 1, 1, false, rng);

  m.q = Parameter<T>("cls.Q", uniform_init<T>({config.embed_channels, config.num_classes},
                                              config.embed_channels, rng));
  m.b = Parameter<T>("cls.b", Tensor<T>({config.num_classes}, T(0)));
  return m;
}

template <class T>
ParamCounts count_parameters(ModelBundle<T>& m) {
  ParamCounts c;
  c.extractor = m.collect(NetComponent::extractor).trainable_count();
  c.decoder = m.collect(NetComponent::decoder).trainable_count();
  c.embedding = m.collect(NetComponent::embedding).trainable_count();
  c.aggregation = m.collect(NetComponent::aggregation).trainable_count();
  c.classifier = m.collect(NetComponent::classifier).trainable_count();
  return c;
}

}  // namespace fsgfa
