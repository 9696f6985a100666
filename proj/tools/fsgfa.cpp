// Command-line front end: data generation, training, evaluation sweeps,
// misalignment crops, Grad-CAM and the parameter audit.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fsgfa/fsgfa.hpp"

namespace fs = std::filesystem;
using namespace fsgfa;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonArgs& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed_set) cfg.seed = c.seed_override;
  return cfg;
}

void log_resolved(const RunConfig& cfg, const std::string& out_dir) {
  std::cout << "config_hash=" << cfg.hash_hex() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "resolved_config.txt", std::ios::trunc);
    f << cfg.resolved();
  }
}

void add_common(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config_path, "run configuration file");
  cmd->add_option("--seed", c.seed_override, "master seed override")
      ->each([&c](const std::string&) { c.seed_set = true; });
}

LoadedCheckpoint<float> load_ckpt(const std::string& path) {
  if (!fs::exists(path)) throw std::invalid_argument("checkpoint not found: " + path);
  return load_checkpoint<float>(path);
}

BBox parse_bbox(const std::string& s) {
  BBox b;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &b.x1, &b.y1, &b.x2, &b.y2) != 4)
    throw std::invalid_argument("bbox must be x1,y1,x2,y2 - got '" + s + "'");
  check(b.valid(), "bbox must satisfy x1 < x2 and y1 < y2");
  return b;
}

int cmd_gen_data(const CommonArgs& common, const std::string& out, bool force, int identities,
                 int renders) {
  RunConfig cfg = resolve_config(common);
  if (identities > 0) cfg.identities = identities;
  if (renders > 0) cfg.renders_per_id = renders;
  log_resolved(cfg, out);
  GenConfig g = cfg.gen_config(out);
  g.force = force;
  DatasetManifest m = generate_dataset(g);
  std::cout << "wrote " << m.records.size() << " samples (" << m.split("train").size()
            << " train / " << m.split("val").size() << " val) to " << out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir, const std::string& out,
              int epochs, double alpha, double beta, double gamma, const std::string& cls_mode) {
  RunConfig cfg = resolve_config(common);
  if (epochs > 0) cfg.train.epochs = epochs;
  if (alpha >= 0) cfg.train.weights.alpha = alpha;
  if (beta >= 0) cfg.train.weights.beta = beta;
  if (gamma >= 0) cfg.train.weights.gamma = gamma;
  if (!cls_mode.empty()) cfg.train.cls_mode = cls_mode_from_string(cls_mode);
  log_resolved(cfg, out);

  DatasetManifest manifest = load_manifest(data_dir);
  auto samples = load_split(manifest, "train");
  const int classes = manifest.label_count("train");
  NetConfig nc = NetConfig::named(cfg.model, classes);
  Rng init(cfg.init_seed());
  auto bundle = build<float>(nc, init);
  auto provider = make_oracle_provider(samples, cfg.keypoint_noise, cfg.provider_seed());
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed();

  const std::string ckpt = (fs::path(out) / "checkpoint.fsgfa").string();
  auto log = train(bundle, samples, provider, tc, ckpt, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << "  lr " << e.lr << "  L_cls " << e.cls << "  L_pa "
              << e.pa << "  L_fa " << e.fa << "  L " << e.total << "\n";
  });
  write_loss_csv((fs::path(out) / "loss.csv").string(), log, "config_hash=" + cfg.hash_hex());
  save_checkpoint(bundle, (fs::path(out) / "checkpoint_test.fsgfa").string(),
                  CheckpointSubset::test);
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_eval_verify(const CommonArgs& common, const std::string& ckpt_path,
                    const std::string& data_dir, const std::string& out,
                    std::vector<int> margins, bool random_mode, bool whole_mode,
                    bool optimal_mode) {
  RunConfig cfg = resolve_config(common);
  log_resolved(cfg, out);
  LoadedCheckpoint<float> lc = load_ckpt(ckpt_path);
  DatasetManifest manifest = load_manifest(data_dir);
  auto val = load_split(manifest, "val");

  if (margins.empty() && !random_mode && !whole_mode && !optimal_mode) {
    margins = {1, 2, 3, 4, 5, 6, 7};
    random_mode = whole_mode = optimal_mode = true;
  }

  Rng pair_rng(mix_seed(cfg.eval_seed(), "pairs"));
  PairList pairs = make_pairs(val, cfg.pairs, cfg.folds, pair_rng);
  fs::create_directories(out);
  save_pairs(pairs, (fs::path(out) / "pairs.tsv").string());

  std::vector<std::pair<std::string, EvalCrop>> modes;
  if (optimal_mode) modes.emplace_back("optimal", EvalCrop::optimal());
  for (int id : margins) modes.emplace_back("m" + std::to_string(id), EvalCrop::preset(id));
  if (random_mode)
    modes.emplace_back("random", EvalCrop::random(mix_seed(cfg.eval_seed(), "random")));
  if (whole_mode) modes.emplace_back("whole", EvalCrop::whole());

  std::ofstream csv(fs::path(out) / "accuracy.csv", std::ios::trunc);
  csv << "# config_hash=" << cfg.hash_hex() << "\n";
  csv << "mode,mean,std\n";
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> all_curves;
  for (auto& [name, crop] : modes) {
    FeatureTable feats = extract_features(lc.bundle, val, crop);
    VerificationResult res = verify_10fold(pairs, feats);
    auto curve = roc_curve(pairs, feats, cfg.roc_points);
    write_roc_svg((fs::path(out) / ("roc_" + name + ".svg")).string(), {{name, curve}},
                  "ROC - " + name);
    all_curves.emplace_back(name, curve);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f\n", name.c_str(), res.mean, res.stddev);
    csv << buf;
    std::cout << name << ": " << res.mean * 100 << "% +- " << res.stddev * 100 << "%\n";
  }
  write_roc_svg((fs::path(out) / "roc_all.svg").string(), all_curves, "ROC - all modes");
  std::cout << "wrote " << (fs::path(out) / "accuracy.csv").string() << "\n";
  return 0;
}

int cmd_eval_identify(const CommonArgs& common, const std::string& ckpt_path,
                      const std::string& data_dir, const std::string& out, int distractors) {
  RunConfig cfg = resolve_config(common);
  if (distractors >= 0) cfg.distractors = distractors;
  log_resolved(cfg, out);
  LoadedCheckpoint<float> lc = load_ckpt(ckpt_path);
  DatasetManifest manifest = load_manifest(data_dir);
  auto val = load_split(manifest, "val");

  std::map<int, std::vector<const LoadedSample*>> by_label;
  for (const auto& s : val) by_label[s.label].push_back(&s);
  std::vector<LoadedSample> gallery_s, probe_s;
  for (auto& [label, group] : by_label) {
    gallery_s.push_back(*group.front());
    for (std::size_t i = 1; i < group.size(); ++i) probe_s.push_back(*group[i]);
  }
  check(!probe_s.empty(), "eval-identify: every identity has a single image, no probes left");

  std::vector<LoadedSample> distractor_s;
  for (int i = 0; i < cfg.distractors; ++i) {
    const int id = cfg.identities + cfg.val_identities + i;
    IdentitySpec spec = IdentitySpec::make(cfg.data_seed(), id);
    Rng rng(mix_seed(cfg.eval_seed(), 0xD15 + static_cast<std::uint64_t>(i)));
    RenderedSample r = render_identity_sample(spec, RenderJitter{}, rng, cfg.canvas);
    LoadedSample s;
    s.id = "distractor_" + std::to_string(i);
    s.image = std::move(r.image);
    s.keypoints = std::move(r.keypoints);
    s.bbox = r.bbox;
    s.label = -1;
    distractor_s.push_back(std::move(s));
  }

  auto collect = [&](const std::vector<LoadedSample>& ss) {
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    if (ss.empty()) return std::pair{feats, labels};
    FeatureTable t = extract_features(lc.bundle, ss, EvalCrop::optimal());
    for (const auto& s : ss) {
      feats.push_back(t.at(s.id));
      labels.push_back(s.label);
    }
    return std::pair{feats, labels};
  };
  auto [gf, gl] = collect(gallery_s);
  auto [pf, pl] = collect(probe_s);
  auto [df, dl] = collect(distractor_s);
  (void)dl;
  const double rank1 = identify_rank1(gf, gl, pf, pl, df);

  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "identify.csv", std::ios::trunc);
  csv << "# config_hash=" << cfg.hash_hex() << "\n";
  csv << "gallery,probes,distractors,rank1\n";
  csv << gallery_s.size() << ',' << probe_s.size() << ',' << distractor_s.size() << ',' << rank1
      << "\n";
  std::cout << "rank-1 identification: " << rank1 * 100 << "% (" << probe_s.size()
            << " probes, " << distractor_s.size() << " distractors)\n";
  return 0;
}

int cmd_crop(const std::string& image_path, const std::string& bbox_arg, const std::string& out,
             std::vector<int> presets, const std::string& custom, int size) {
  Image img = read_png(image_path);
  BBox box;
  if (!bbox_arg.empty()) {
    box = parse_bbox(bbox_arg);
  } else {
    const std::string sidecar = fs::path(image_path).replace_extension(".bbox").string();
    std::ifstream f(sidecar);
    if (!f) throw std::invalid_argument("no --bbox given and no sidecar " + sidecar);
    if (!(f >> box.x1 >> box.y1 >> box.x2 >> box.y2))
      throw std::invalid_argument("malformed bbox sidecar " + sidecar);
  }
  if (presets.empty() && custom.empty()) presets = {1, 2, 3, 4, 5, 6, 7};

  fs::create_directories(out);
  const std::string stem = fs::path(image_path).stem().string();
  std::ofstream tsv(fs::path(out) / (stem + "_boxes.tsv"), std::ios::trunc);
  tsv << "name\tx1\ty1\tx2\ty2\n";
  Tensor<float> chw = to_chw<float>(img);
  auto emit = [&](const std::string& name, const MarginParams& m) {
    BBox t = apply_margin(box, m);
    Tensor<float> crop = crop_by_box(chw, t, size);
    write_png((fs::path(out) / (stem + "__" + name + ".png")).string(), to_image(crop));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s\t%.3f\t%.3f\t%.3f\t%.3f\n", name.c_str(), t.x1, t.y1,
                  t.x2, t.y2);
    tsv << buf;
  };
  for (int id : presets) emit("m" + std::to_string(id), margin_preset(id));
  if (!custom.empty()) {
    MarginParams m;
    if (std::sscanf(custom.c_str(), "%lf,%lf,%lf,%lf", &m.m_x1, &m.m_x2, &m.m_y1, &m.m_y2) != 4)
      throw std::invalid_argument("--margin must be m_x1,m_x2,m_y1,m_y2");
    emit("custom", m);
  }
  std::cout << "wrote crops for " << stem << " to " << out << "\n";
  return 0;
}

int cmd_gradcam(const std::string& ckpt_path, const std::string& image_path, int target_class,
                const std::string& out) {
  LoadedCheckpoint<float> lc = load_ckpt(ckpt_path);
  if (!lc.bundle.has_training_heads)
    throw std::invalid_argument(
        "gradcam needs the classifier head; use a full checkpoint, not the test subset");
  Image img = read_png(image_path);
  const int input = lc.bundle.config.input_size;
  Tensor<float> net_in =
      normalize_pixels(crop_by_box<float>(to_chw<float>(img), BBox::whole(img), input));

  if (target_class < 0) {
    Tape<float> t(/*grad_enabled=*/false);
    Tensor<float> batch({1, 3, input, input});
    std::copy_n(net_in.data.data(), net_in.numel(), batch.data.data());
    Var logits = lc.bundle.classify(
        t, global_avg_pool(
               t, lc.bundle.embed(t, lc.bundle.extract(t, t.leaf(batch), BnMode::eval),
                                  BnMode::eval)));
    const Tensor<float>& lv = t.val(logits);
    target_class = 0;
    for (int c = 1; c < lv.dim(1); ++c)
      if (lv.at2(0, c) > lv.at2(0, target_class)) target_class = c;
  }

  ActivationMap<float> cam = grad_cam(lc.bundle, net_in, target_class);
  fs::create_directories(out);
  const std::string stem = fs::path(image_path).stem().string();
  const std::string base =
      (fs::path(out) / (stem + "__cam_" + std::to_string(target_class))).string();
  write_png(base + "_raw.png", raw_map_image(cam));
  Image resized = to_image(crop_by_box<float>(to_chw<float>(img), BBox::whole(img), input));
  overlay(cam, resized, base + ".png");
  std::cout << "class " << target_class << " -> " << base << ".png\n";
  return 0;
}

int cmd_count_params(const std::string& model, int classes) {
  NetConfig nc = NetConfig::named(model, classes);
  Rng rng(0);
  auto bundle = build<float>(nc, rng);
  ParamCounts c = count_parameters(bundle);
  auto row = [](const char* name, std::int64_t v) {
    std::printf("%-36s %12lld\n", name, static_cast<long long>(v));
  };
  row("Feature Extraction Network (F)", c.extractor);
  row("Face Image Decoder (D)", c.decoder);
  row("Fully Connected Layer (Q, b)", c.classifier);
  row("Feature Map Embedding Layer", c.embedding);
  row("Channel Aggregation Layer", c.aggregation);
  row("Total (training)", c.train_total());
  row("Total (test subset)", c.test_subset());
  if (model == "paper") {
    const bool ok = c.extractor == 5902528 && c.decoder == 555712 && c.embedding == 525312 &&
                    c.aggregation == 526848 && c.classifier == 4427703 &&
                    c.test_subset() == 6427840;
    if (!ok) {
      std::cerr << "error: paper-config parameter counts do not match the published table\n";
      return 1;
    }
    std::cout << "paper-config counts verified\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"face shape-guided feature alignment toolkit"};
  app.require_subcommand(1);
  std::function<int()> run;

  {
    auto* cmd = app.add_subcommand("gen-data", "generate the synthetic face dataset");
    auto common = std::make_shared<CommonArgs>();
    auto out = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    auto identities = std::make_shared<int>(-1);
    auto renders = std::make_shared<int>(-1);
    add_common(cmd, *common);
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--identities", *identities, "training identities");
    cmd->add_option("--renders-per-id", *renders, "renders per identity");
    cmd->add_flag("--force", *force, "overwrite a non-empty directory");
    cmd->callback([common, out, force, identities, renders, &run] {
      run = [=] { return cmd_gen_data(*common, *out, *force, *identities, *renders); };
    });
  }
  {
    auto* cmd = app.add_subcommand("train", "train a model on a generated dataset");
    auto common = std::make_shared<CommonArgs>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto epochs = std::make_shared<int>(-1);
    auto alpha = std::make_shared<double>(-1);
    auto beta = std::make_shared<double>(-1);
    auto gamma = std::make_shared<double>(-1);
    auto cls_mode = std::make_shared<std::string>();
    add_common(cmd, *common);
    cmd->add_option("--data", *data, "dataset directory")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--epochs", *epochs, "epoch count override");
    cmd->add_option("--alpha", *alpha, "classification loss weight");
    cmd->add_option("--beta", *beta, "pixel alignment loss weight");
    cmd->add_option("--gamma", *gamma, "feature alignment loss weight");
    cmd->add_option("--cls-mode", *cls_mode, "literal | per_sample");
    cmd->callback([common, data, out, epochs, alpha, beta, gamma, cls_mode, &run] {
      run = [=] {
        return cmd_train(*common, *data, *out, *epochs, *alpha, *beta, *gamma, *cls_mode);
      };
    });
  }
  {
    auto* cmd = app.add_subcommand("eval-verify", "verification accuracy under crop modes");
    auto common = std::make_shared<CommonArgs>();
    auto ckpt = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto margins = std::make_shared<std::vector<int>>();
    auto random_mode = std::make_shared<bool>(false);
    auto whole_mode = std::make_shared<bool>(false);
    auto optimal_mode = std::make_shared<bool>(false);
    add_common(cmd, *common);
    cmd->add_option("--checkpoint", *ckpt, "model checkpoint")->required();
    cmd->add_option("--data", *data, "dataset directory")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--margins", *margins, "margin preset ids (1..7)");
    cmd->add_flag("--random", *random_mode, "random alignment mode");
    cmd->add_flag("--whole", *whole_mode, "whole image, no detection");
    cmd->add_flag("--optimal", *optimal_mode, "optimal (keypoint) alignment");
    cmd->callback([common, ckpt, data, out, margins, random_mode, whole_mode, optimal_mode,
                   &run] {
      run = [=] {
        return cmd_eval_verify(*common, *ckpt, *data, *out, *margins, *random_mode, *whole_mode,
                               *optimal_mode);
      };
    });
  }
  {
    auto* cmd = app.add_subcommand("eval-identify", "rank-1 identification with distractors");
    auto common = std::make_shared<CommonArgs>();
    auto ckpt = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto distractors = std::make_shared<int>(-1);
    add_common(cmd, *common);
    cmd->add_option("--checkpoint", *ckpt, "model checkpoint")->required();
    cmd->add_option("--data", *data, "dataset directory")->required();
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--distractors", *distractors, "synthetic distractor count");
    cmd->callback([common, ckpt, data, out, distractors, &run] {
      run = [=] { return cmd_eval_identify(*common, *ckpt, *data, *out, *distractors); };
    });
  }
  {
    auto* cmd = app.add_subcommand("crop", "materialize margin-transformed crops");
    auto image = std::make_shared<std::string>();
    auto bbox = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto presets = std::make_shared<std::vector<int>>();
    auto custom = std::make_shared<std::string>();
    auto size = std::make_shared<int>(112);
    cmd->add_option("--image", *image, "input PNG")->required();
    cmd->add_option("--bbox", *bbox, "x1,y1,x2,y2 (defaults to the .bbox sidecar)");
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->add_option("--preset", *presets, "margin preset ids (1..7)");
    cmd->add_option("--margin", *custom, "custom m_x1,m_x2,m_y1,m_y2");
    cmd->add_option("--size", *size, "crop output size");
    cmd->callback([image, bbox, out, presets, custom, size, &run] {
      run = [=] { return cmd_crop(*image, *bbox, *out, *presets, *custom, *size); };
    });
  }
  {
    auto* cmd = app.add_subcommand("gradcam", "class activation maps");
    auto ckpt = std::make_shared<std::string>();
    auto image = std::make_shared<std::string>();
    auto cls = std::make_shared<int>(-1);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--checkpoint", *ckpt, "full model checkpoint")->required();
    cmd->add_option("--image", *image, "input PNG")->required();
    cmd->add_option("--class", *cls, "target class (default: argmax)");
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([ckpt, image, cls, out, &run] {
      run = [=] { return cmd_gradcam(*ckpt, *image, *cls, *out); };
    });
  }
  {
    auto* cmd = app.add_subcommand("count-params", "audit per-component parameter counts");
    auto model = std::make_shared<std::string>("paper");
    auto classes = std::make_shared<int>(-1);
    cmd->add_option("--model", *model, "paper | desk");
    cmd->add_option("--classes", *classes, "classifier output count override");
    cmd->callback([model, classes, &run] {
      run = [=] { return cmd_count_params(*model, *classes); };
    });
  }

  try {
    app.parse(argc, argv);
    return run();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
