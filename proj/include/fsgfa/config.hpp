#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fsgfa/data.hpp"
#include "fsgfa/train.hpp"

namespace fsgfa {

/// Run configuration: INI-style sections data / model / train / eval with
/// Table-scale defaults. Unknown sections or keys are rejected. Every run
/// derives its randomness from the single master seed in [data] through
/// named sub-seeds.
struct RunConfig {
  // [data]
  int identities = 20;
  int renders_per_id = 30;
  int val_identities = 10;
  int val_renders_per_id = 12;
  int canvas = 160;
  std::uint64_t seed = 7;  // master seed
  // [model]
  std::string model = "desk";
  // [train]
  TrainConfig train = TrainConfig::desk();
  double keypoint_noise = 0.0;
  // [eval]
  int pairs = 600;
  int folds = 10;
  int roc_points = 0;
  int distractors = 0;

  std::uint64_t data_seed() const { return mix_seed(seed, "data"); }
  std::uint64_t train_seed() const { return mix_seed(seed, "train"); }
  std::uint64_t eval_seed() const { return mix_seed(seed, "eval"); }
  std::uint64_t provider_seed() const { return mix_seed(seed, "provider"); }
  std::uint64_t init_seed() const { return mix_seed(seed, "init"); }

  GenConfig gen_config(const std::string& out_dir) const {
    GenConfig g;
    g.out_dir = out_dir;
    g.identities = identities;
    g.renders_per_id = renders_per_id;
    g.val_identities = val_identities;
    g.val_renders_per_id = val_renders_per_id;
    g.canvas = canvas;
    g.seed = data_seed();
    return g;
  }

  /// Canonical text form; identical configs produce identical strings.
  std::string resolved() const {
    std::ostringstream os;
    os << "[data]\n"
       << "identities = " << identities << "\n"
       << "renders_per_id = " << renders_per_id << "\n"
       << "val_identities = " << val_identities << "\n"
       << "val_renders_per_id = " << val_renders_per_id << "\n"
       << "canvas = " << canvas << "\n"
       << "seed = " << seed << "\n"
       << "[model]\n"
       << "config = " << model << "\n"
       << "[train]\n"
       << "lr = " << train.lr << "\n"
       << "momentum = " << train.momentum << "\n"
       << "epochs = " << train.epochs << "\n"
       << "batch_size = " << train.batch_size << "\n"
       << "lr_decay_factor = " << train.lr_decay_factor << "\n"
       << "lr_decay_every = " << train.lr_decay_every << "\n"
       << "alpha = " << train.weights.alpha << "\n"
       << "beta = " << train.weights.beta << "\n"
       << "gamma = " << train.weights.gamma << "\n"
       << "cls_mode = " << (train.cls_mode == ClsMode::literal ? "literal" : "per_sample")
       << "\n"
       << "reset_momentum_each_epoch = " << (train.reset_momentum_each_epoch ? "true" : "false")
       << "\n"
       << "keypoint_noise = " << keypoint_noise << "\n"
       << "[eval]\n"
       << "pairs = " << pairs << "\n"
       << "folds = " << folds << "\n"
       << "roc_points = " << roc_points << "\n"
       << "distractors = " << distractors << "\n";
    return os.str();
  }

  std::string hash_hex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(hash_str(resolved())));
    return buf;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in, const std::string& origin = "<config>") {
  RunConfig cfg;
  bool train_scale_set = false;
  std::string section, line;
  int lineno = 0;
  std::map<std::string, std::string> kv;  // "section.key" -> value
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = detail::trim(t.substr(1, t.size() - 2));
      if (section != "data" && section != "model" && section != "train" && section != "eval")
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos || section.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    kv[section + "." + detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
  }

  // The model choice fixes the training-scale defaults; read it first so an
  // explicit [train] key still wins.
  if (auto it = kv.find("model.config"); it != kv.end()) {
    cfg.model = it->second;
    kv.erase(it);
  }
  if (cfg.model == "paper") {
    cfg.train = TrainConfig::paper();
    train_scale_set = true;
  }
  (void)train_scale_set;

  auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return "";
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_int = [&](const std::string& key, int& dst) {
    std::string v = take(key);
    if (!v.empty()) dst = std::stoi(v);
  };
  auto take_double = [&](const std::string& key, double& dst) {
    std::string v = take(key);
    if (!v.empty()) dst = std::stod(v);
  };

  take_int("data.identities", cfg.identities);
  take_int("data.renders_per_id", cfg.renders_per_id);
  take_int("data.val_identities", cfg.val_identities);
  take_int("data.val_renders_per_id", cfg.val_renders_per_id);
  take_int("data.canvas", cfg.canvas);
  if (std::string v = take("data.seed"); !v.empty()) cfg.seed = std::stoull(v);

  take_double("train.lr", cfg.train.lr);
  take_double("train.momentum", cfg.train.momentum);
  take_int("train.epochs", cfg.train.epochs);
  take_int("train.batch_size", cfg.train.batch_size);
  take_double("train.lr_decay_factor", cfg.train.lr_decay_factor);
  take_int("train.lr_decay_every", cfg.train.lr_decay_every);
  take_double("train.alpha", cfg.train.weights.alpha);
  take_double("train.beta", cfg.train.weights.beta);
  take_double("train.gamma", cfg.train.weights.gamma);
  if (std::string v = take("train.cls_mode"); !v.empty())
    cfg.train.cls_mode = cls_mode_from_string(v);
  if (std::string v = take("train.reset_momentum_each_epoch"); !v.empty())
    cfg.train.reset_momentum_each_epoch = detail::parse_bool(v, "reset_momentum_each_epoch");
  take_double("train.keypoint_noise", cfg.keypoint_noise);

  take_int("eval.pairs", cfg.pairs);
  take_int("eval.folds", cfg.folds);
  take_int("eval.roc_points", cfg.roc_points);
  take_int("eval.distractors", cfg.distractors);

  if (!kv.empty())
    throw std::invalid_argument(origin + ": unknown key '" + kv.begin()->first + "'");
  if (cfg.model != "paper" && cfg.model != "desk")
    throw std::invalid_argument(origin + ": model config must be paper or desk");
  cfg.train.validate();
  check(cfg.keypoint_noise >= 0, "config: keypoint_noise must be non-negative");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file " + path);
  return parse_run_config(f, path);
}

}  // namespace fsgfa
