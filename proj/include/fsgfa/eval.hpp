#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fsgfa/data.hpp"
#include "fsgfa/misalign.hpp"
#include "fsgfa/networks.hpp"

namespace fsgfa {

// ---------------------------------------------------------------------------
// pair lists
// ---------------------------------------------------------------------------

struct PairEntry {
  std::string a, b;
  bool same = false;
  int fold = 0;
};

struct PairList {
  std::vector<PairEntry> entries;
  int folds = 10;
};

/// Balanced verification pairs over held-out identities: each fold carries
/// the same number of positive and negative pairs.
inline PairList make_pairs(const std::vector<LoadedSample>& samples, int n_pairs, int folds,
                           Rng& rng) {
  check(folds >= 2, "make_pairs: need at least two folds");
  check(n_pairs % (2 * folds) == 0, "make_pairs: pair count must be divisible by 2 x folds");
  std::map<int, std::vector<const LoadedSample*>> by_label;
  for (const auto& s : samples) by_label[s.label].push_back(&s);
  std::vector<int> labels;
  for (auto& [l, v] : by_label) {
    check(v.size() >= 2, "make_pairs: every identity needs at least two images");
    labels.push_back(l);
  }
  check(labels.size() >= 2, "make_pairs: need at least two identities");

  PairList out;
  out.folds = folds;
  const int per_fold = n_pairs / folds;
  for (int f = 0; f < folds; ++f) {
    for (int i = 0; i < per_fold / 2; ++i) {
      const int l = labels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(labels.size()) - 1))];
      auto& pool = by_label[l];
      const int ai = static_cast<int>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1));
      int bi;
      do {
        bi = static_cast<int>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1));
      } while (bi == ai);
      out.entries.push_back(
          {pool[static_cast<std::size_t>(ai)]->id, pool[static_cast<std::size_t>(bi)]->id, true, f});
    }
    for (int i = 0; i < per_fold / 2; ++i) {
      const int la = labels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(labels.size()) - 1))];
      int lb;
      do {
        lb = labels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(labels.size()) - 1))];
      } while (lb == la);
      auto& pa = by_label[la];
      auto& pb = by_label[lb];
      out.entries.push_back(
          {pa[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pa.size()) - 1))]->id,
           pb[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pb.size()) - 1))]->id,
           false, f});
    }
  }
  return out;
}

inline void save_pairs(const PairList& pairs, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  for (const auto& e : pairs.entries)
    f << e.a << '\t' << e.b << '\t' << (e.same ? 1 : 0) << '\t' << e.fold << '\n';
}

inline PairList load_pairs(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  PairList out;
  out.folds = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PairEntry e;
    int same;
    if (!(ss >> e.a >> e.b >> same >> e.fold))
      throw std::runtime_error("malformed pair line: " + line);
    e.same = same != 0;
    out.folds = std::max(out.folds, e.fold + 1);
    out.entries.push_back(std::move(e));
  }
  check(!out.entries.empty(), "empty pair list: " + path);
  return out;
}

// ---------------------------------------------------------------------------
// feature extraction under the evaluation crop modes
// ---------------------------------------------------------------------------

enum class CropMode { optimal, margin, random, whole };

struct EvalCrop {
  CropMode mode = CropMode::optimal;
  MarginParams margin;          // for CropMode::margin
  std::uint64_t random_seed = 0;  // for CropMode::random; per-image margins

  static EvalCrop optimal() { return {CropMode::optimal, {}, 0}; }
  static EvalCrop preset(int id) { return {CropMode::margin, margin_preset(id), 0}; }
  static EvalCrop with_margin(const MarginParams& m) { return {CropMode::margin, m, 0}; }
  static EvalCrop random(std::uint64_t seed) { return {CropMode::random, {}, seed}; }
  static EvalCrop whole() { return {CropMode::whole, {}, 0}; }
};

using FeatureTable = std::map<std::string, std::vector<double>>;

template <class T>
std::vector<double> l2_normalize(const std::vector<T>& v) {
  double norm = 0;
  for (T x : v) norm += static_cast<double>(x) * static_cast<double>(x);
  norm = std::sqrt(norm);
  if (norm <= 0) throw std::runtime_error("cannot normalize a zero feature vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) / norm;
  return out;
}

/// Unit-norm inference features for every sample under the selected crop
/// mode. Random mode draws one margin per image, deterministically from the
/// crop seed and image id.
template <class T>
FeatureTable extract_features(ModelBundle<T>& bundle, const std::vector<LoadedSample>& samples,
                              const EvalCrop& crop) {
  const int input = bundle.config.input_size;
  FeatureTable out;
  const int batch = 32;
  for (std::size_t lo = 0; lo < samples.size(); lo += batch) {
    const std::size_t hi = std::min(samples.size(), lo + batch);
    const int bn = static_cast<int>(hi - lo);
    Tensor<T> x({bn, 3, input, input});
    for (int k = 0; k < bn; ++k) {
      const LoadedSample& s = samples[lo + static_cast<std::size_t>(k)];
      Tensor<T> chw = to_chw<T>(s.image);
      Tensor<T> cropped;
      switch (crop.mode) {
        case CropMode::optimal:
          cropped = well_aligned_crop(chw, s.keypoints, s.bbox, input);
          break;
        case CropMode::margin:
          cropped = crop_by_box(chw, apply_margin(s.bbox, crop.margin), input);
          break;
        case CropMode::random: {
          Rng rng(mix_seed(crop.random_seed, s.id));
          cropped = crop_by_box(chw, apply_margin(s.bbox, sample_random_margin(rng)), input);
          break;
        }
        case CropMode::whole:
          cropped = crop_by_box(chw, BBox::whole(s.image), input);
          break;
      }
      Tensor<T> norm = normalize_pixels(std::move(cropped));
      std::copy_n(norm.data.data(), norm.numel(),
                  x.data.data() + static_cast<std::int64_t>(k) * norm.numel());
    }
    Tensor<T> feats = bundle.forward_infer(x);
    const int dim = feats.dim(1);
    for (int k = 0; k < bn; ++k) {
      std::vector<T> row(feats.data.begin() + static_cast<std::int64_t>(k) * dim,
                         feats.data.begin() + static_cast<std::int64_t>(k + 1) * dim);
      out[samples[lo + static_cast<std::size_t>(k)].id] = l2_normalize(row);
    }
  }
  return out;
}

/// 1 - a . b over unit vectors; range [0, 2].
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  check(a.size() == b.size(), "cosine_distance: dimension mismatch");
  double dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

// ---------------------------------------------------------------------------
// verification protocol
// ---------------------------------------------------------------------------

struct VerificationResult {
  std::vector<double> fold_accuracy;
  std::vector<double> thresholds;  // chosen per fold on the other nine
  double mean = 0;
  double stddev = 0;  // population standard deviation over folds
};

namespace detail {

inline double accuracy_at(const std::vector<std::pair<double, bool>>& dist_same, double thr) {
  int correct = 0;
  for (const auto& [d, same] : dist_same) correct += (d <= thr) == same;
  return static_cast<double>(correct) / static_cast<double>(dist_same.size());
}

/// All decision thresholds worth trying: below the smallest distance, every
/// midpoint between consecutive sorted distances, above the largest.
inline std::vector<double> candidate_thresholds(std::vector<double> dists) {
  std::sort(dists.begin(), dists.end());
  dists.erase(std::unique(dists.begin(), dists.end()), dists.end());
  std::vector<double> out;
  out.push_back(dists.front() - 1.0);
  for (std::size_t i = 0; i + 1 < dists.size(); ++i)
    out.push_back((dists[i] + dists[i + 1]) / 2.0);
  out.push_back(dists.back() + 1.0);
  return out;
}

}  // namespace detail

/// LFW-style protocol: for each held-out fold, the threshold maximizing
/// accuracy on the other folds is applied to it; ties at the threshold count
/// as "same identity" (distance <= threshold).
inline VerificationResult verify_10fold(const PairList& pairs, const FeatureTable& features) {
  check(pairs.folds >= 2, "verify: need at least two folds");
  std::vector<std::vector<std::pair<double, bool>>> folds(static_cast<std::size_t>(pairs.folds));
  for (const auto& e : pairs.entries) {
    check(e.fold >= 0 && e.fold < pairs.folds, "verify: fold index out of range");
    auto ia = features.find(e.a);
    auto ib = features.find(e.b);
    if (ia == features.end() || ib == features.end())
      throw std::invalid_argument("verify: missing features for pair " + e.a + " / " + e.b);
    folds[static_cast<std::size_t>(e.fold)].emplace_back(
        cosine_distance(ia->second, ib->second), e.same);
  }
  for (int f = 0; f < pairs.folds; ++f)
    if (folds[static_cast<std::size_t>(f)].empty())
      throw std::invalid_argument("verify: fold " + std::to_string(f) + " is empty");

  VerificationResult res;
  for (int held = 0; held < pairs.folds; ++held) {
    std::vector<std::pair<double, bool>> train;
    std::vector<double> train_d;
    for (int f = 0; f < pairs.folds; ++f) {
      if (f == held) continue;
      for (const auto& p : folds[static_cast<std::size_t>(f)]) {
        train.push_back(p);
        train_d.push_back(p.first);
      }
    }
    double best_thr = 0, best_acc = -1;
    for (double thr : detail::candidate_thresholds(train_d)) {
      const double acc = detail::accuracy_at(train, thr);
      if (acc > best_acc) {
        best_acc = acc;
        best_thr = thr;
      }
    }
    res.thresholds.push_back(best_thr);
    res.fold_accuracy.push_back(
        detail::accuracy_at(folds[static_cast<std::size_t>(held)], best_thr));
  }
  double sum = 0;
  for (double a : res.fold_accuracy) sum += a;
  res.mean = sum / static_cast<double>(res.fold_accuracy.size());
  double var = 0;
  for (double a : res.fold_accuracy) var += (a - res.mean) * (a - res.mean);
  res.stddev = std::sqrt(var / static_cast<double>(res.fold_accuracy.size()));
  return res;
}

// ---------------------------------------------------------------------------
// ROC
// ---------------------------------------------------------------------------

/// Exact step curve of (FPR, TPR) vertices from (0,0) to (1,1), sweeping the
/// decision threshold over every distinct pair distance. `points` > 0 caps
/// the vertex count by uniform decimation (endpoints always kept); 0 keeps
/// the exact curve.
inline std::vector<std::pair<double, double>> roc_curve(const PairList& pairs,
                                                        const FeatureTable& features,
                                                        int points = 0) {
  std::vector<std::pair<double, bool>> ds;
  int pos = 0, neg = 0;
  for (const auto& e : pairs.entries) {
    ds.emplace_back(cosine_distance(features.at(e.a), features.at(e.b)), e.same);
    (e.same ? pos : neg)++;
  }
  check(pos > 0 && neg > 0, "roc: need both positive and negative pairs");
  std::sort(ds.begin(), ds.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < ds.size()) {
    const double d = ds[i].first;
    while (i < ds.size() && ds[i].first == d) {
      (ds[i].second ? tp : fp)++;
      ++i;
    }
    curve.emplace_back(static_cast<double>(fp) / neg, static_cast<double>(tp) / pos);
  }
  if (points > 2 && static_cast<int>(curve.size()) > points) {
    std::vector<std::pair<double, double>> dec;
    for (int k = 0; k < points; ++k)
      dec.push_back(curve[static_cast<std::size_t>(
          k * (static_cast<int>(curve.size()) - 1) / (points - 1))]);
    curve = std::move(dec);
  }
  return curve;
}

/// Trapezoidal area under an ROC curve; on the exact curve this equals the
/// pairwise-comparison (Mann-Whitney) statistic, ties counted half.
inline double roc_auc(const std::vector<std::pair<double, double>>& curve) {
  double auc = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    auc += (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second) / 2.0;
  return auc;
}

// ---------------------------------------------------------------------------
// identification
// ---------------------------------------------------------------------------

/// Rank-1 identification: fraction of probes whose nearest vector among the
/// gallery plus distractors is the gallery entry with the probe's label.
inline double identify_rank1(const std::vector<std::vector<double>>& gallery,
                             const std::vector<int>& gallery_labels,
                             const std::vector<std::vector<double>>& probes,
                             const std::vector<int>& probe_labels,
                             const std::vector<std::vector<double>>& distractors = {}) {
  check(!gallery.empty(), "identify: empty gallery");
  check(gallery.size() == gallery_labels.size() && probes.size() == probe_labels.size(),
        "identify: labels must match vectors");
  int hits = 0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    double best = std::numeric_limits<double>::infinity();
    int best_label = -1;
    bool best_is_gallery = false;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double d = cosine_distance(probes[p], gallery[g]);
      if (d < best) {
        best = d;
        best_label = gallery_labels[g];
        best_is_gallery = true;
      }
    }
    for (const auto& dis : distractors) {
      const double d = cosine_distance(probes[p], dis);
      if (d < best) {
        best = d;
        best_is_gallery = false;
      }
    }
    hits += best_is_gallery && best_label == probe_labels[p];
  }
  return probes.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(probes.size());
}

}  // namespace fsgfa
