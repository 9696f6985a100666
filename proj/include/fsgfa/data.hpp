#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fsgfa/image.hpp"
#include "fsgfa/misalign.hpp"
#include "fsgfa/png_io.hpp"
#include "fsgfa/rng.hpp"
#include "fsgfa/shapeprior.hpp"

namespace fsgfa {

// ---------------------------------------------------------------------------
// identity parameterization
// ---------------------------------------------------------------------------

/// Continuous parameters defining one synthetic person. Lattice levels keyed
/// by base-5 digits of the identity index guarantee that distinct identities
/// differ in at least one parameter by a full level gap (minus bounded
/// jitter), so no two identities collapse onto the same face.
struct IdentitySpec {
  int index = 0;
  double face_rx = 0;      // semi-axes as fractions of the canvas
  double face_aspect = 0;  // ry = rx * aspect
  double eye_spacing = 0;  // eye center offset as a fraction of face_rx
  double eye_size = 0;     // eye ry as a fraction of face_ry
  double nose_len = 0;     // as a fraction of face_ry
  double mouth_width = 0;  // as a fraction of face_rx
  double brow_arch = 0;
  Color skin{};
  Color iris{};
  Color mouth{};

  static IdentitySpec make(std::uint64_t master_seed, int index) {
    check(index >= 0, "identity index must be non-negative");
    Rng jitter(mix_seed(master_seed, 0x1D00 + static_cast<std::uint64_t>(index)));
    int d[8];
    int k = index;
    for (int i = 0; i < 8; ++i) {
      d[i] = k % 5;
      k /= 5;
    }
    auto level = [&](int digit, double lo, double hi) {
      const double gap = (hi - lo) / 4.0;
      return lo + d[digit] * gap + jitter.uniform(-0.2, 0.2) * gap;
    };
    IdentitySpec s;
    s.index = index;
    s.eye_spacing = level(0, 0.38, 0.58);
    const double tone = level(1, 0.75, 1.15);
    s.mouth_width = level(2, 0.38, 0.62);
    s.face_aspect = level(3, 1.15, 1.45);
    s.nose_len = level(4, 0.26, 0.40);
    s.brow_arch = level(5, 0.2, 1.0);
    s.face_rx = level(7, 0.24, 0.32);
    s.eye_size = 0.10 + 0.015 * d[6] + jitter.uniform(-0.004, 0.004);
    s.skin = scale_color(Color{208, 172, 148}, tone);
    static const Color irises[5] = {
        {60, 40, 25}, {40, 60, 95}, {45, 80, 50}, {90, 70, 40}, {70, 70, 70}};
    s.iris = irises[d[6]];
    s.mouth = scale_color(Color{165, 80, 80}, 0.85 + 0.1 * d[2]);
    return s;
  }
};

/// Per-render pose/scale/illumination ranges. Defaults keep the face well
/// inside the canvas.
struct RenderJitter {
  double rotate_deg = 12.0;
  double scale = 0.12;
  double translate = 0.05;  // fraction of canvas
  double illumination = 0.15;

  static RenderJitter none() { return RenderJitter{0, 0, 0, 0}; }
};

struct RenderedSample {
  Image image;
  KeypointSet keypoints;
  BBox bbox;
};

namespace detail {

inline std::pair<double, double> on_ellipse(double cx, double cy, double rx, double ry,
                                            double deg) {
  const double a = deg * 3.14159265358979323846 / 180.0;
  return {cx + rx * std::cos(a), cy + ry * std::sin(a)};
}

}  // namespace detail

/// Renders one face image with its 68 exact keypoints and a tight face box.
/// Deterministic for a given (spec, rng state).
inline RenderedSample render_identity_sample(const IdentitySpec& spec, const RenderJitter& jitter,
                                             Rng& rng, int canvas = 160) {
  check(canvas >= 64, "render: canvas too small");
  const double S = canvas;
  const double theta = jitter.rotate_deg * rng.uniform(-1.0, 1.0) * 3.14159265358979323846 / 180.0;
  const double scl = 1.0 + jitter.scale * rng.uniform(-1.0, 1.0);
  const double cx = S / 2 + jitter.translate * S * rng.uniform(-1.0, 1.0);
  const double cy = S / 2 + jitter.translate * S * rng.uniform(-1.0, 1.0);
  const double illum = 1.0 + jitter.illumination * rng.uniform(-1.0, 1.0);

  const double rx = spec.face_rx * S * scl;
  const double ry = spec.face_rx * spec.face_aspect * S * scl;

  // Face-frame coordinates (origin at face center, y down) mapped through
  // rotation + translation.
  const double ct = std::cos(theta), st = std::sin(theta);
  auto place = [&](double fx, double fy) -> std::pair<double, double> {
    return {cx + fx * ct - fy * st, cy + fx * st + fy * ct};
  };

  Image img(canvas, canvas, 3);
  {
    const double bg = rng.uniform(0.0, 1.0);
    Color top = scale_color(Color{70, 90, 120}, 0.7 + 0.6 * bg);
    Color bot = scale_color(Color{150, 160, 175}, 0.7 + 0.6 * (1.0 - bg));
    fill_vertical_gradient(img, top, bot);
  }

  const Color skin = scale_color(spec.skin, illum);
  const Color dark = scale_color(spec.skin, illum * 0.55);
  const Color white = scale_color(Color{245, 245, 245}, illum);
  const Color iris = scale_color(spec.iris, illum);
  const Color mouthc = scale_color(spec.mouth, illum);

  fill_ellipse(img, cx, cy, rx, ry, theta, skin);

  const double eye_cy = -0.18 * ry;
  const double eye_dx = spec.eye_spacing * rx;
  const double eye_ry = spec.eye_size * ry;
  const double eye_rx = 1.6 * eye_ry;

  // Eyebrows: five-point arcs drawn as joined thick segments.
  std::array<std::array<std::pair<double, double>, 5>, 2> brows;
  for (int side = 0; side < 2; ++side) {
    const double ex = side == 0 ? -eye_dx : eye_dx;
    for (int i = 0; i < 5; ++i) {
      const double t = i / 4.0;
      const double fx = ex + (t - 0.5) * 2.6 * eye_rx;
      const double arch = spec.brow_arch * eye_ry * (1.0 - (2 * t - 1) * (2 * t - 1));
      const double fy = eye_cy - 2.1 * eye_ry - arch;
      brows[static_cast<std::size_t>(side)][static_cast<std::size_t>(i)] = place(fx, fy);
    }
    for (int i = 0; i + 1 < 5; ++i) {
      auto [ax, ay] = brows[static_cast<std::size_t>(side)][static_cast<std::size_t>(i)];
      auto [bx, by] = brows[static_cast<std::size_t>(side)][static_cast<std::size_t>(i + 1)];
      fill_segment(img, ax, ay, bx, by, std::max(2.0, 0.5 * eye_ry), dark);
    }
  }

  // Eyes: sclera + iris; drawn slightly larger than the keypoint ellipse so
  // the eye landmarks sit strictly inside the painted region.
  for (int side = 0; side < 2; ++side) {
    const double ex = side == 0 ? -eye_dx : eye_dx;
    auto [px, py] = place(ex, eye_cy);
    fill_ellipse(img, px, py, 1.25 * eye_rx, 1.35 * eye_ry, theta, white);
    fill_ellipse(img, px, py, 0.55 * eye_ry, 0.55 * eye_ry, theta, iris);
  }

  // Nose: bridge segment plus nostril bar.
  const double nose_top = -0.10 * ry;
  const double nose_tip = nose_top + spec.nose_len * ry;
  {
    auto [ax, ay] = place(0, nose_top);
    auto [bx, by] = place(0, nose_tip);
    fill_segment(img, ax, ay, bx, by, std::max(2.0, 0.20 * eye_ry * 2), dark);
    auto [lx, ly] = place(-0.16 * rx, nose_tip + 0.5 * eye_ry);
    auto [rx2, ry2] = place(0.16 * rx, nose_tip + 0.5 * eye_ry);
    fill_segment(img, lx, ly, rx2, ry2, std::max(2.0, 0.4 * eye_ry), dark);
  }

  // Mouth: filled ellipse with a darker inner lip line.
  const double mouth_cy = 0.55 * ry;
  const double mouth_rx = spec.mouth_width * rx;
  const double mouth_ry = 0.35 * mouth_rx;
  {
    auto [px, py] = place(0, mouth_cy);
    fill_ellipse(img, px, py, mouth_rx, mouth_ry, theta, mouthc);
    fill_ellipse(img, px, py, 0.55 * mouth_rx, 0.45 * mouth_ry, theta,
                 scale_color(mouthc, 0.6));
  }

  // Keypoints, standard 68-point ordering (0-based here).
  KeypointSet kps;
  kps.frame_width = canvas;
  kps.frame_height = canvas;
  kps.points.resize(kNumKeypoints);
  // 1-17: boundary along the lower face ellipse, left ear to right ear.
  for (int i = 0; i < 17; ++i) {
    const double deg = 180.0 - i * (180.0 / 16.0);
    auto [fx, fy] = detail::on_ellipse(0, 0, rx, ry, deg);
    kps.points[static_cast<std::size_t>(i)] = place(fx, fy);
  }
  // 18-27: eyebrows.
  for (int side = 0; side < 2; ++side)
    for (int i = 0; i < 5; ++i)
      kps.points[static_cast<std::size_t>(17 + 5 * side + i)] =
          brows[static_cast<std::size_t>(side)][static_cast<std::size_t>(i)];
  // 28-31: nose bridge; 32-36: nostril row.
  for (int i = 0; i < 4; ++i) {
    const double fy = nose_top + (nose_tip - nose_top) * i / 3.0;
    kps.points[static_cast<std::size_t>(27 + i)] = place(0, fy);
  }
  for (int i = 0; i < 5; ++i) {
    const double fx = (-0.16 + 0.08 * i) * rx;
    kps.points[static_cast<std::size_t>(31 + 1 + i)] = place(fx, nose_tip + 0.5 * eye_ry);
  }
  // 37-48: eyes, corners and lids on the eye ellipse.
  static const double eye_deg[6] = {180, 240, 300, 0, 60, 120};
  for (int side = 0; side < 2; ++side) {
    const double ex = side == 0 ? -eye_dx : eye_dx;
    for (int i = 0; i < 6; ++i) {
      auto [fx, fy] = detail::on_ellipse(ex, eye_cy, eye_rx, eye_ry, eye_deg[i]);
      kps.points[static_cast<std::size_t>(36 + 6 * side + i)] = place(fx, fy);
    }
  }
  // 49-60: outer lip; 61-68: inner lip.
  for (int i = 0; i < 12; ++i) {
    auto [fx, fy] = detail::on_ellipse(0, mouth_cy, mouth_rx, mouth_ry, 180.0 + 30.0 * i);
    kps.points[static_cast<std::size_t>(48 + i)] = place(fx, fy);
  }
  for (int i = 0; i < 8; ++i) {
    auto [fx, fy] =
        detail::on_ellipse(0, mouth_cy, 0.55 * mouth_rx, 0.45 * mouth_ry, 180.0 + 45.0 * i);
    kps.points[static_cast<std::size_t>(60 + i)] = place(fx, fy);
  }

  // Tight box around the rotated face ellipse.
  const double hw = std::sqrt(rx * ct * rx * ct + ry * st * ry * st);
  const double hh = std::sqrt(rx * st * rx * st + ry * ct * ry * ct);
  RenderedSample out;
  out.image = std::move(img);
  out.keypoints = std::move(kps);
  out.bbox = BBox{cx - hw, cy - hh, cx + hw, cy + hh};
  return out;
}

// ---------------------------------------------------------------------------
// preprocessing pipelines
// ---------------------------------------------------------------------------

/// Least-squares similarity fit (scale + rotation + translation, no
/// reflection) from five source points to five destination points.
inline Affine fit_similarity(const std::array<std::pair<double, double>, 5>& src,
                             const std::array<std::pair<double, double>, 5>& dst) {
  Eigen::Matrix<double, 5, 2> s, d;
  for (int i = 0; i < 5; ++i) {
    s(i, 0) = src[static_cast<std::size_t>(i)].first;
    s(i, 1) = src[static_cast<std::size_t>(i)].second;
    d(i, 0) = dst[static_cast<std::size_t>(i)].first;
    d(i, 1) = dst[static_cast<std::size_t>(i)].second;
  }
  const Eigen::RowVector2d sm = s.colwise().mean();
  const Eigen::RowVector2d dm = d.colwise().mean();
  s.rowwise() -= sm;
  d.rowwise() -= dm;
  const double svar = s.squaredNorm() / 5.0;
  if (svar < 1e-9)
    throw std::invalid_argument("similarity fit: degenerate reference points");
  Eigen::Matrix2d cov = d.transpose() * s / 5.0;
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-9 * std::max(1.0, svd.singularValues()(0)))
    throw std::invalid_argument("similarity fit: collinear reference points");
  Eigen::Matrix2d sgn = Eigen::Matrix2d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) sgn(1, 1) = -1;
  Eigen::Matrix2d rot = svd.matrixU() * sgn * svd.matrixV().transpose();
  const double scale = (svd.singularValues().asDiagonal() * sgn).trace() / svar;
  Eigen::Matrix2d a = scale * rot;
  Eigen::Vector2d t = dm.transpose() - a * sm.transpose();
  Affine out;
  out.m[0] = a(0, 0);
  out.m[1] = a(0, 1);
  out.m[2] = t(0);
  out.m[3] = a(1, 0);
  out.m[4] = a(1, 1);
  out.m[5] = t(1);
  return out;
}

/// Five alignment references derived from the 68 landmarks: eye centers,
/// nose tip, mouth corners.
inline std::array<std::pair<double, double>, 5> reference_points(const KeypointSet& kps) {
  kps.validate();
  auto mean_of = [&](int lo, int hi) {  // 0-based inclusive
    double sx = 0, sy = 0;
    for (int i = lo; i <= hi; ++i) {
      sx += kps.points[static_cast<std::size_t>(i)].first;
      sy += kps.points[static_cast<std::size_t>(i)].second;
    }
    const int n = hi - lo + 1;
    return std::pair<double, double>{sx / n, sy / n};
  };
  return {mean_of(36, 41), mean_of(42, 47), kps.points[30], kps.points[48], kps.points[54]};
}

/// Canonical five-point template, stored for a 112 x 112 crop and scaled
/// linearly for other output sizes.
inline std::array<std::pair<double, double>, 5> canonical_template(int out) {
  static const std::array<std::pair<double, double>, 5> base = {{{38.2946, 51.6963},
                                                                 {73.5318, 51.5014},
                                                                 {56.0252, 71.7366},
                                                                 {41.5493, 92.3655},
                                                                 {70.7299, 92.2041}}};
  const double f = out / 112.0;
  std::array<std::pair<double, double>, 5> t = base;
  for (auto& [x, y] : t) {
    x *= f;
    y *= f;
  }
  return t;
}

/// Well-aligned pipeline: similarity transform from the five derived
/// reference points onto the canonical template, then warp to out x out.
template <class T>
Tensor<T> well_aligned_crop(const Tensor<T>& src_chw, const KeypointSet& kps,
                            const BBox& /*bbox*/, int out) {
  Affine fwd = fit_similarity(reference_points(kps), canonical_template(out));
  return warp_affine(src_chw, fwd, out, out, T(127.5));
}

/// Randomly-cropped pipeline result plus the diagonal map from source
/// coordinates into the crop frame (needed to carry keypoints along).
template <class T>
struct RandomCrop {
  Tensor<T> image;
  double ax = 1, bx = 0, ay = 1, by = 0;  // x' = ax x + bx, y' = ay y + by

  std::pair<double, double> map(double x, double y) const { return {ax * x + bx, ay * y + by}; }

  KeypointSet map_keypoints(const KeypointSet& kps) const {
    KeypointSet out = kps;
    out.frame_width = image.dim(2);
    out.frame_height = image.dim(1);
    for (auto& [x, y] : out.points) {
      auto [mx, my] = map(x, y);
      x = mx;
      y = my;
    }
    return out;
  }
};

/// Over-sampling pipeline: expand the box by a margin, clamp to the frame,
/// resize to (out + out/7) square, take a random out x out window. The
/// margin and window scale with the output (10 px and 256->224 at paper
/// scale, halved at desk scale).
template <class T>
RandomCrop<T> random_crop(const Tensor<T>& src_chw, const BBox& bbox, Rng& rng, int out) {
  check(bbox.valid(), "random_crop: invalid bounding box");
  const double margin = 10.0 * out / 224.0;
  const int mid = out + out / 7;
  const double W = src_chw.dim(2), H = src_chw.dim(1);
  BBox b;
  b.x1 = std::clamp(bbox.x1 - margin, 0.0, W - 1.0);
  b.y1 = std::clamp(bbox.y1 - margin, 0.0, H - 1.0);
  b.x2 = std::clamp(bbox.x2 + margin, b.x1 + 1.0, W);
  b.y2 = std::clamp(bbox.y2 + margin, b.y1 + 1.0, H);
  Tensor<T> resized = crop_resize(src_chw, b.x1, b.y1, b.x2, b.y2, mid, mid, T(127.5));
  const int span = mid - out;
  const int ox = static_cast<int>(rng.uniform_int(0, span));
  const int oy = static_cast<int>(rng.uniform_int(0, span));
  RandomCrop<T> rc;
  rc.image = crop_resize(resized, ox, oy, ox + out, oy + out, out, out, T(127.5));
  // source -> mid-resize -> window offset
  rc.ax = mid / (b.x2 - b.x1);
  rc.ay = mid / (b.y2 - b.y1);
  rc.bx = -b.x1 * rc.ax - ox;
  rc.by = -b.y1 * rc.ay - oy;
  return rc;
}

// ---------------------------------------------------------------------------
// on-disk dataset
// ---------------------------------------------------------------------------

struct SampleRecord {
  std::string split;  // "train" | "val"
  std::string image;  // path relative to the dataset root
  std::string kps;
  BBox bbox;
  int label = 0;
};

struct DatasetManifest {
  std::string root;
  std::vector<SampleRecord> records;

  std::vector<const SampleRecord*> split(const std::string& name) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records)
      if (r.split == name) out.push_back(&r);
    return out;
  }

  int label_count(const std::string& split_name) const {
    int mx = -1;
    for (const auto& r : records)
      if (r.split == split_name) mx = std::max(mx, r.label);
    return mx + 1;
  }
};

inline void write_keypoints_file(const std::string& path, const KeypointSet& kps) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  char buf[64];
  for (const auto& [x, y] : kps.points) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f\n", x, y);
    f << buf;
  }
}

inline KeypointSet read_keypoints_file(const std::string& path, int frame_w, int frame_h) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  KeypointSet kps;
  kps.frame_width = frame_w;
  kps.frame_height = frame_h;
  double x, y;
  while (f >> x >> y) kps.points.emplace_back(x, y);
  kps.validate();
  return kps;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  char buf[256];
  for (const auto& r : m.records) {
    std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%.3f\t%.3f\t%.3f\t%.3f\t%d\n", r.split.c_str(),
                  r.image.c_str(), r.kps.c_str(), r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2,
                  r.label);
    f << buf;
  }
}

inline DatasetManifest load_manifest(const std::string& root) {
  const std::string path = root + "/manifest.tsv";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  DatasetManifest m;
  m.root = root;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SampleRecord r;
    if (!(ss >> r.split >> r.image >> r.kps >> r.bbox.x1 >> r.bbox.y1 >> r.bbox.x2 >> r.bbox.y2 >>
          r.label))
      throw std::runtime_error("malformed manifest line: " + line);
    m.records.push_back(std::move(r));
  }
  check(!m.records.empty(), "manifest is empty: " + path);
  return m;
}

struct GenConfig {
  std::string out_dir;
  int identities = 20;
  int renders_per_id = 30;
  int val_identities = 10;
  int val_renders_per_id = 12;
  int canvas = 160;
  std::uint64_t seed = 7;
  bool force = false;
};

/// Generates the synthetic dataset tree:
///   root/{train,val}/id_<k>/img_<j>.png (+ .kps, .bbox), manifest.tsv.
/// Train and val identities are disjoint; labels are contiguous from 0.
inline DatasetManifest generate_dataset(const GenConfig& cfg) {
  namespace fs = std::filesystem;
  check(cfg.identities >= 1 && cfg.renders_per_id >= 1, "gen-data: empty train split requested");
  fs::path root(cfg.out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !cfg.force)
    throw std::invalid_argument("gen-data: output directory " + cfg.out_dir +
                                " is not empty (use --force to overwrite)");
  fs::create_directories(root);

  DatasetManifest m;
  m.root = cfg.out_dir;
  const int total_ids = cfg.identities + cfg.val_identities;
  for (int id = 0; id < total_ids; ++id) {
    const bool train = id < cfg.identities;
    const std::string split = train ? "train" : "val";
    const int renders = train ? cfg.renders_per_id : cfg.val_renders_per_id;
    IdentitySpec spec = IdentitySpec::make(cfg.seed, id);
    fs::path dir = root / split / ("id_" + std::to_string(id));
    fs::create_directories(dir);
    for (int j = 0; j < renders; ++j) {
      Rng rng(mix_seed(cfg.seed, 0xF00D + static_cast<std::uint64_t>(id) * 100003 +
                                     static_cast<std::uint64_t>(j)));
      RenderedSample s = render_identity_sample(spec, RenderJitter{}, rng, cfg.canvas);
      const std::string stem = "img_" + std::to_string(j);
      SampleRecord r;
      r.split = split;
      r.image = split + "/id_" + std::to_string(id) + "/" + stem + ".png";
      r.kps = split + "/id_" + std::to_string(id) + "/" + stem + ".kps";
      r.bbox = s.bbox;
      r.label = id;
      write_png((root / r.image).string(), s.image);
      write_keypoints_file((root / r.kps).string(), s.keypoints);
      {
        std::ofstream bf((dir / (stem + ".bbox")).string(), std::ios::trunc);
        char buf[128];
        std::snprintf(buf, sizeof buf, "%.3f %.3f %.3f %.3f\n", s.bbox.x1, s.bbox.y1, s.bbox.x2,
                      s.bbox.y2);
        bf << buf;
      }
      m.records.push_back(std::move(r));
    }
  }
  save_manifest(m, (root / "manifest.tsv").string());
  return m;
}

/// Everything about one sample loaded into memory.
struct LoadedSample {
  std::string id;  // relative image path, the stable image identifier
  Image image;
  KeypointSet keypoints;
  BBox bbox;
  int label = 0;
};

inline LoadedSample load_sample(const DatasetManifest& m, const SampleRecord& r) {
  LoadedSample s;
  s.id = r.image;
  s.image = read_png(m.root + "/" + r.image);
  s.keypoints = read_keypoints_file(m.root + "/" + r.kps, s.image.width, s.image.height);
  s.bbox = r.bbox;
  s.label = r.label;
  return s;
}

inline std::vector<LoadedSample> load_split(const DatasetManifest& m, const std::string& split) {
  std::vector<LoadedSample> out;
  for (const auto* r : m.split(split)) out.push_back(load_sample(m, *r));
  return out;
}

/// Ground-truth keypoint provider over a loaded split (optionally noisy).
inline OracleKeypointProvider make_oracle_provider(const std::vector<LoadedSample>& samples,
                                                   double eps = 0.0, std::uint64_t seed = 0) {
  auto table = std::make_shared<std::map<std::string, KeypointSet>>();
  for (const auto& s : samples) (*table)[s.id] = s.keypoints;
  return OracleKeypointProvider(
      [table](const std::string& id) {
        auto it = table->find(id);
        if (it == table->end()) throw std::runtime_error("no keypoints for image " + id);
        return it->second;
      },
      eps, seed);
}

}  // namespace fsgfa
