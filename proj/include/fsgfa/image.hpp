#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fsgfa/tensor.hpp"

namespace fsgfa {

/// 8-bit interleaved (HWC) image, the on-disk representation. In-memory
/// processing happens on CHW tensors in the byte value domain [0, 255] so
/// that fractional padding (mid-gray 127.5) survives until normalization.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> px;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        px(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

using Color = std::array<std::uint8_t, 3>;

// ---------------------------------------------------------------------------
// byte-domain tensor conversions and pixel normalization
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> to_chw(const Image& img) {
  Tensor<T> t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at3(c, y, x) = static_cast<T>(img.at(y, x, c));
  return t;
}

template <class T>
Image to_image(const Tensor<T>& chw) {
  check(chw.rank() == 3, "to_image: expects C x H x W, got " + chw.shape_string());
  Image img(chw.dim(2), chw.dim(1), chw.dim(0));
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double v = std::round(static_cast<double>(chw.at3(c, y, x)));
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

/// v -> (v - 127.5) / 128, elementwise over a byte-domain tensor.
template <class T>
Tensor<T> normalize_pixels(Tensor<T> bytes) {
  for (auto& v : bytes.data) v = (v - T(127.5)) / T(128);
  return bytes;
}

template <class T>
Tensor<T> normalize_pixels(const Image& img) {
  return normalize_pixels(to_chw<T>(img));
}

/// Exact inverse of normalize_pixels with clamping to [0, 255].
template <class T>
Image denormalize_pixels(const Tensor<T>& normalized) {
  Tensor<T> bytes(normalized.shape);
  for (std::int64_t i = 0; i < normalized.numel(); ++i)
    bytes[i] = normalized[i] * T(128) + T(127.5);
  return to_image(bytes);
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

template <class T>
T sample_bilinear(const Tensor<T>& chw, int c, double y, double x, T pad) {
  const int H = chw.dim(1), W = chw.dim(2);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> T {
    if (yy < 0 || yy >= H || xx < 0 || xx >= W) return pad;
    return chw.at3(c, yy, xx);
  };
  const double top = (1.0 - fx) * px(y0, x0) + fx * px(y0, x0 + 1);
  const double bot = (1.0 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1);
  return static_cast<T>((1.0 - fy) * top + fy * bot);
}

/// Extracts the (possibly out-of-frame) axis-aligned box and resizes it to
/// out_w x out_h; out-of-frame pixels read as `pad`.
template <class T>
Tensor<T> crop_resize(const Tensor<T>& chw, double x1, double y1, double x2, double y2,
                      int out_w, int out_h, T pad) {
  check(chw.rank() == 3, "crop_resize: expects C x H x W, got " + chw.shape_string());
  check(x2 > x1 && y2 > y1, "crop_resize: box must have positive area");
  check(out_w > 0 && out_h > 0, "crop_resize: output extents must be positive");
  const int C = chw.dim(0);
  Tensor<T> out({C, out_h, out_w});
  const double sx = (x2 - x1) / out_w;
  const double sy = (y2 - y1) / out_h;
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const double srcx = x1 + (ox + 0.5) * sx - 0.5;
        const double srcy = y1 + (oy + 0.5) * sy - 0.5;
        out.at3(c, oy, ox) = sample_bilinear(chw, c, srcy, srcx, pad);
      }
  return out;
}

/// Plain bilinear resize of a CHW tensor (no padding ever sampled).
template <class T>
Tensor<T> bilinear_resize_chw(const Tensor<T>& chw, int out_h, int out_w) {
  return crop_resize(chw, 0.0, 0.0, static_cast<double>(chw.dim(2)),
                     static_cast<double>(chw.dim(1)), out_w, out_h, T(0));
}

/// Row-major 2x3 affine matrix acting on column vectors (x, y, 1).
struct Affine {
  double m[6] = {1, 0, 0, 0, 1, 0};

  static Affine identity() { return {}; }

  static Affine similarity(double scale, double angle_rad, double tx, double ty) {
    Affine a;
    a.m[0] = scale * std::cos(angle_rad);
    a.m[1] = -scale * std::sin(angle_rad);
    a.m[2] = tx;
    a.m[3] = scale * std::sin(angle_rad);
    a.m[4] = scale * std::cos(angle_rad);
    a.m[5] = ty;
    return a;
  }

  std::pair<double, double> apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }

  Affine inverse() const {
    const double det = m[0] * m[4] - m[1] * m[3];
    check(std::abs(det) > 1e-12, "affine: singular transform cannot be inverted");
    Affine inv;
    inv.m[0] = m[4] / det;
    inv.m[1] = -m[1] / det;
    inv.m[3] = -m[3] / det;
    inv.m[4] = m[0] / det;
    inv.m[2] = -(inv.m[0] * m[2] + inv.m[1] * m[5]);
    inv.m[5] = -(inv.m[3] * m[2] + inv.m[4] * m[5]);
    return inv;
  }
};

/// Warps src through `fwd` (source -> destination coordinates) into an
/// out_w x out_h tensor by inverse mapping with bilinear sampling.
template <class T>
Tensor<T> warp_affine(const Tensor<T>& chw, const Affine& fwd, int out_w, int out_h, T pad) {
  const Affine inv = fwd.inverse();
  const int C = chw.dim(0);
  Tensor<T> out({C, out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      auto [sx, sy] = inv.apply(ox, oy);
      for (int c = 0; c < C; ++c) out.at3(c, oy, ox) = sample_bilinear(chw, c, sy, sx, pad);
    }
  return out;
}

// ---------------------------------------------------------------------------
// raster primitives for the synthetic renderer
// ---------------------------------------------------------------------------

inline void fill_vertical_gradient(Image& img, Color top, Color bottom) {
  for (int y = 0; y < img.height; ++y) {
    const double t = img.height > 1 ? static_cast<double>(y) / (img.height - 1) : 0.0;
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) =
            static_cast<std::uint8_t>(std::lround((1.0 - t) * top[c] + t * bottom[c]));
  }
}

/// Filled ellipse rotated by `angle` around its center.
inline void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, double angle,
                         Color color) {
  if (rx <= 0 || ry <= 0) return;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double r = std::max(rx, ry) + 1.0;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (dx * ca + dy * sa) / rx;
      const double v = (-dx * sa + dy * ca) / ry;
      if (u * u + v * v <= 1.0)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
    }
}

/// Thick line segment drawn as the set of pixels within `thickness / 2` of
/// the segment.
inline void fill_segment(Image& img, double ax, double ay, double bx, double by,
                         double thickness, Color color) {
  const double ht = thickness / 2.0;
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - ht - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(ay, by) + ht + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - ht - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + ht + 1)));
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = x - (ax + t * vx), dy = y - (ay + t * vy);
      if (dx * dx + dy * dy <= ht * ht)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
    }
}

inline Color scale_color(Color c, double f) {
  Color out;
  for (int i = 0; i < 3; ++i)
    out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i] * f), 0l, 255l));
  return out;
}

}  // namespace fsgfa
