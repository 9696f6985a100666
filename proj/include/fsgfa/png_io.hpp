#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fsgfa/image.hpp"

namespace fsgfa {

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32_be(out, crc);
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

/// Writes an 8-bit grayscale (1 channel) or RGB (3 channel) PNG. Scanlines
/// use filter 0; the zlib stream is produced at a fixed level, so identical
/// images give identical bytes.
inline void write_png(const std::string& path, const Image& img) {
  check(img.channels == 1 || img.channels == 3,
        "write_png: only 1- or 3-channel images supported");
  check(img.width > 0 && img.height > 0, "write_png: empty image");

  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> out(sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);                                      // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);              // color type
  ihdr.push_back(0);                                      // compression
  ihdr.push_back(0);                                      // filter method
  ihdr.push_back(0);                                      // no interlace
  detail::append_chunk(out, "IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    raw[static_cast<std::size_t>(y) * (stride + 1)] = 0;  // filter: None
    std::memcpy(raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1,
                img.px.data() + static_cast<std::size_t>(y) * stride, stride);
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> zdata(bound);
  if (::compress2(zdata.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("write_png: deflate failed for " + path);
  zdata.resize(bound);
  detail::append_chunk(out, "IDAT", zdata);
  detail::append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

/// Reads 8-bit non-interlaced PNGs with color type 0, 2, 4, or 6 (all five
/// scanline filters). Alpha, when present, is dropped.
inline Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw std::runtime_error("read_png: " + path + " is not a PNG file");

  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> zdata;
  std::size_t pos = 8;
  bool saw_end = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = detail::get_u32_be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size())
      throw std::runtime_error("read_png: truncated chunk in " + path);
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* data = bytes.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("read_png: bad IHDR in " + path);
      width = static_cast<int>(detail::get_u32_be(data));
      height = static_cast<int>(detail::get_u32_be(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8 || interlace != 0)
        throw std::runtime_error("read_png: unsupported bit depth/interlace in " + path);
      switch (color) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: throw std::runtime_error("read_png: unsupported color type in " + path);
      }
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      zdata.insert(zdata.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || zdata.empty() || !saw_end)
    throw std::runtime_error("read_png: missing image data in " + path);

  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(height));
  uLongf rawlen = static_cast<uLongf>(raw.size());
  if (::uncompress(raw.data(), &rawlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
      rawlen != raw.size())
    throw std::runtime_error("read_png: inflate failed for " + path);

  // Unfilter in place into the output image.
  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride);
  Image full(width, height, channels);
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* line = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    const int filter = line[0];
    const std::uint8_t* src = line + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: throw std::runtime_error("read_png: bad filter byte in " + path);
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    std::memcpy(full.px.data() + static_cast<std::size_t>(y) * stride, cur.data(), stride);
    std::swap(prev, cur);
  }

  if (channels == 1 || channels == 3) return full;
  // Drop alpha.
  const int keep = channels == 2 ? 1 : 3;
  Image out(width, height, keep);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < keep; ++c) out.at(y, x, c) = full.at(y, x, c);
  return out;
}

}  // namespace fsgfa
