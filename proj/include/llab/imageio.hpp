#pragma once

// Image file formats. Baseline wire format is binary PPM (P6, maxval 255);
// PNG (8-bit RGB, no alpha, non-interlaced) is supported both ways via zlib.

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "llab/errors.hpp"
#include "llab/image.hpp"

namespace llab {

inline unsigned char quantize_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

// ---------------------------------------------------------------------------
// PPM (P6)
// ---------------------------------------------------------------------------

namespace detail {
inline int ppm_next_int(std::istream& in) {
  // skip whitespace and '#' comments
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF) throw DataError("ppm: truncated header");
  int value = 0;
  bool any = false;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) throw DataError("ppm: malformed header");
  return value;
}
}  // namespace detail

inline ImageBuffer load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  char magic[2];
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
    throw DataError("not a P6 ppm: " + path);
  const int w = detail::ppm_next_int(in);
  const int h = detail::ppm_next_int(in);
  const int maxval = detail::ppm_next_int(in);
  if (maxval != 255)
    throw DataError("ppm: unsupported maxval " + std::to_string(maxval) +
                    " (only 8-bit supported): " + path);
  if (w <= 0 || h <= 0) throw DataError("ppm: bad dimensions: " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw DataError("ppm: truncated pixel data: " + path);
  ImageBuffer img(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.px[i] = raw[i] / 255.0;
  return img;
}

inline void save_ppm(const ImageBuffer& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(img.px.size());
  for (std::size_t i = 0; i < img.px.size(); ++i)
    raw[i] = quantize_byte(img.px[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("short write: " + path);
}

// ---------------------------------------------------------------------------
// PNG, 8-bit RGB only
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32be(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

inline std::uint32_t read_u32be(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  const auto crc =
      ::crc32(0L, body.data(), static_cast<uInt>(body.size()));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

inline void save_png(const ImageBuffer& img, const std::string& path) {
  const std::size_t w = static_cast<std::size_t>(img.w);
  const std::size_t h = static_cast<std::size_t>(img.h);
  std::vector<unsigned char> raw((w * 3 + 1) * h);
  for (std::size_t y = 0; y < h; ++y) {
    unsigned char* row = raw.data() + y * (w * 3 + 1);
    row[0] = 0;  // filter: none
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        row[1 + x * 3 + static_cast<std::size_t>(c)] =
            quantize_byte(img.at(static_cast<int>(y), static_cast<int>(x), c));
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw NumericError("png: deflate failed");
  comp.resize(comp_len);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(w));
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write image: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write: " + path);
}

inline ImageBuffer load_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw DataError("not a png: " + path);

  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  int bitdepth = -1, colortype = -1, interlace = -1;
  std::vector<unsigned char> idat;
  bool seen_iend = false;
  while (pos + 8 <= bytes.size() && !seen_iend) {
    const std::uint32_t len = detail::read_u32be(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const unsigned char* data = &bytes[pos + 8];
    const std::uint32_t stored_crc = detail::read_u32be(&bytes[pos + 8 + len]);
    const auto crc = ::crc32(0L, &bytes[pos + 4], static_cast<uInt>(4 + len));
    if (static_cast<std::uint32_t>(crc) != stored_crc)
      throw DataError("png: chunk crc mismatch: " + path);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("png: bad IHDR");
      w = detail::read_u32be(data);
      h = detail::read_u32be(data + 4);
      bitdepth = data[8];
      colortype = data[9];
      interlace = data[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
    }
    pos += 12 + len;
  }
  if (w == 0 || h == 0) throw DataError("png: missing IHDR: " + path);
  if (colortype == 6 || colortype == 4)
    throw DataError("png: alpha channel not supported: " + path);
  if (colortype != 2)
    throw DataError("png: only 8-bit RGB (color type 2) supported: " + path);
  if (bitdepth != 8)
    throw DataError("png: unsupported bit depth " + std::to_string(bitdepth) +
                    ": " + path);
  if (interlace != 0) throw DataError("png: interlacing not supported: " + path);

  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  std::vector<unsigned char> raw((stride + 1) * h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw DataError("png: inflate failed: " + path);

  // undo per-row filters
  std::vector<unsigned char> prev(stride, 0);
  ImageBuffer img(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t y = 0; y < h; ++y) {
    const unsigned char filter = raw[y * (stride + 1)];
    unsigned char* row = raw.data() + y * (stride + 1) + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= 3 ? row[i - 3] : 0;
      const int up = prev[i];
      const int ul = i >= 3 ? prev[i - 3] : 0;
      int v = row[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) / 2; break;
        case 4: v += detail::paeth(left, up, ul); break;
        default: throw DataError("png: unknown filter type: " + path);
      }
      row[i] = static_cast<unsigned char>(v & 0xff);
    }
    std::memcpy(prev.data(), row, stride);
    for (std::size_t i = 0; i < stride; ++i)
      img.px[y * stride + i] = row[i] / 255.0;
  }
  return img;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline ImageBuffer load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("cannot open image: " + path);
  unsigned char head[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(head), 2);
  probe.close();
  if (head[0] == 'P' && head[1] == '6') return load_ppm(path);
  if (head[0] == 0x89 && head[1] == 'P') return load_png(path);
  throw DataError("unsupported image format: " + path);
}

/// Load and apply the ingestion policy (center-crop square + bilinear).
inline ImageBuffer load_image_resized(const std::string& path, int resolution) {
  return fit_to_resolution(load_image(path), resolution);
}

inline void save_image(const ImageBuffer& img, const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    save_png(img, path);
  else
    save_ppm(img, path);
}

}  // namespace llab
