// SPDX-License-Identifier: Apache-2.0
//
// IDX reader/writer (big-endian, MNIST layout).
//
// Images: magic 0x00000803 (unsigned byte, 3 dims) scaled by 1/255, or
// 0x00000E03 (float64, 3 dims) read verbatim so that synthetic exports
// round-trip exactly. Labels: magic 0x00000801.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "moefl/dataset.hpp"
#include "moefl/error.hpp"

namespace moefl {

inline constexpr std::uint32_t kIdxImagesU8 = 0x00000803;
inline constexpr std::uint32_t kIdxImagesF64 = 0x00000E03;
inline constexpr std::uint32_t kIdxLabelsU8 = 0x00000801;

enum class IdxPixelFormat { u8, f64 };

namespace detail {

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::uppercase;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class IdxCursor {
 public:
  IdxCursor(const std::vector<unsigned char>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(what_ + ": truncated " + field + " at byte offset " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " bytes, " +
                        std::to_string(bytes_.size() - pos_) + " remain)");
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 8;
    return v;
  }

  unsigned char u8() { return bytes_[pos_++]; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void put_u32_be(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

inline void put_u64_be(std::ostream& os, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) os.put(static_cast<char>(v >> (8 * i)));
}

}  // namespace detail

/// Loads an image/label IDX pair. class_count = max label + 1.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img_bytes = detail::read_all(images_path);
  const auto lbl_bytes = detail::read_all(labels_path);

  detail::IdxCursor lbl(lbl_bytes, "labels file '" + labels_path + "'");
  const std::uint32_t lmagic = lbl.u32("magic");
  if (lmagic != kIdxLabelsU8)
    throw FormatError("labels file '" + labels_path + "': bad magic " + detail::hex32(lmagic) +
                      " at byte offset 0 (expected " + detail::hex32(kIdxLabelsU8) + ")");
  const std::uint32_t n_labels = lbl.u32("item count");

  detail::IdxCursor img(img_bytes, "images file '" + images_path + "'");
  const std::uint32_t imagic = img.u32("magic");
  if (imagic != kIdxImagesU8 && imagic != kIdxImagesF64)
    throw FormatError("images file '" + images_path + "': bad magic " + detail::hex32(imagic) +
                      " at byte offset 0 (expected " + detail::hex32(kIdxImagesU8) + ")");
  const std::size_t count_offset = img.offset();
  const std::uint32_t n_images = img.u32("image count");
  const std::uint32_t rows = img.u32("row count");
  const std::uint32_t cols = img.u32("column count");
  if (n_images != n_labels)
    throw FormatError("images file '" + images_path + "': image count " + std::to_string(n_images) +
                      " at byte offset " + std::to_string(count_offset) + " does not match label count " +
                      std::to_string(n_labels));
  if (rows == 0 || cols == 0)
    throw FormatError("images file '" + images_path + "': zero image dimension at byte offset 8");

  Dataset ds;
  ds.dim = static_cast<std::size_t>(rows) * cols;
  const std::size_t n = n_images;
  const std::size_t elem = imagic == kIdxImagesU8 ? 1 : 8;
  img.need(n * ds.dim * elem, "pixel data");
  lbl.need(n, "label data");

  ds.features.resize(n * ds.dim);
  if (imagic == kIdxImagesU8) {
    for (double& v : ds.features) v = static_cast<double>(img.u8()) / 255.0;
  } else {
    for (double& v : ds.features) {
      const std::size_t at = img.offset();
      v = std::bit_cast<double>(img.u64("pixel"));
      if (!std::isfinite(v))
        throw FormatError("images file '" + images_path + "': non-finite value at byte offset " +
                          std::to_string(at));
    }
  }
  ds.labels.resize(n);
  int max_label = -1;
  for (int& y : ds.labels) {
    y = lbl.u8();
    max_label = std::max(max_label, y);
  }
  ds.class_count = static_cast<std::size_t>(max_label + 1);
  if (ds.empty()) throw FormatError("labels file '" + labels_path + "': zero items");
  return ds;
}

/// Writes `ds` as an IDX pair with images shaped (n, 1, dim).
inline void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
                      IdxPixelFormat format = IdxPixelFormat::f64) {
  ds.validate();
  if (ds.class_count > 256) throw InputError("write_idx: labels must fit in one byte");
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  if (!img) throw std::runtime_error("cannot write '" + images_path + "'");
  detail::put_u32_be(img, format == IdxPixelFormat::u8 ? kIdxImagesU8 : kIdxImagesF64);
  detail::put_u32_be(img, static_cast<std::uint32_t>(ds.size()));
  detail::put_u32_be(img, 1);
  detail::put_u32_be(img, static_cast<std::uint32_t>(ds.dim));
  for (double v : ds.features) {
    if (format == IdxPixelFormat::u8) {
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    } else {
      detail::put_u64_be(img, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!img) throw std::runtime_error("failed writing '" + images_path + "'");

  std::ofstream lbl(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbl) throw std::runtime_error("cannot write '" + labels_path + "'");
  detail::put_u32_be(lbl, kIdxLabelsU8);
  detail::put_u32_be(lbl, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lbl.put(static_cast<char>(static_cast<unsigned char>(y)));
  if (!lbl) throw std::runtime_error("failed writing '" + labels_path + "'");
}

}  // namespace moefl
