// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace sparseview {

/// Row-major interleaved image. Pixel centers sit at integer coordinates,
/// origin at the top-left.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y, int c = 0) {
    assert(in_bounds(x, y) && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int x, int y, int c = 0) const {
    assert(in_bounds(x, y) && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageD = Image<double>;
using ImageU8 = Image<std::uint8_t>;

/// Quantizes [0,1] doubles to 8 bits (round-to-nearest, clamped).
ImageU8 to_u8(const ImageD& img);
/// Maps 8-bit values back to [0,1] doubles (exact inverse of to_u8 on its range).
ImageD from_u8(const ImageU8& img);

/// Rec. 601 luma of an rgb image; single-channel images pass through.
ImageD luma(const ImageD& img);

}  // namespace sparseview
