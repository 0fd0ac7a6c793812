// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sparseview/common.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Minimal PNG codec backed by zlib. Supports what the toolkit writes:
/// 8-bit grayscale / rgb / rgba and 1-bit grayscale, non-interlaced.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

/// 1-bit grayscale PNG from a 0/1 mask (any nonzero value counts as 1).
void write_png_mask(const std::string& path, const ImageU8& mask);

/// PFM float map (single channel "Pf" or rgb "PF"); scale encodes
/// little-endian as negative per the format. Round trips bit-exactly.
void write_pfm(const std::string& path, const ImageD& img);
ImageD read_pfm(const std::string& path);

}  // namespace sparseview
