// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "sparseview/fields.hpp"

namespace sparseview {

/// Little-endian binary checkpoint holding the renderable model(s):
/// magic "SVCK", version, flags, per-model family tag + shape ints, decoder
/// config, then raw f64 parameter blocks. Full byte layout in
/// docs/checkpoint_format.md.
struct Checkpoint {
  RadianceModel main;
  std::optional<RadianceModel> fine;
  std::optional<HexPlaneMotionField> motion;
  // sampling info the renderer needs
  double z_near = 1.0, z_far = 10.0;
  int n_coarse = 64, n_fine = 0;
  int sampling_domain = 0;  // 0 linear, 1 inverse-depth
  double s_near = 0.0;
  double time_min = 0.0, time_max = 1.0;  // frame-index range for dynamic fits
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparseview
