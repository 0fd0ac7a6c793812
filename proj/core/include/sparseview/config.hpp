// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sparseview/mpi.hpp"
#include "sparseview/trainer.hpp"

namespace sparseview {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Run configuration for `fit`: mode "static" or "dynamic" plus the matching
/// trainer config. Unknown keys are rejected.
struct FitRunConfig {
  std::string mode = "static";
  optim::StaticFitConfig static_fit;
  optim::DynamicFitConfig dynamic_fit;
};

FitRunConfig parse_fit_config(const std::string& json_text);

struct TvsRunConfig {
  mpi::TvsConfig tvs;
  int frame_now = -1;     // n; default picks the latest frame allowing k past
  int view = 0;
  int k = 2;              // upsampling factor
  std::vector<std::string> bound_modes;  // subset of {gt-flow, gt-infill}
};

TvsRunConfig parse_tvs_config(const std::string& json_text);

}  // namespace sparseview
