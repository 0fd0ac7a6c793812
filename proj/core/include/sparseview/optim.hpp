// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sparseview/decoder.hpp"

namespace sparseview::optim {

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& msg) : Error(msg) {}
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// lr(step) = lr0 * (lr_final / lr0)^(step / total_steps): exponential decay.
struct LrSchedule {
  double lr0 = 5e-4;
  double lr_final = 5e-6;
  int total_steps = 1;

  double lr(int step) const {
    return lr0 * std::pow(lr_final / lr0,
                          static_cast<double>(step) / std::max(1, total_steps));
  }
};

/// Adam with bias correction. Moments are laid out per attached block;
/// a non-finite gradient aborts the step and names the offending block.
class AdamState {
 public:
  void attach(const std::vector<ParamBlock*>& blocks);
  void step(const std::vector<ParamBlock*>& blocks, double lr,
            const AdamConfig& config = {});
  int step_count() const { return t_; }

 private:
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

}  // namespace sparseview::optim
