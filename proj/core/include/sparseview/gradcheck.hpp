// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sparseview/fields.hpp"

namespace sparseview::gradcheck {

struct CheckResult {
  std::string name;         // e.g. "photometric/tensor"
  double max_rel_err = 0.0;
  double sg_abs_err = 0.0;  // largest analytic adjoint on a stopped branch
  bool pass = false;
};

struct CheckOptions {
  double fd_step = 1e-5;
  double rel_tol = 1e-4;
  int samples_per_block = 24;  // parameters probed per block
  std::uint64_t seed = 7;
};

/// Central-difference verification of every loss against its analytic
/// adjoints, for every field family where the loss touches a field, plus
/// exact-zero checks on all stop-gradient branches.
std::vector<CheckResult> run_all(const CheckOptions& options = {});

std::string format_table(const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

}  // namespace sparseview::gradcheck
