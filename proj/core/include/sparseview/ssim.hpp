// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sparseview/image.hpp"

namespace sparseview {

/// Single-scale SSIM over one channel with a Gaussian window (default 11x11,
/// sigma 1.5) and stabilizers c1 = (0.01 L)^2, c2 = (0.03 L)^2. The map is
/// averaged over positions where the full window fits. Images smaller than
/// the window shrink it to the largest odd size that fits.
double ssim_mean(const ImageD& a, const ImageD& b, double peak,
                 int window = 11, double sigma = 1.5);

/// Accumulates d(ssim_mean)/d(b) * d_out into d_b (image `a` held fixed).
void ssim_mean_backward(const ImageD& a, const ImageD& b, double peak,
                        double d_out, ImageD& d_b, int window = 11,
                        double sigma = 1.5);

}  // namespace sparseview
