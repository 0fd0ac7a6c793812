// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/ssim.hpp"

#include <cmath>
#include <vector>

#include "sparseview/common.hpp"

namespace sparseview {

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  const int half = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// valid-mode separable convolution; output is (W-window+1) x (H-window+1)
ImageD conv_valid(const ImageD& img, const std::vector<double>& k) {
  const int window = static_cast<int>(k.size());
  const int ow = img.width() - window + 1;
  const int oh = img.height() - window + 1;
  ImageD tmp(ow, img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < window; ++i) acc += k[i] * img.at(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  ImageD out(ow, oh, 1);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < window; ++i) acc += k[i] * tmp.at(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// transpose of conv_valid: scatters each valid-position value back through
// the window weights
void conv_valid_scatter(const ImageD& grid, const std::vector<double>& k,
                        ImageD& out) {
  const int window = static_cast<int>(k.size());
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const double g = grid.at(x, y);
      if (g == 0.0) continue;
      for (int j = 0; j < window; ++j) {
        for (int i = 0; i < window; ++i) {
          out.at(x + i, y + j) += g * k[i] * k[j];
        }
      }
    }
  }
}

int effective_window(const ImageD& img, int window) {
  int w = std::min({window, img.width(), img.height()});
  if (w % 2 == 0) --w;
  return std::max(1, w);
}

struct SsimFields {
  ImageD A, B, C, D, E;
  double c1 = 0, c2 = 0;
};

SsimFields ssim_fields(const ImageD& a, const ImageD& b, double peak,
                       const std::vector<double>& k) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error("ssim: image size mismatch");
  }
  SsimFields f;
  ImageD aa(a.width(), a.height(), 1), bb(a.width(), a.height(), 1),
      ab(a.width(), a.height(), 1);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      aa.at(x, y) = a.at(x, y) * a.at(x, y);
      bb.at(x, y) = b.at(x, y) * b.at(x, y);
      ab.at(x, y) = a.at(x, y) * b.at(x, y);
    }
  }
  f.A = conv_valid(a, k);
  f.B = conv_valid(b, k);
  f.C = conv_valid(aa, k);
  f.D = conv_valid(bb, k);
  f.E = conv_valid(ab, k);
  f.c1 = (0.01 * peak) * (0.01 * peak);
  f.c2 = (0.03 * peak) * (0.03 * peak);
  return f;
}

}  // namespace

double ssim_mean(const ImageD& a, const ImageD& b, double peak, int window,
                 double sigma) {
  const auto k = gaussian_kernel(effective_window(a, window), sigma);
  const SsimFields f = ssim_fields(a, b, peak, k);
  double sum = 0.0;
  const int n = f.A.width() * f.A.height();
  for (int y = 0; y < f.A.height(); ++y) {
    for (int x = 0; x < f.A.width(); ++x) {
      const double A = f.A.at(x, y), B = f.B.at(x, y);
      const double s1 = f.C.at(x, y) - A * A;
      const double s2 = f.D.at(x, y) - B * B;
      const double s12 = f.E.at(x, y) - A * B;
      const double num = (2 * A * B + f.c1) * (2 * s12 + f.c2);
      const double den = (A * A + B * B + f.c1) * (s1 + s2 + f.c2);
      sum += num / den;
    }
  }
  return sum / n;
}

void ssim_mean_backward(const ImageD& a, const ImageD& b, double peak,
                        double d_out, ImageD& d_b, int window, double sigma) {
  const auto k = gaussian_kernel(effective_window(a, window), sigma);
  const SsimFields f = ssim_fields(a, b, peak, k);
  const int n = f.A.width() * f.A.height();
  const double scale = d_out / n;

  ImageD gB(f.A.width(), f.A.height(), 1), gD(f.A.width(), f.A.height(), 1),
      gE(f.A.width(), f.A.height(), 1);
  for (int y = 0; y < f.A.height(); ++y) {
    for (int x = 0; x < f.A.width(); ++x) {
      const double A = f.A.at(x, y), B = f.B.at(x, y);
      const double s1 = f.C.at(x, y) - A * A;
      const double s2 = f.D.at(x, y) - B * B;
      const double s12 = f.E.at(x, y) - A * B;
      const double num1 = 2 * A * B + f.c1, num2 = 2 * s12 + f.c2;
      const double den1 = A * A + B * B + f.c1, den2 = s1 + s2 + f.c2;
      const double S = num1 * num2 / (den1 * den2);
      // S depends on B directly (num1, den1, sigma12, sigma2), on D through
      // sigma2, and on E through sigma12.
      const double dS_dB = (2 * A * num2 - 2 * A * num1) / (den1 * den2) -
                           S * (2 * B / den1 - 2 * B / den2);
      const double dS_dD = -S / den2;
      const double dS_dE = 2 * num1 / (den1 * den2);
      gB.at(x, y) = scale * dS_dB;
      gD.at(x, y) = scale * dS_dD;
      gE.at(x, y) = scale * dS_dE;
    }
  }

  ImageD tB(a.width(), a.height(), 1), tD(a.width(), a.height(), 1),
      tE(a.width(), a.height(), 1);
  conv_valid_scatter(gB, k, tB);
  conv_valid_scatter(gD, k, tD);
  conv_valid_scatter(gE, k, tE);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      d_b.at(x, y) += tB.at(x, y) + 2.0 * b.at(x, y) * tD.at(x, y) +
                      a.at(x, y) * tE.at(x, y);
    }
  }
}

}  // namespace sparseview
