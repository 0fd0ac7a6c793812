// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "sparseview/common.hpp"

namespace sparseview {

class InvalidRange : public Error {
 public:
  explicit InvalidRange(const std::string& msg) : Error(msg) {}
};

/// A named flat parameter vector with a matching adjoint slot.
struct ParamBlock {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  void resize(std::size_t n) {
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  std::size_t size() const { return value.size(); }
};

/// Frequency encoding [sin(2^d1 x), cos(2^d1 x), ..., sin(2^(d2-1) x),
/// cos(2^(d2-1) x)] per input component; the raw input is prepended when
/// d1 == 0. Throws InvalidRange when d1 >= d2 or d1 < 0.
void positional_encode(std::span<const double> x, int d1, int d2,
                       std::vector<double>& out);
int positional_encode_dim(int x_dim, int d1, int d2);
/// Accumulates d(encoding)/dx^T * d_out into d_x.
void positional_encode_backward(std::span<const double> x, int d1, int d2,
                                std::span<const double> d_out,
                                std::span<double> d_x);

/// Two affine layers with a rectified-linear unit between them. Head
/// activations (softplus density, sigmoid color) are applied by callers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, int in_dim, int hidden_dim, int out_dim);

  /// Uniform init scaled by 1/sqrt(fan-in).
  void init(Rng& rng);

  int in_dim() const { return in_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int out_dim() const { return out_dim_; }

  /// hidden_pre receives the pre-activation hidden vector (size hidden_dim),
  /// needed by backward.
  void forward(std::span<const double> in, std::span<double> out,
               std::span<double> hidden_pre) const;

  /// Accumulates parameter adjoints into the blocks' grad slots; accumulates
  /// input adjoints into d_in when non-empty.
  void backward(std::span<const double> in, std::span<const double> hidden_pre,
                std::span<const double> d_out, std::span<double> d_in);

  std::vector<ParamBlock*> params();

  ParamBlock w1, b1, w2, b2;  // w1: hidden x in, w2: out x hidden, row-major

 private:
  int in_dim_ = 0, hidden_dim_ = 0, out_dim_ = 0;
};

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_deriv(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Color decoder (N2 role): maps a field feature, optionally encoded view
/// direction, residual position encoding, and encoded time to rgb in [0,1]^3
/// plus an optional visibility head in [0,1].
class ColorDecoder {
 public:
  struct Config {
    int feature_dim = 8;
    bool view_dependent = true;
    int view_degrees = 4;        // l_v; 0 feeds the raw direction
    int residual_d1 = 0;         // residual position encoding gamma(p, d1, d2)
    int residual_d2 = 0;         // d2 == 0 disables the residual input
    bool time_conditioned = false;
    int time_degrees = 2;
    bool visibility_head = false;
    int hidden = 64;
  };

  ColorDecoder() = default;
  explicit ColorDecoder(const Config& config);
  void init(Rng& rng);

  const Config& config() const { return config_; }
  int input_dim() const;
  int output_dim() const { return 3 + (config_.visibility_head ? 1 : 0); }

  struct Workspace {
    std::vector<double> input;
    std::vector<double> hidden_pre;
    std::vector<double> raw_out;
  };

  struct Output {
    double rgb[3] = {0, 0, 0};
    double visibility = 0.0;  // sigmoid head, valid when configured
  };

  /// p is required only when the residual position encoding is active; t only
  /// when time-conditioned. v must be unit-length when view-dependent.
  Output forward(std::span<const double> feature, const double* v, const double* p,
                 double t, Workspace& ws) const;

  /// d_rgb (3) and d_visibility propagate into parameter grads and into
  /// d_feature (accumulated) when non-empty.
  void backward(const Workspace& ws, const double* d_rgb, double d_visibility,
                std::span<double> d_feature);

  std::vector<ParamBlock*> params() { return mlp_.params(); }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Config config_;
  Mlp mlp_;
};

/// Motion decoder (M_f role): feature -> 3D displacement, linear output.
class MotionDecoder {
 public:
  MotionDecoder() = default;
  MotionDecoder(int feature_dim, int hidden = 64);
  void init(Rng& rng);

  struct Workspace {
    std::vector<double> hidden_pre;
  };

  void forward(std::span<const double> feature, double delta[3], Workspace& ws) const;
  void backward(std::span<const double> feature, const Workspace& ws,
                const double d_delta[3], std::span<double> d_feature);

  std::vector<ParamBlock*> params() { return mlp_.params(); }
  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }

 private:
  Mlp mlp_;
};

}  // namespace sparseview
