// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/decoder.hpp"

#include <cmath>

namespace sparseview {

void positional_encode(std::span<const double> x, int d1, int d2,
                       std::vector<double>& out) {
  if (d1 < 0 || d1 >= d2) {
    throw InvalidRange("positional_encode: need 0 <= d1 < d2, got (" +
                       std::to_string(d1) + ", " + std::to_string(d2) + ")");
  }
  out.clear();
  out.reserve(positional_encode_dim(static_cast<int>(x.size()), d1, d2));
  if (d1 == 0) out.insert(out.end(), x.begin(), x.end());
  for (int d = d1; d < d2; ++d) {
    const double f = std::ldexp(1.0, d);  // 2^d
    for (const double xi : x) {
      out.push_back(std::sin(f * xi));
      out.push_back(std::cos(f * xi));
    }
  }
}

int positional_encode_dim(int x_dim, int d1, int d2) {
  return x_dim * (2 * (d2 - d1) + (d1 == 0 ? 1 : 0));
}

void positional_encode_backward(std::span<const double> x, int d1, int d2,
                                std::span<const double> d_out,
                                std::span<double> d_x) {
  std::size_t k = 0;
  if (d1 == 0) {
    for (std::size_t i = 0; i < x.size(); ++i) d_x[i] += d_out[k++];
  }
  for (int d = d1; d < d2; ++d) {
    const double f = std::ldexp(1.0, d);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double a = f * x[i];
      d_x[i] += d_out[k++] * f * std::cos(a);
      d_x[i] -= d_out[k++] * f * std::sin(a);
    }
  }
}

Mlp::Mlp(std::string name, int in_dim, int hidden_dim, int out_dim)
    : in_dim_(in_dim), hidden_dim_(hidden_dim), out_dim_(out_dim) {
  w1.name = name + ".w1";
  b1.name = name + ".b1";
  w2.name = name + ".w2";
  b2.name = name + ".b2";
  w1.resize(static_cast<std::size_t>(hidden_dim) * in_dim);
  b1.resize(hidden_dim);
  w2.resize(static_cast<std::size_t>(out_dim) * hidden_dim);
  b2.resize(out_dim);
}

void Mlp::init(Rng& rng) {
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim_));
  for (auto& v : w1.value) v = rng.uniform(-s1, s1);
  for (auto& v : b1.value) v = rng.uniform(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim_));
  for (auto& v : w2.value) v = rng.uniform(-s2, s2);
  for (auto& v : b2.value) v = rng.uniform(-s2, s2);
}

void Mlp::forward(std::span<const double> in, std::span<double> out,
                  std::span<double> hidden_pre) const {
  for (int h = 0; h < hidden_dim_; ++h) {
    double acc = b1.value[h];
    const double* row = &w1.value[static_cast<std::size_t>(h) * in_dim_];
    for (int i = 0; i < in_dim_; ++i) acc += row[i] * in[i];
    hidden_pre[h] = acc;
  }
  for (int o = 0; o < out_dim_; ++o) {
    double acc = b2.value[o];
    const double* row = &w2.value[static_cast<std::size_t>(o) * hidden_dim_];
    for (int h = 0; h < hidden_dim_; ++h) {
      const double a = hidden_pre[h];
      if (a > 0) acc += row[h] * a;
    }
    out[o] = acc;
  }
}

void Mlp::backward(std::span<const double> in, std::span<const double> hidden_pre,
                   std::span<const double> d_out, std::span<double> d_in) {
  thread_local std::vector<double> d_hidden;
  d_hidden.assign(hidden_dim_, 0.0);
  for (int o = 0; o < out_dim_; ++o) {
    const double g = d_out[o];
    if (g == 0.0) continue;
    b2.grad[o] += g;
    double* wrow = &w2.grad[static_cast<std::size_t>(o) * hidden_dim_];
    const double* vrow = &w2.value[static_cast<std::size_t>(o) * hidden_dim_];
    for (int h = 0; h < hidden_dim_; ++h) {
      const double a = hidden_pre[h];
      if (a > 0) {
        wrow[h] += g * a;
        d_hidden[h] += g * vrow[h];
      }
    }
  }
  for (int h = 0; h < hidden_dim_; ++h) {
    if (hidden_pre[h] <= 0) continue;
    const double g = d_hidden[h];
    if (g == 0.0) continue;
    b1.grad[h] += g;
    double* wrow = &w1.grad[static_cast<std::size_t>(h) * in_dim_];
    const double* vrow = &w1.value[static_cast<std::size_t>(h) * in_dim_];
    for (int i = 0; i < in_dim_; ++i) wrow[i] += g * in[i];
    if (!d_in.empty()) {
      for (int i = 0; i < in_dim_; ++i) d_in[i] += g * vrow[i];
    }
  }
}

std::vector<ParamBlock*> Mlp::params() { return {&w1, &b1, &w2, &b2}; }

ColorDecoder::ColorDecoder(const Config& config) : config_(config) {
  mlp_ = Mlp("color", input_dim(), config.hidden, output_dim());
}

void ColorDecoder::init(Rng& rng) { mlp_.init(rng); }

int ColorDecoder::input_dim() const {
  int dim = config_.feature_dim;
  if (config_.view_dependent) {
    dim += config_.view_degrees > 0
               ? positional_encode_dim(3, 0, config_.view_degrees)
               : 3;  // l_v = 0 feeds the raw direction
  }
  if (config_.residual_d2 > config_.residual_d1) {
    dim += positional_encode_dim(3, config_.residual_d1, config_.residual_d2);
  }
  if (config_.time_conditioned) {
    dim += config_.time_degrees > 0
               ? positional_encode_dim(1, 0, config_.time_degrees)
               : 1;
  }
  return dim;
}

ColorDecoder::Output ColorDecoder::forward(std::span<const double> feature,
                                           const double* v, const double* p,
                                           double t, Workspace& ws) const {
  ws.input.clear();
  ws.input.insert(ws.input.end(), feature.begin(), feature.end());
  thread_local std::vector<double> enc;
  if (config_.view_dependent) {
    if (config_.view_degrees > 0) {
      positional_encode(std::span<const double>(v, 3), 0, config_.view_degrees, enc);
      ws.input.insert(ws.input.end(), enc.begin(), enc.end());
    } else {
      ws.input.insert(ws.input.end(), v, v + 3);
    }
  }
  if (config_.residual_d2 > config_.residual_d1) {
    positional_encode(std::span<const double>(p, 3), config_.residual_d1,
                      config_.residual_d2, enc);
    ws.input.insert(ws.input.end(), enc.begin(), enc.end());
  }
  if (config_.time_conditioned) {
    if (config_.time_degrees > 0) {
      positional_encode(std::span<const double>(&t, 1), 0, config_.time_degrees, enc);
      ws.input.insert(ws.input.end(), enc.begin(), enc.end());
    } else {
      ws.input.push_back(t);
    }
  }

  ws.hidden_pre.resize(mlp_.hidden_dim());
  ws.raw_out.resize(mlp_.out_dim());
  mlp_.forward(ws.input, ws.raw_out, ws.hidden_pre);

  Output out;
  for (int c = 0; c < 3; ++c) out.rgb[c] = sigmoid(ws.raw_out[c]);
  if (config_.visibility_head) out.visibility = sigmoid(ws.raw_out[3]);
  return out;
}

void ColorDecoder::backward(const Workspace& ws, const double* d_rgb,
                            double d_visibility, std::span<double> d_feature) {
  thread_local std::vector<double> d_raw;
  d_raw.assign(ws.raw_out.size(), 0.0);
  for (int c = 0; c < 3; ++c) {
    const double s = sigmoid(ws.raw_out[c]);
    d_raw[c] = d_rgb ? d_rgb[c] * s * (1.0 - s) : 0.0;
  }
  if (config_.visibility_head && d_visibility != 0.0) {
    const double s = sigmoid(ws.raw_out[3]);
    d_raw[3] = d_visibility * s * (1.0 - s);
  }
  if (d_feature.empty()) {
    mlp_.backward(ws.input, ws.hidden_pre, d_raw, {});
    return;
  }
  thread_local std::vector<double> d_in;
  d_in.assign(ws.input.size(), 0.0);
  mlp_.backward(ws.input, ws.hidden_pre, d_raw, d_in);
  for (std::size_t i = 0; i < d_feature.size(); ++i) d_feature[i] += d_in[i];
}

MotionDecoder::MotionDecoder(int feature_dim, int hidden)
    : mlp_("motion", feature_dim, hidden, 3) {}

void MotionDecoder::init(Rng& rng) { mlp_.init(rng); }

void MotionDecoder::forward(std::span<const double> feature, double delta[3],
                            Workspace& ws) const {
  ws.hidden_pre.resize(mlp_.hidden_dim());
  mlp_.forward(feature, std::span<double>(delta, 3), ws.hidden_pre);
}

void MotionDecoder::backward(std::span<const double> feature, const Workspace& ws,
                             const double d_delta[3], std::span<double> d_feature) {
  mlp_.backward(feature, ws.hidden_pre, std::span<const double>(d_delta, 3),
                d_feature);
}

}  // namespace sparseview
