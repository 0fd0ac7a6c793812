// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/optim.hpp"

namespace sparseview::optim {

void AdamState::attach(const std::vector<ParamBlock*>& blocks) {
  m_.resize(blocks.size());
  v_.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    m_[b].assign(blocks[b]->size(), 0.0);
    v_[b].assign(blocks[b]->size(), 0.0);
  }
  t_ = 0;
}

void AdamState::step(const std::vector<ParamBlock*>& blocks, double lr,
                     const AdamConfig& config) {
  if (blocks.size() != m_.size()) {
    throw Error("AdamState: attach() does not match the given blocks");
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (const double g : blocks[b]->grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in block " + blocks[b]->name);
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config.beta1, t_);
  const double bc2 = 1.0 - std::pow(config.beta2, t_);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    ParamBlock& blk = *blocks[b];
    for (std::size_t i = 0; i < blk.size(); ++i) {
      const double g = blk.grad[i];
      m_[b][i] = config.beta1 * m_[b][i] + (1.0 - config.beta1) * g;
      v_[b][i] = config.beta2 * v_[b][i] + (1.0 - config.beta2) * g * g;
      const double mhat = m_[b][i] / bc1;
      const double vhat = v_[b][i] / bc2;
      blk.value[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

}  // namespace sparseview::optim
