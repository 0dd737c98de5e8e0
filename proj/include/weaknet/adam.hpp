#pragma once

#include <cstdint>
#include <vector>

#include "weaknet/network.hpp"

namespace weaknet {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

AdamState adam_init(const ModelParams& params);

/// One bias-corrected Adam update of every trainable tensor. Frozen tensors
/// are never written.
void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace weaknet
