#include "weaknet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace weaknet {

AdamState adam_init(const ModelParams& params) {
  AdamState state;
  for (const ConstParamRef& r : parameter_refs(params)) {
    state.m.emplace_back(r.trainable ? Tensor(r.tensor->shape()) : Tensor());
    state.v.emplace_back(r.trainable ? Tensor(r.tensor->shape()) : Tensor());
  }
  return state;
}

void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state,
               const AdamConfig& config) {
  std::vector<ParamRef> refs = parameter_refs(params);
  if (grads.tensors.size() != refs.size() || state.m.size() != refs.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state layout mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto step_size = static_cast<float>(config.lr / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(config.eps);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!refs[i].trainable) continue;
    Tensor& p = *refs[i].tensor;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: state shape mismatch for " + refs[i].name);
    }
    const Tensor& g = grads.tensors[i];
    if (!g.empty() && g.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + refs[i].name);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const float gj = g.empty() ? 0.0f : g[j];
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
      p[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

}  // namespace weaknet
