#include "weaknet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace weaknet {

template <class T>
LossValue<T> bce_loss(std::span<const T> probs, std::span<const T> targets) {
  if (probs.size() != targets.size() || probs.empty()) {
    throw std::invalid_argument("bce_loss: " + std::to_string(probs.size()) +
                                " predictions vs " + std::to_string(targets.size()) +
                                " targets");
  }
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T{1} - lo;
  const auto classes = static_cast<T>(probs.size());
  LossValue<T> out;
  out.grad.resize(probs.size());
  T sum{};
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const T p = std::clamp(probs[c], lo, hi);
    const T y = targets[c];
    sum += -y * std::log(p) - (T{1} - y) * std::log1p(-p);
    out.grad[c] = (-y / p + (T{1} - y) / (T{1} - p)) / classes;
  }
  out.value = sum / classes;
  return out;
}

template <class T>
LossValue<T> bce_logits_loss(std::span<const T> logits, std::span<const T> targets) {
  if (logits.size() != targets.size() || logits.empty()) {
    throw std::invalid_argument("bce_logits_loss: " + std::to_string(logits.size()) +
                                " logits vs " + std::to_string(targets.size()) + " targets");
  }
  const auto classes = static_cast<T>(logits.size());
  LossValue<T> out;
  out.grad.resize(logits.size());
  T sum{};
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const T z = logits[c], y = targets[c];
    // -y log s(z) - (1 - y) log(1 - s(z)) = max(z, 0) - y z + log1p(exp(-|z|))
    sum += std::max(z, T{0}) - y * z + std::log1p(std::exp(-std::fabs(z)));
    const T s = z >= 0 ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
    out.grad[c] = (s - y) / classes;
  }
  out.value = sum / classes;
  return out;
}

template <class T>
LossValue<T> cce_loss(std::span<const T> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw std::invalid_argument("cce_loss: class index " + std::to_string(target) +
                                " out of range for " + std::to_string(logits.size()) +
                                " classes");
  }
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum{};
  for (T z : logits) sum += std::exp(z - mx);
  const T log_norm = mx + std::log(sum);
  LossValue<T> out;
  out.value = log_norm - logits[target];
  out.grad.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out.grad[c] = std::exp(logits[c] - log_norm) - (c == target ? T{1} : T{0});
  }
  return out;
}

template LossValue<float> bce_loss(std::span<const float>, std::span<const float>);
template LossValue<double> bce_loss(std::span<const double>, std::span<const double>);
template LossValue<float> bce_logits_loss(std::span<const float>, std::span<const float>);
template LossValue<double> bce_logits_loss(std::span<const double>, std::span<const double>);
template LossValue<float> cce_loss(std::span<const float>, std::size_t);
template LossValue<double> cce_loss(std::span<const double>, std::size_t);

}  // namespace weaknet
