#pragma once

#include <span>
#include <vector>

namespace weaknet {

template <class T>
struct LossValue {
  T value{};
  std::vector<T> grad;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over classes of binary cross entropy. p is clamped to
/// [1e-7, 1 - 1e-7]; the returned gradient is dL/dp evaluated at the clamped
/// point.
template <class T>
LossValue<T> bce_loss(std::span<const T> probs, std::span<const T> targets);

// Same loss as bce_loss(sigmoid(logits), targets), with the gradient taken
// w.r.t. the logits: (sigmoid(z) - y) / C. It does not vanish when the
// sigmoid saturates in floating point.
template <class T>
LossValue<T> bce_logits_loss(std::span<const T> logits, std::span<const T> targets);

/// -log softmax(logits)[target], via log-sum-exp. Gradient is w.r.t. logits.
template <class T>
LossValue<T> cce_loss(std::span<const T> logits, std::size_t target);

}  // namespace weaknet
