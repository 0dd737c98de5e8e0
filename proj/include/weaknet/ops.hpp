#pragma once

// Forward/backward kernels for the layer set the weak-label network needs.
// All kernels take batched NCHW tensors and are instantiated for float (the
// training path) and double (the gradient-check path).

#include <cstdint>
#include <vector>

#include "weaknet/tensor.hpp"

namespace weaknet::ops {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

std::size_t conv_output_size(std::size_t input, std::size_t kernel,
                             ConvGeometry geometry);

/// Cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, ConvGeometry geometry);

template <class T>
struct ConvGrads {
  BasicTensor<T> input;   // empty unless requested
  BasicTensor<T> weight;  // empty unless requested
  BasicTensor<T> bias;    // empty unless requested
};

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_output,
                             ConvGeometry geometry, bool want_input_grad,
                             bool want_param_grads);

enum class Mode { train, eval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

template <class T>
struct RunningStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;  // unbiased batch variance is tracked
  bool tracked = false;
};

template <class T>
struct BatchNormCache {
  BasicTensor<T> normalized;
  std::vector<T> inv_std;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;  // biased
  std::size_t count = 0;     // elements per channel
  Mode mode = Mode::eval;
};

/// Per-channel batch normalisation over (N, H, W). In train mode the batch
/// statistics are used and returned in `cache`; running statistics are not
/// touched (see update_running_stats). Eval mode throws std::logic_error when
/// `running` has never been populated.
template <class T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input,
                           const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta,
                           const RunningStats<T>& running, Mode mode,
                           BatchNormOptions options, BatchNormCache<T>* cache);

template <class T>
void update_running_stats(RunningStats<T>& running,
                          const BatchNormCache<T>& cache,
                          BatchNormOptions options);

template <class T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <class T>
BatchNormGrads<T> batchnorm2d_backward(const BasicTensor<T>& grad_output,
                                       const BasicTensor<T>& gamma,
                                       const BatchNormCache<T>& cache,
                                       bool want_input_grad,
                                       bool want_param_grads);

template <class T>
struct MaxPoolResult {
  BasicTensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
  Shape input_shape;
};

/// 2x2/stride-2 style max pooling with floor semantics; ties keep the first
/// element in row-major scan order.
template <class T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window = 2,
                           std::size_t stride = 2);

template <class T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output,
                                  const MaxPoolResult<T>& forward);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x);
/// Gradient through relu given its output.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output,
                             const BasicTensor<T>& grad_output);

template <class T>
T sigmoid(T x);
template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output);

/// Softmax over axis 1 of an [N, C] or [N, C, ...] tensor.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output);

enum class PoolMode { max, avg };

template <class T>
struct GlobalPoolResult {
  BasicTensor<T> output;              // [N, C]
  std::vector<std::uint32_t> argmax;  // segment index per output (max mode)
  std::size_t segments = 0;
  PoolMode mode = PoolMode::max;
};

/// Reduces [N, C, K, 1] (or [N, C, K]) over the segment axis K.
template <class T>
GlobalPoolResult<T> global_pool(const BasicTensor<T>& input, PoolMode mode);

/// Returns a gradient shaped [N, C, K, 1].
template <class T>
BasicTensor<T> global_pool_backward(const BasicTensor<T>& grad_output,
                                    const GlobalPoolResult<T>& forward);

/// Fully connected layer: input [N, in], weight [out, in], bias [out].
template <class T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias);

template <class T>
struct DenseGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_output,
                             bool want_input_grad, bool want_param_grads);

}  // namespace weaknet::ops
