#pragma once

// The fully convolutional weak-label network: six conv blocks, a 2x2 segment
// layer (F1), a 1x1 source-class layer (F2) and global pooling over segments,
// plus the three target-adapted variants built on top of it.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "weaknet/logmel.hpp"
#include "weaknet/ops.hpp"
#include "weaknet/tensor.hpp"

namespace weaknet {

using ops::Mode;
using ops::PoolMode;

enum class Variant { source, adapted_i, adapted_ii, adapted_iii };
enum class Activation { sigmoid, relu };
/// Output nonlinearity of the final layer. Softmax heads pool logits over
/// segments and normalise at recording level.
enum class HeadKind { sigmoid, softmax };

std::string to_string(Variant v);
std::string to_string(Activation a);
std::string to_string(HeadKind h);
std::string to_string(PoolMode p);
Variant parse_variant(const std::string& s);
Activation parse_activation(const std::string& s);
HeadKind parse_head(const std::string& s);
PoolMode parse_pool_mode(const std::string& s);

struct NetworkSpec {
  std::array<std::size_t, 6> block_filters{16, 32, 64, 128, 256, 512};
  std::array<std::size_t, 6> convs_per_block{2, 2, 2, 2, 2, 1};
  std::size_t f1_filters = 1024;
  std::size_t f1_kernel = 2;
  std::size_t n_mels = 128;
  std::size_t segment_frames = 128;
  std::size_t segment_hop = 64;
  std::size_t num_classes = 0;

  /// Total time downsampling of B1..B6 (product of pooling strides).
  std::size_t time_stride() const { return 64; }
  /// Stable digest of the topology.
  std::string hash() const;
};

struct ConvLayer {
  Tensor weight;  // [Cout, Cin, kh, kw]
  Tensor bias;    // [Cout]
  ops::ConvGeometry geometry;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  ops::RunningStats<float> running;
};

struct ConvBnLayer {
  ConvLayer conv;
  BatchNormLayer bn;
};

struct DenseLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

/// Per-mel-band affine normalisation fitted on training features.
struct FeatureNormalization {
  std::vector<float> mean;
  std::vector<float> inv_std;
  bool empty() const { return mean.empty(); }
};

struct ModelParams {
  Variant variant = Variant::source;
  std::size_t num_classes = 0;     // width of the recording-level output
  std::size_t source_classes = 0;  // C_S, width of F2
  std::vector<std::vector<ConvBnLayer>> blocks;
  ConvLayer f1;
  std::optional<ConvLayer> f2;
  Activation f2_activation = Activation::sigmoid;
  std::optional<ConvLayer> ft_conv;    // Methods I and II
  std::optional<DenseLayer> ft_dense;  // Method III
  HeadKind head = HeadKind::sigmoid;
  PoolMode pooling = PoolMode::max;
  ops::BatchNormOptions bn_options;
  FeatureNormalization normalization;
  std::size_t n_mels = 128;
  // SLAT models never saw more than one segment at a time, so they are
  // scored by running each 128-frame segment separately.
  bool segmentwise = false;

  std::array<bool, 6> block_trainable{true, true, true, true, true, true};
  bool f1_trainable = true;
  bool f2_trainable = true;
  bool ft_trainable = true;

  bool any_block_trainable() const;
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool trainable;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
  bool trainable;
};

/// Learnable tensors in checkpoint order: blocks (conv weight, conv bias, bn
/// gamma, bn beta), F1, F2, F_T.
std::vector<ParamRef> parameter_refs(ModelParams& params);
std::vector<ConstParamRef> parameter_refs(const ModelParams& params);

/// Gradients aligned with parameter_refs(); frozen entries stay empty.
struct ModelGrads {
  std::vector<Tensor> tensors;
  void add(const ModelGrads& other);
  void scale(float factor);
};

ModelGrads zero_grads(const ModelParams& params);

/// He-uniform conv/dense weights, zero biases, unit BN scale. Running BN
/// statistics start untracked. All layers trainable.
ModelParams build_source(std::size_t source_classes, std::uint64_t seed);

NetworkSpec spec_of(const ModelParams& params);

/// Fills a layer with He-uniform weights (bound sqrt(6 / fan_in)).
void he_uniform(Tensor& weight, std::size_t fan_in, std::uint64_t seed);

/// K = T/64 - 1 for padded T; throws std::invalid_argument when T < 128 or T
/// is not a multiple of 64.
std::size_t segment_count(std::size_t frames);

/// Appends silence (log floor) frames up to max(128, next multiple of 64).
LogmelSpectrogram pad_frames(const LogmelSpectrogram& x);

FeatureNormalization fit_normalization(const std::vector<const LogmelSpectrogram*>& features);

/// Pads, normalises and stacks equal-length spectrograms into [N, 1, T, n_mels].
Tensor prepare_batch(const ModelParams& params,
                     const std::vector<const LogmelSpectrogram*>& batch);

struct ConvBnCache {
  std::size_t input_index = 0;  // into ForwardCache::activations
  ops::BatchNormCache<float> bn;
};

struct ForwardCache {
  std::vector<Tensor> activations;  // block inputs/outputs in trunk order
  std::vector<std::vector<ConvBnCache>> blocks;
  std::vector<ops::MaxPoolResult<float>> pools;  // outputs moved into activations
  Tensor trunk_output;                           // B6 output
  Tensor f1;                                     // post-ReLU [N,1024,K,1]
  Tensor f2;                                     // post-activation [N,C_S,K,1]
  Tensor ft_segments;                            // F_T output before head
  Tensor ft_input;                               // dense input (Method III)
  Tensor segment_probs;                          // sigmoid outputs per segment
  ops::GlobalPoolResult<float> pool;
  Tensor recording;
  bool has_trunk = false;
};

struct ForwardOutput {
  Tensor segment_scores;    // [N, C_seg, K]
  Tensor recording_scores;  // [N, C]
  Tensor recording_logits;  // [N, C], empty for avg-pooled sigmoid heads
  Tensor f1;                // [N, 1024, K]
  Tensor f2;                // [N, C_S, K], empty for Method I
};

/// B1..B6. In train mode, BN layers of trainable blocks use batch statistics;
/// frozen blocks always use running statistics.
Tensor trunk_forward(const ModelParams& params, const Tensor& input, Mode mode,
                     ForwardCache* cache);

/// F1 onwards, from a B6 output.
ForwardOutput head_forward(const ModelParams& params, const Tensor& trunk_output,
                           Mode mode, ForwardCache* cache);

ForwardOutput forward(const ModelParams& params, const Tensor& input, Mode mode,
                      ForwardCache* cache = nullptr);

/// `grad` is dL/d(recording_logits) when the forward output has logits
/// (softmax heads, max-pooled sigmoid heads, Method III) and
/// dL/d(recording_scores) otherwise. Returns gradients for trainable
/// parameters only and stops descending once no trainable layer remains.
ModelGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const Tensor& grad);

/// Commits train-mode batch statistics from `cache` to the running stats of
/// trainable blocks.
void apply_batch_statistics(ModelParams& params, const ForwardCache& cache);

struct SegmentScores {
  Tensor scores;  // [C, K]
  std::size_t segment_frames = 128;
  std::size_t segment_hop = 64;
  std::size_t segments() const { return scores.empty() ? 0 : scores.dim(1); }
};

struct RecordingScores {
  std::vector<float> scores;
};

struct Inference {
  SegmentScores segments;
  RecordingScores recording;
  Tensor f1;  // [1024, K]
  Tensor f2;  // [C_S, K] or empty
};

/// 128-frame windows with hop 64 over the padded recording.
std::vector<LogmelSpectrogram> split_segments(const LogmelSpectrogram& x);

/// Eval-mode forward of one recording (padding and normalisation included).
/// Segmentwise models forward each segment on its own.
Inference infer(const ModelParams& params, const LogmelSpectrogram& x);

RecordingScores global_pool(const SegmentScores& segments, PoolMode mode);

}  // namespace weaknet
