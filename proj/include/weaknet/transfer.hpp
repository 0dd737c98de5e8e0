#pragma once

#include <string>
#include <vector>

#include "weaknet/network.hpp"
#include "weaknet/train.hpp"

namespace weaknet {

enum class AdaptMethod { i, ii, iii };
std::string to_string(AdaptMethod m);
AdaptMethod parse_adapt_method(const std::string& s);  // "I" | "II" | "III"

/// B1..B6 frozen, F1 fine-tuned, F2 dropped, new 1x1 F_T over F1.
ModelParams adapt_method_i(const ModelParams& source, std::size_t target_classes, LossKind loss,
                           std::uint64_t seed = 0);
/// B1..B6 frozen, F1/F2 fine-tuned with F2 switched to ReLU, new 1x1 F_T over F2.
ModelParams adapt_method_ii(const ModelParams& source, std::size_t target_classes, LossKind loss,
                            std::uint64_t seed = 0);
/// B1..B6 frozen, F1/F2 fine-tuned with ReLU F2, pooled, then a dense F_T.
ModelParams adapt_method_iii(const ModelParams& source, std::size_t target_classes, LossKind loss,
                             std::uint64_t seed = 0);
ModelParams adapt(const ModelParams& source, AdaptMethod method, std::size_t target_classes,
                  LossKind loss, std::uint64_t seed = 0);

/// Adaptation defaults: lr 0.0002, 50 epochs, no model selection.
TrainConfig adaptation_config();

/// Trains only the flagged layers and returns the final-epoch model (or the
/// best-validation one when config.select_best is set and validation is given).
TrainResult adapt_train(const ModelParams& model, const std::vector<LabeledExample>& train,
                        const TrainConfig& config = adaptation_config(),
                        const std::vector<LabeledExample>& validation = {});

enum class Layer { f1, f2 };
std::string to_string(Layer l);
Layer parse_layer(const std::string& s);  // "F1" | "F2"

struct RecordingRepresentation {
  std::vector<float> values;
  Layer layer = Layer::f1;
  PoolMode pooling = PoolMode::max;
  Variant variant = Variant::source;
};

/// Throws std::invalid_argument when the model has no such layer.
void check_layer(const ModelParams& model, Layer layer);

RecordingRepresentation pool_representation(const Tensor& activations, Layer layer,
                                            PoolMode pooling, Variant variant);

RecordingRepresentation extract_representation(const ModelParams& model,
                                               const LogmelSpectrogram& x, Layer layer,
                                               PoolMode pooling);

/// Sets every BN layer's running statistics to the pooled train-mode batch
/// statistics of `features`, one recording per pass. Used to give untrained
/// networks usable eval-mode normalisation.
void calibrate_batchnorm(ModelParams& params, const std::vector<const LogmelSpectrogram*>& features);

}  // namespace weaknet
