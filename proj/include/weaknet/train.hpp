#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "weaknet/adam.hpp"
#include "weaknet/metrics.hpp"
#include "weaknet/network.hpp"

namespace weaknet {

enum class LossKind { multilabel_bce, categorical_ce };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct LabeledExample {
  std::string id;
  LogmelSpectrogram features;
  std::vector<float> target;  // multi-hot over C (one-hot for single-label)
  int class_index = -1;       // single-label tasks only
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mauc = 0.0;
  double val_map = 0.0;
  double lr = 0.0;
  bool has_validation = false;
};

struct TrainConfig {
  double lr = 0.001;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;          // recordings per optimizer step
  std::size_t max_batch_frames = 4096;  // padded frames per forward pass
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  PoolMode pooling = PoolMode::max;
  LossKind loss = LossKind::multilabel_bce;
  bool select_best = true;          // keep the best validation-MAUC model
  std::size_t patience = 10;        // early stop after this many epochs without gain
  std::size_t plateau_patience = 3; // halve lr after this many epochs without gain
  double lr_decay = 0.5;
  std::filesystem::path log_path;  // per-epoch CSV, skipped when empty
  // Checked after every epoch; returning true ends training there.
  std::function<bool(const EpochRecord&)> stop_when;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based; 0 when no validation was run
  double best_val_mauc = 0.0;
};

/// Checks labels against the class count; throws on empty sets, out-of-range
/// labels and (for multi-label) all-negative targets.
void validate_examples(const std::vector<LabeledExample>& examples, std::size_t num_classes,
                       LossKind loss);

/// Generic optimisation loop over an initialised model. Recordings are
/// shuffled per epoch, grouped into steps of batch_size, bucketed by padded
/// length into forward passes and their gradients accumulated. When no block
/// is trainable the B6 outputs are computed once and reused.
TrainResult train_model(ModelParams params, const std::vector<LabeledExample>& train,
                        const std::vector<LabeledExample>& validation, const TrainConfig& config);

/// Weak-label training of a fresh source network on whole recordings.
TrainResult train_weak(const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& validation, std::size_t num_classes,
                       const TrainConfig& config);

/// Strong-label-assumption baseline: every 128-frame segment (hop 64) gets
/// its recording's labels. The result is scored segment by segment.
TrainResult train_slat(const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& validation, std::size_t num_classes,
                       const TrainConfig& config);

std::vector<LabeledExample> slat_segments(const std::vector<LabeledExample>& examples);

/// Recording-level scores, row-major N x C.
std::vector<double> score_examples(const ModelParams& params,
                                   const std::vector<LabeledExample>& examples);

ClassMetrics evaluate_examples(const ModelParams& params,
                               const std::vector<LabeledExample>& examples);

/// Mean loss of one eval-mode forward per example.
double dataset_loss(const ModelParams& params, const std::vector<LabeledExample>& examples,
                    LossKind loss);

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochRecord>& history);

}  // namespace weaknet
