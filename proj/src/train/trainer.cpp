#include "weaknet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "weaknet/log.hpp"
#include "weaknet/loss.hpp"

namespace weaknet {
namespace {

std::size_t padded_frames(const LogmelSpectrogram& x) {
  return std::max<std::size_t>(128, (x.num_frames + 63) / 64 * 64);
}

// Stacks [1, C, H, W] tensors along the batch axis.
Tensor stack(const std::vector<const Tensor*>& parts) {
  Shape shape = parts.front()->shape();
  shape[0] = parts.size();
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    std::copy(p->data(), p->data() + p->size(), out.data() + offset);
    offset += p->size();
  }
  return out;
}

// Example loss and dL/d(output) for one row of the forward output.
double example_loss(const ModelParams& params, const ForwardOutput& out, std::size_t row,
                    const LabeledExample& ex, LossKind loss, float scale, Tensor& grad) {
  const std::size_t c = params.num_classes;
  if (loss == LossKind::multilabel_bce) {
    if (params.head != HeadKind::sigmoid) {
      throw std::invalid_argument("binary cross entropy needs a sigmoid head");
    }
    const LossValue<float> l =
        out.recording_logits.empty()
            ? bce_loss<float>({out.recording_scores.data() + row * c, c}, ex.target)
            : bce_logits_loss<float>({out.recording_logits.data() + row * c, c}, ex.target);
    for (std::size_t j = 0; j < c; ++j) grad[row * c + j] = l.grad[j] * scale;
    return l.value;
  }
  if (params.head != HeadKind::softmax) {
    throw std::invalid_argument("categorical cross entropy needs a softmax head");
  }
  const std::span<const float> z(out.recording_logits.data() + row * c, c);
  const LossValue<float> l = cce_loss<float>(z, static_cast<std::size_t>(ex.class_index));
  for (std::size_t j = 0; j < c; ++j) grad[row * c + j] = l.grad[j] * scale;
  return l.value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string to_string(LossKind k) {
  return k == LossKind::multilabel_bce ? "multilabel_bce" : "categorical_ce";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "multilabel_bce") return LossKind::multilabel_bce;
  if (s == "categorical_ce") return LossKind::categorical_ce;
  throw std::invalid_argument("unknown loss '" + s + "' (expected multilabel_bce|categorical_ce)");
}

void validate_examples(const std::vector<LabeledExample>& examples, std::size_t num_classes,
                       LossKind loss) {
  if (examples.empty()) throw std::invalid_argument("training set is empty");
  for (const LabeledExample& ex : examples) {
    if (ex.target.size() != num_classes) {
      throw std::invalid_argument("example " + ex.id + " has " + std::to_string(ex.target.size()) +
                                  " targets, model has " + std::to_string(num_classes) +
                                  " classes");
    }
    if (loss == LossKind::categorical_ce) {
      if (ex.class_index < 0 || static_cast<std::size_t>(ex.class_index) >= num_classes) {
        throw std::invalid_argument("example " + ex.id + " has class index out of range");
      }
    } else if (std::none_of(ex.target.begin(), ex.target.end(), [](float v) { return v > 0.5f; })) {
      throw std::invalid_argument("example " + ex.id + " has no positive label");
    }
  }
}

std::vector<double> score_examples(const ModelParams& params,
                                   const std::vector<LabeledExample>& examples) {
  std::vector<double> scores;
  scores.reserve(examples.size() * params.num_classes);
  for (const LabeledExample& ex : examples) {
    const Inference r = infer(params, ex.features);
    scores.insert(scores.end(), r.recording.scores.begin(), r.recording.scores.end());
  }
  return scores;
}

ClassMetrics evaluate_examples(const ModelParams& params,
                               const std::vector<LabeledExample>& examples) {
  const std::vector<double> scores = score_examples(params, examples);
  std::vector<int> labels;
  labels.reserve(scores.size());
  for (const LabeledExample& ex : examples) {
    for (float t : ex.target) labels.push_back(t > 0.5f ? 1 : 0);
  }
  return class_metrics(scores, labels, params.num_classes);
}

double dataset_loss(const ModelParams& params, const std::vector<LabeledExample>& examples,
                    LossKind loss) {
  double total = 0.0;
  Tensor grad({1, params.num_classes});
  for (const LabeledExample& ex : examples) {
    const ForwardOutput out = forward(params, prepare_batch(params, {&ex.features}), Mode::eval);
    total += example_loss(params, out, 0, ex, loss, 1.0f, grad);
  }
  return total / static_cast<double>(examples.size());
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path.string());
  out << "epoch,train_loss,val_MAUC,val_MAP,lr\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ','
        << (r.has_validation ? format_double(r.val_mauc) : "") << ','
        << (r.has_validation ? format_double(r.val_map) : "") << ',' << format_double(r.lr)
        << '\n';
  }
}

TrainResult train_model(ModelParams params, const std::vector<LabeledExample>& train,
                        const std::vector<LabeledExample>& validation, const TrainConfig& config) {
  if (!(config.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  validate_examples(train, params.num_classes, config.loss);
  if (!validation.empty()) validate_examples(validation, params.num_classes, config.loss);

  const bool cache_trunk = !params.any_block_trainable();
  std::vector<Tensor> trunk;
  std::vector<Tensor> inputs;
  if (cache_trunk) {
    trunk.reserve(train.size());
    for (const LabeledExample& ex : train) {
      trunk.push_back(trunk_forward(params, prepare_batch(params, {&ex.features}), Mode::eval,
                                    nullptr));
    }
  }

  AdamState state = adam_init(params);
  AdamConfig adam{config.lr, config.beta1, config.beta2, config.adam_eps};
  std::mt19937_64 rng(config.seed ^ 0x5eedf00dull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  ModelParams best;
  bool have_best = false;
  double best_mauc = -1.0;
  std::size_t since_best = 0, since_decay = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> step(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      std::stable_sort(step.begin(), step.end(), [&](std::size_t a, std::size_t b) {
        return padded_frames(train[a].features) < padded_frames(train[b].features);
      });
      const float scale = 1.0f / static_cast<float>(step.size());
      ModelGrads grads = zero_grads(params);
      std::size_t i = 0;
      while (i < step.size()) {
        const std::size_t frames = padded_frames(train[step[i]].features);
        const std::size_t cap = std::max<std::size_t>(1, config.max_batch_frames / frames);
        std::size_t j = i;
        while (j < step.size() && j - i < cap && padded_frames(train[step[j]].features) == frames) {
          ++j;
        }
        ForwardCache cache;
        ForwardOutput out;
        if (cache_trunk) {
          std::vector<const Tensor*> parts;
          for (std::size_t q = i; q < j; ++q) parts.push_back(&trunk[step[q]]);
          out = head_forward(params, stack(parts), Mode::train, &cache);
        } else {
          std::vector<const LogmelSpectrogram*> batch;
          for (std::size_t q = i; q < j; ++q) batch.push_back(&train[step[q]].features);
          out = forward(params, prepare_batch(params, batch), Mode::train, &cache);
        }
        Tensor grad({j - i, params.num_classes});
        for (std::size_t q = i; q < j; ++q) {
          loss_sum += example_loss(params, out, q - i, train[step[q]], config.loss, scale, grad);
        }
        grads.add(backward(params, cache, grad));
        apply_batch_statistics(params, cache);
        i = j;
      }
      adam_step(params, grads, state, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.lr = adam.lr;
    if (!validation.empty()) {
      try {
        const ClassMetrics m = evaluate_examples(params, validation);
        rec.has_validation = true;
        rec.val_mauc = m.mauc;
        rec.val_map = m.map;
      } catch (const UndefinedMetric& e) {
        // Too small a validation set to rank anything; the epoch counts as unvalidated.
        log_warning(std::string("validation skipped: ") + e.what());
      }
    }
    result.history.push_back(rec);
    log_info("epoch " + std::to_string(epoch) + " loss " + format_double(rec.train_loss) +
             (rec.has_validation ? " val_MAUC " + format_double(rec.val_mauc) : "") + " lr " +
             format_double(rec.lr));

    if (rec.has_validation && config.select_best) {
      if (rec.val_mauc > best_mauc) {
        best_mauc = rec.val_mauc;
        best = params;
        have_best = true;
        result.best_epoch = epoch;
        since_best = since_decay = 0;
      } else {
        ++since_best;
        ++since_decay;
        if (since_best >= config.patience) {
          log_info("early stop: no validation gain for " + std::to_string(since_best) +
                   " epochs");
          break;
        }
        if (since_decay >= config.plateau_patience) {
          adam.lr *= config.lr_decay;
          since_decay = 0;
        }
      }
    }
    if (config.stop_when && config.stop_when(rec)) break;
  }
  if (!config.log_path.empty()) write_training_log(config.log_path, result.history);
  result.params = have_best ? std::move(best) : std::move(params);
  result.best_val_mauc = have_best ? best_mauc : 0.0;
  return result;
}

namespace {

ModelParams fresh_source(const std::vector<LabeledExample>& train, std::size_t num_classes,
                         const TrainConfig& config) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  ModelParams params = build_source(num_classes, config.seed);
  params.pooling = config.pooling;
  std::vector<const LogmelSpectrogram*> feats;
  for (const LabeledExample& ex : train) feats.push_back(&ex.features);
  params.normalization = fit_normalization(feats);
  return params;
}

}  // namespace

TrainResult train_weak(const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& validation, std::size_t num_classes,
                       const TrainConfig& config) {
  if (config.loss != LossKind::multilabel_bce) {
    throw std::invalid_argument("train_weak: source training uses multilabel_bce");
  }
  validate_examples(train, num_classes, config.loss);
  return train_model(fresh_source(train, num_classes, config), train, validation, config);
}

std::vector<LabeledExample> slat_segments(const std::vector<LabeledExample>& examples) {
  std::vector<LabeledExample> out;
  for (const LabeledExample& ex : examples) {
    std::vector<LogmelSpectrogram> segs = split_segments(ex.features);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      LabeledExample seg;
      seg.id = ex.id + "#" + std::to_string(s);
      seg.features = std::move(segs[s]);
      seg.target = ex.target;
      seg.class_index = ex.class_index;
      out.push_back(std::move(seg));
    }
  }
  return out;
}

TrainResult train_slat(const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& validation, std::size_t num_classes,
                       const TrainConfig& config) {
  if (config.loss != LossKind::multilabel_bce) {
    throw std::invalid_argument("train_slat: source training uses multilabel_bce");
  }
  validate_examples(train, num_classes, config.loss);
  ModelParams params = fresh_source(train, num_classes, config);
  params.segmentwise = true;
  return train_model(std::move(params), slat_segments(train), validation, config);
}

}  // namespace weaknet
