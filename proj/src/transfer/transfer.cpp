#include "weaknet/transfer.hpp"

#include <cmath>
#include <stdexcept>

namespace weaknet {
namespace {

ModelParams frozen_copy(const ModelParams& source, std::size_t target_classes, LossKind loss) {
  if (source.variant != Variant::source) {
    throw std::invalid_argument("adaptation starts from a source network, got " +
                                to_string(source.variant));
  }
  if (target_classes < 2) throw std::invalid_argument("adaptation needs at least two target classes");
  for (const auto& block : source.blocks) {
    for (const auto& layer : block) {
      if (!layer.bn.running.tracked) {
        throw std::invalid_argument(
            "source network has no BN running statistics; train or calibrate it first");
      }
    }
  }
  ModelParams p = source;
  p.num_classes = target_classes;
  p.block_trainable.fill(false);
  p.f1_trainable = true;
  p.f2_trainable = true;
  p.ft_trainable = true;
  p.head = loss == LossKind::multilabel_bce ? HeadKind::sigmoid : HeadKind::softmax;
  p.segmentwise = false;
  return p;
}

ConvLayer pointwise(std::size_t cout, std::size_t cin, std::uint64_t seed) {
  ConvLayer l;
  l.weight = Tensor({cout, cin, 1, 1});
  he_uniform(l.weight, cin, seed);
  l.bias = Tensor({cout});
  return l;
}

}  // namespace

std::string to_string(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::i: return "I";
    case AdaptMethod::ii: return "II";
    case AdaptMethod::iii: return "III";
  }
  return "?";
}

AdaptMethod parse_adapt_method(const std::string& s) {
  if (s == "I" || s == "1") return AdaptMethod::i;
  if (s == "II" || s == "2") return AdaptMethod::ii;
  if (s == "III" || s == "3") return AdaptMethod::iii;
  throw std::invalid_argument("unknown adaptation method '" + s + "' (expected I|II|III)");
}

ModelParams adapt_method_i(const ModelParams& source, std::size_t target_classes, LossKind loss,
                           std::uint64_t seed) {
  ModelParams p = frozen_copy(source, target_classes, loss);
  p.variant = Variant::adapted_i;
  p.f2.reset();
  p.f2_trainable = false;
  p.ft_conv = pointwise(target_classes, p.f1.weight.dim(0), seed);
  return p;
}

ModelParams adapt_method_ii(const ModelParams& source, std::size_t target_classes, LossKind loss,
                            std::uint64_t seed) {
  ModelParams p = frozen_copy(source, target_classes, loss);
  p.variant = Variant::adapted_ii;
  p.f2_activation = Activation::relu;
  p.ft_conv = pointwise(target_classes, source.source_classes, seed);
  return p;
}

ModelParams adapt_method_iii(const ModelParams& source, std::size_t target_classes, LossKind loss,
                             std::uint64_t seed) {
  ModelParams p = frozen_copy(source, target_classes, loss);
  p.variant = Variant::adapted_iii;
  p.f2_activation = Activation::relu;
  DenseLayer d;
  d.weight = Tensor({target_classes, source.source_classes});
  he_uniform(d.weight, source.source_classes, seed);
  d.bias = Tensor({target_classes});
  p.ft_dense = std::move(d);
  return p;
}

ModelParams adapt(const ModelParams& source, AdaptMethod method, std::size_t target_classes,
                  LossKind loss, std::uint64_t seed) {
  switch (method) {
    case AdaptMethod::i: return adapt_method_i(source, target_classes, loss, seed);
    case AdaptMethod::ii: return adapt_method_ii(source, target_classes, loss, seed);
    case AdaptMethod::iii: return adapt_method_iii(source, target_classes, loss, seed);
  }
  throw std::logic_error("adapt: bad method");
}

TrainConfig adaptation_config() {
  TrainConfig c;
  c.lr = 0.0002;
  c.epochs = 50;
  c.select_best = false;
  c.loss = LossKind::categorical_ce;
  return c;
}

TrainResult adapt_train(const ModelParams& model, const std::vector<LabeledExample>& train,
                        const TrainConfig& config,
                        const std::vector<LabeledExample>& validation) {
  if (model.variant == Variant::source) {
    throw std::invalid_argument("adapt_train: build an adapted model first");
  }
  if (train.empty()) throw std::invalid_argument("adapt_train: target training set is empty");
  TrainConfig c = config;
  c.pooling = model.pooling;
  return train_model(model, train, c.select_best ? validation : std::vector<LabeledExample>{}, c);
}

std::string to_string(Layer l) { return l == Layer::f1 ? "F1" : "F2"; }

Layer parse_layer(const std::string& s) {
  if (s == "F1" || s == "f1") return Layer::f1;
  if (s == "F2" || s == "f2") return Layer::f2;
  throw std::invalid_argument("unknown layer '" + s + "' (expected F1|F2)");
}

void check_layer(const ModelParams& model, Layer layer) {
  if (layer == Layer::f2 && !model.f2) {
    throw std::invalid_argument("layer F2 is not available in model variant " + to_string(model.variant) +
                                " (Method I discards F2)");
  }
}

RecordingRepresentation pool_representation(const Tensor& activations, Layer layer,
                                            PoolMode pooling, Variant variant) {
  const std::size_t d = activations.dim(0), k = activations.dim(1);
  RecordingRepresentation r;
  r.layer = layer;
  r.pooling = pooling;
  r.variant = variant;
  r.values.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const float* row = activations.data() + i * k;
    if (pooling == PoolMode::max) {
      float m = row[0];
      for (std::size_t s = 1; s < k; ++s) m = std::max(m, row[s]);
      r.values[i] = m;
    } else {
      double sum = 0.0;
      for (std::size_t s = 0; s < k; ++s) sum += row[s];
      r.values[i] = static_cast<float>(sum / static_cast<double>(k));
    }
  }
  return r;
}

RecordingRepresentation extract_representation(const ModelParams& model,
                                               const LogmelSpectrogram& x, Layer layer,
                                               PoolMode pooling) {
  check_layer(model, layer);
  const Inference r = infer(model, x);
  return pool_representation(layer == Layer::f1 ? r.f1 : r.f2, layer, pooling, model.variant);
}

void calibrate_batchnorm(ModelParams& params,
                         const std::vector<const LogmelSpectrogram*>& features) {
  if (features.empty()) throw std::invalid_argument("calibrate_batchnorm: no features");
  // Layer statistics depend on the layers below, which run on batch
  // statistics in train mode, exactly as during training.
  struct Acc {
    std::vector<double> sum, sq;
    double count = 0.0;
  };
  std::vector<std::vector<Acc>> acc(params.blocks.size());
  ModelParams probe = params;
  probe.block_trainable.fill(true);
  for (const LogmelSpectrogram* x : features) {
    ForwardCache cache;
    trunk_forward(probe, prepare_batch(probe, {x}), Mode::train, &cache);
    for (std::size_t b = 0; b < cache.blocks.size(); ++b) {
      acc[b].resize(cache.blocks[b].size());
      for (std::size_t l = 0; l < cache.blocks[b].size(); ++l) {
        const auto& bn = cache.blocks[b][l].bn;
        Acc& a = acc[b][l];
        a.sum.resize(bn.batch_mean.size(), 0.0);
        a.sq.resize(bn.batch_mean.size(), 0.0);
        const double n = static_cast<double>(bn.count);
        for (std::size_t c = 0; c < bn.batch_mean.size(); ++c) {
          const double mu = bn.batch_mean[c];
          a.sum[c] += n * mu;
          a.sq[c] += n * (static_cast<double>(bn.batch_var[c]) + mu * mu);
        }
        a.count += n;
      }
    }
  }
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (std::size_t l = 0; l < params.blocks[b].size(); ++l) {
      const Acc& a = acc[b][l];
      auto& running = params.blocks[b][l].bn.running;
      const std::size_t ch = a.sum.size();
      running.mean = Tensor({ch});
      running.var = Tensor({ch});
      for (std::size_t c = 0; c < ch; ++c) {
        const double mean = a.sum[c] / a.count;
        const double var = std::max(a.sq[c] / a.count - mean * mean, 0.0);
        running.mean[c] = static_cast<float>(mean);
        running.var[c] = static_cast<float>(var * a.count / std::max(a.count - 1.0, 1.0));
      }
      running.tracked = true;
    }
  }
}

}  // namespace weaknet
