#include "weaknet/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "weaknet/hash.hpp"

namespace weaknet {
namespace {

constexpr ops::ConvGeometry kBlockConv{1, 1};
constexpr ops::ConvGeometry kValid{1, 0};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

ConvLayer make_conv(std::size_t cout, std::size_t cin, std::size_t k,
                    ops::ConvGeometry geometry, std::uint64_t seed) {
  ConvLayer layer;
  layer.weight = Tensor({cout, cin, k, k});
  he_uniform(layer.weight, cin * k * k, seed);
  layer.bias = Tensor({cout});
  layer.geometry = geometry;
  return layer;
}

void relu_inplace(Tensor& t) {
  for (float& v : t.values()) v = v > 0.0f ? v : 0.0f;
}

Tensor squeeze_last(const Tensor& t) {
  // [N, C, K, 1] -> [N, C, K]
  Tensor out = t;
  out.reshape({t.dim(0), t.dim(1), t.dim(2)});
  return out;
}

struct GradLayout {
  std::vector<std::size_t> block_offset;  // first index of each block
  std::size_t f1 = 0;
  std::size_t f2 = 0;
  std::size_t ft = 0;
  std::size_t total = 0;
};

GradLayout grad_layout(const ModelParams& p) {
  GradLayout l;
  std::size_t i = 0;
  for (const auto& block : p.blocks) {
    l.block_offset.push_back(i);
    i += 4 * block.size();
  }
  l.f1 = i;
  i += 2;
  if (p.f2) {
    l.f2 = i;
    i += 2;
  }
  if (p.ft_conv || p.ft_dense) {
    l.ft = i;
    i += 2;
  }
  l.total = i;
  return l;
}

void store(ModelGrads& g, std::size_t index, Tensor&& weight, Tensor&& bias) {
  g.tensors[index] = std::move(weight);
  g.tensors[index + 1] = std::move(bias);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::source: return "source";
    case Variant::adapted_i: return "adapted_I";
    case Variant::adapted_ii: return "adapted_II";
    case Variant::adapted_iii: return "adapted_III";
  }
  return "?";
}
std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "relu"; }
std::string to_string(HeadKind h) { return h == HeadKind::sigmoid ? "sigmoid" : "softmax"; }
std::string to_string(PoolMode p) { return p == PoolMode::max ? "max" : "avg"; }

Variant parse_variant(const std::string& s) {
  if (s == "source") return Variant::source;
  if (s == "adapted_I") return Variant::adapted_i;
  if (s == "adapted_II") return Variant::adapted_ii;
  if (s == "adapted_III") return Variant::adapted_iii;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}
Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}
HeadKind parse_head(const std::string& s) {
  if (s == "sigmoid") return HeadKind::sigmoid;
  if (s == "softmax") return HeadKind::softmax;
  throw std::invalid_argument("unknown head '" + s + "'");
}
PoolMode parse_pool_mode(const std::string& s) {
  if (s == "max") return PoolMode::max;
  if (s == "avg") return PoolMode::avg;
  throw std::invalid_argument("unknown pooling mode '" + s + "' (expected max|avg)");
}

std::string NetworkSpec::hash() const {
  std::string desc = "weaknet-v1;mels=" + std::to_string(n_mels);
  for (std::size_t b = 0; b < 6; ++b) {
    desc += ";b" + std::to_string(b + 1) + "=" + std::to_string(block_filters[b]) + "x" +
            std::to_string(convs_per_block[b]);
  }
  desc += ";f1=" + std::to_string(f1_filters) + "k" + std::to_string(f1_kernel);
  desc += ";seg=" + std::to_string(segment_frames) + "/" + std::to_string(segment_hop);
  desc += ";C=" + std::to_string(num_classes);
  return fnv1a_hex(desc);
}

bool ModelParams::any_block_trainable() const {
  return std::any_of(block_trainable.begin(), block_trainable.end(), [](bool b) { return b; });
}

std::vector<ParamRef> parameter_refs(ModelParams& p) {
  std::vector<ParamRef> refs;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    for (std::size_t l = 0; l < p.blocks[b].size(); ++l) {
      const std::string prefix = "b" + std::to_string(b + 1) + ".";
      const std::string idx = std::to_string(l + 1);
      const bool t = p.block_trainable[b];
      auto& layer = p.blocks[b][l];
      refs.push_back({prefix + "conv" + idx + ".weight", &layer.conv.weight, t});
      refs.push_back({prefix + "conv" + idx + ".bias", &layer.conv.bias, t});
      refs.push_back({prefix + "bn" + idx + ".gamma", &layer.bn.gamma, t});
      refs.push_back({prefix + "bn" + idx + ".beta", &layer.bn.beta, t});
    }
  }
  refs.push_back({"f1.weight", &p.f1.weight, p.f1_trainable});
  refs.push_back({"f1.bias", &p.f1.bias, p.f1_trainable});
  if (p.f2) {
    refs.push_back({"f2.weight", &p.f2->weight, p.f2_trainable});
    refs.push_back({"f2.bias", &p.f2->bias, p.f2_trainable});
  }
  if (p.ft_conv) {
    refs.push_back({"ft.weight", &p.ft_conv->weight, p.ft_trainable});
    refs.push_back({"ft.bias", &p.ft_conv->bias, p.ft_trainable});
  } else if (p.ft_dense) {
    refs.push_back({"ft.weight", &p.ft_dense->weight, p.ft_trainable});
    refs.push_back({"ft.bias", &p.ft_dense->bias, p.ft_trainable});
  }
  return refs;
}

std::vector<ConstParamRef> parameter_refs(const ModelParams& params) {
  std::vector<ConstParamRef> out;
  for (const ParamRef& r : parameter_refs(const_cast<ModelParams&>(params))) {
    out.push_back({r.name, r.tensor, r.trainable});
  }
  return out;
}

void ModelGrads::add(const ModelGrads& other) {
  if (tensors.size() != other.tensors.size()) {
    throw std::invalid_argument("ModelGrads::add: layout mismatch");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor& o = other.tensors[i];
    if (o.empty()) continue;
    if (tensors[i].empty()) {
      tensors[i] = o;
      continue;
    }
    if (tensors[i].shape() != o.shape()) {
      throw std::invalid_argument("ModelGrads::add: shape mismatch");
    }
    for (std::size_t j = 0; j < o.size(); ++j) tensors[i][j] += o[j];
  }
}

void ModelGrads::scale(float factor) {
  for (Tensor& t : tensors) {
    for (float& v : t.values()) v *= factor;
  }
}

ModelGrads zero_grads(const ModelParams& params) {
  ModelGrads g;
  for (const ConstParamRef& r : parameter_refs(params)) {
    g.tensors.push_back(r.trainable ? Tensor(r.tensor->shape()) : Tensor());
  }
  return g;
}

void he_uniform(Tensor& weight, std::size_t fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& v : weight.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<float>((2.0 * u - 1.0) * bound);
  }
}

ModelParams build_source(std::size_t source_classes, std::uint64_t seed) {
  if (source_classes < 1) throw std::invalid_argument("build_source: need at least one class");
  const NetworkSpec spec;
  ModelParams p;
  p.variant = Variant::source;
  p.num_classes = source_classes;
  p.source_classes = source_classes;
  p.n_mels = spec.n_mels;
  std::uint64_t stream = 0;
  std::size_t cin = 1;
  for (std::size_t b = 0; b < 6; ++b) {
    std::vector<ConvBnLayer> block;
    for (std::size_t l = 0; l < spec.convs_per_block[b]; ++l) {
      const std::size_t cout = spec.block_filters[b];
      ConvBnLayer layer;
      layer.conv = make_conv(cout, cin, 3, kBlockConv, mix_seed(seed, stream++));
      layer.bn.gamma = Tensor({cout}, 1.0f);
      layer.bn.beta = Tensor({cout}, 0.0f);
      block.push_back(std::move(layer));
      cin = cout;
    }
    p.blocks.push_back(std::move(block));
  }
  p.f1 = make_conv(spec.f1_filters, cin, spec.f1_kernel, kValid, mix_seed(seed, stream++));
  p.f2 = make_conv(source_classes, spec.f1_filters, 1, kValid, mix_seed(seed, stream++));
  p.f2_activation = Activation::sigmoid;
  p.head = HeadKind::sigmoid;
  return p;
}

NetworkSpec spec_of(const ModelParams& params) {
  NetworkSpec spec;
  spec.n_mels = params.n_mels;
  spec.num_classes = params.num_classes;
  return spec;
}

std::size_t segment_count(std::size_t frames) {
  if (frames < 128) {
    throw std::invalid_argument("segment_count: input too short (" + std::to_string(frames) +
                                " < 128 frames)");
  }
  if (frames % 64 != 0) {
    throw std::invalid_argument("segment_count: " + std::to_string(frames) +
                                " frames is not a multiple of 64; pad first");
  }
  return frames / 64 - 1;
}

LogmelSpectrogram pad_frames(const LogmelSpectrogram& x) {
  if (x.num_frames < 1) throw std::invalid_argument("pad_frames: empty spectrogram");
  const std::size_t target = std::max<std::size_t>(128, (x.num_frames + 63) / 64 * 64);
  LogmelSpectrogram out = x;
  out.num_frames = target;
  out.frames.resize(target * x.n_mels(), static_cast<float>(x.config.floor_value()));
  return out;
}

FeatureNormalization fit_normalization(const std::vector<const LogmelSpectrogram*>& features) {
  if (features.empty()) throw std::invalid_argument("fit_normalization: no features");
  const std::size_t mels = features.front()->n_mels();
  std::vector<double> sum(mels, 0.0), sq(mels, 0.0);
  double count = 0.0;
  for (const LogmelSpectrogram* f : features) {
    if (f->n_mels() != mels) throw std::invalid_argument("fit_normalization: n_mels mismatch");
    for (std::size_t t = 0; t < f->num_frames; ++t) {
      for (std::size_t m = 0; m < mels; ++m) {
        const double v = f->at(t, m);
        sum[m] += v;
        sq[m] += v * v;
      }
    }
    count += static_cast<double>(f->num_frames);
  }
  FeatureNormalization norm;
  norm.mean.resize(mels);
  norm.inv_std.resize(mels);
  for (std::size_t m = 0; m < mels; ++m) {
    const double mean = sum[m] / count;
    const double var = std::max(sq[m] / count - mean * mean, 0.0);
    norm.mean[m] = static_cast<float>(mean);
    norm.inv_std[m] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-6));
  }
  return norm;
}

Tensor prepare_batch(const ModelParams& params,
                     const std::vector<const LogmelSpectrogram*>& batch) {
  if (batch.empty()) throw std::invalid_argument("prepare_batch: empty batch");
  std::vector<LogmelSpectrogram> padded;
  padded.reserve(batch.size());
  for (const LogmelSpectrogram* x : batch) {
    if (x->n_mels() != params.n_mels) {
      throw std::invalid_argument("prepare_batch: network expects " +
                                  std::to_string(params.n_mels) + " mel bands, got " +
                                  std::to_string(x->n_mels()));
    }
    padded.push_back(pad_frames(*x));
    if (padded.back().num_frames != padded.front().num_frames) {
      throw std::invalid_argument("prepare_batch: recordings differ in padded length");
    }
  }
  const std::size_t frames = padded.front().num_frames, mels = params.n_mels;
  Tensor input({batch.size(), 1, frames, mels});
  const auto& norm = params.normalization;
  for (std::size_t n = 0; n < padded.size(); ++n) {
    float* dst = input.data() + n * frames * mels;
    const float* src = padded[n].frames.data();
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t m = 0; m < mels; ++m) {
        const float v = src[t * mels + m];
        dst[t * mels + m] = norm.empty() ? v : (v - norm.mean[m]) * norm.inv_std[m];
      }
    }
  }
  return input;
}

Tensor trunk_forward(const ModelParams& params, const Tensor& input, Mode mode,
                     ForwardCache* cache) {
  if (input.rank() != 4 || input.dim(1) != 1 || input.dim(3) != params.n_mels) {
    throw std::invalid_argument("trunk_forward: expected [N,1,T," + std::to_string(params.n_mels) +
                                "] input, got " + shape_string(input.shape()));
  }
  segment_count(input.dim(2));
  if (cache) {
    std::size_t slots = 1;
    for (const auto& block : params.blocks) slots += block.size() + 1;
    cache->activations.clear();
    cache->activations.reserve(slots);
    cache->activations.push_back(input);
    cache->blocks.assign(params.blocks.size(), {});
    cache->pools.clear();
    cache->has_trunk = true;
  }
  Tensor current = input;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const Mode bn_mode =
        (mode == Mode::train && params.block_trainable[b]) ? Mode::train : Mode::eval;
    for (const ConvBnLayer& layer : params.blocks[b]) {
      Tensor z = ops::conv2d(current, layer.conv.weight, layer.conv.bias, layer.conv.geometry);
      ConvBnCache* lc = nullptr;
      if (cache) {
        cache->blocks[b].push_back({cache->activations.size() - 1, {}});
        lc = &cache->blocks[b].back();
      }
      Tensor y = ops::batchnorm2d(z, layer.bn.gamma, layer.bn.beta, layer.bn.running, bn_mode,
                                  params.bn_options, lc ? &lc->bn : nullptr);
      relu_inplace(y);
      if (cache) cache->activations.push_back(y);
      current = std::move(y);
    }
    ops::MaxPoolResult<float> pooled = ops::maxpool2d(current, 2, 2);
    current = std::move(pooled.output);
    if (cache) {
      cache->activations.push_back(current);
      pooled.output = Tensor();
      cache->pools.push_back(std::move(pooled));
    }
  }
  if (cache) cache->trunk_output = current;
  return current;
}

ForwardOutput head_forward(const ModelParams& params, const Tensor& trunk_output, Mode,
                           ForwardCache* cache) {
  ForwardOutput out;
  Tensor f1 = ops::conv2d(trunk_output, params.f1.weight, params.f1.bias, params.f1.geometry);
  relu_inplace(f1);
  if (f1.dim(3) != 1) {
    throw std::logic_error("head_forward: F1 output width " + std::to_string(f1.dim(3)) +
                           " != 1; the mel axis must reduce to 2 after B6");
  }
  if (cache && !cache->has_trunk) cache->trunk_output = trunk_output;

  Tensor f2, z2;
  if (params.f2) {
    f2 = ops::conv2d(f1, params.f2->weight, params.f2->bias, params.f2->geometry);
    if (params.f2_activation == Activation::sigmoid) {
      z2 = f2;
      f2 = ops::sigmoid(f2);
    } else {
      relu_inplace(f2);
    }
  }

  // Sigmoid outputs under max pooling are pooled as logits: sigmoid is
  // monotone, so the scores are unchanged and the recording logit is kept
  // for a loss gradient that survives saturation.
  auto sigmoid_pool = [&](const Tensor& logits, Tensor probs) {
    if (params.pooling == PoolMode::max) {
      auto pooled = ops::global_pool(logits, PoolMode::max);
      out.recording_logits = pooled.output;
      out.recording_scores = ops::sigmoid(pooled.output);
      if (cache) cache->pool = std::move(pooled);
    } else {
      auto pooled = ops::global_pool(probs, params.pooling);
      out.recording_scores = pooled.output;
      if (cache) cache->pool = std::move(pooled);
    }
    out.segment_scores = squeeze_last(probs);
    if (cache) cache->segment_probs = std::move(probs);
  };

  auto conv_head = [&](const Tensor& zt) {
    if (params.head == HeadKind::sigmoid) {
      sigmoid_pool(zt, ops::sigmoid(zt));
    } else {
      auto pooled = ops::global_pool(zt, params.pooling);
      out.segment_scores = squeeze_last(ops::softmax(zt));
      out.recording_logits = pooled.output;
      out.recording_scores = ops::softmax(pooled.output);
      if (cache) cache->pool = std::move(pooled);
    }
    if (cache) cache->ft_segments = zt;
  };

  switch (params.variant) {
    case Variant::source: {
      if (!params.f2) throw std::logic_error("source model without F2");
      sigmoid_pool(z2, f2);
      break;
    }
    case Variant::adapted_i:
      conv_head(ops::conv2d(f1, params.ft_conv->weight, params.ft_conv->bias,
                            params.ft_conv->geometry));
      break;
    case Variant::adapted_ii:
      conv_head(ops::conv2d(f2, params.ft_conv->weight, params.ft_conv->bias,
                            params.ft_conv->geometry));
      break;
    case Variant::adapted_iii: {
      auto pooled = ops::global_pool(f2, params.pooling);
      Tensor zt = ops::dense(pooled.output, params.ft_dense->weight, params.ft_dense->bias);
      out.segment_scores = squeeze_last(f2);
      out.recording_logits = zt;
      out.recording_scores = params.head == HeadKind::sigmoid ? ops::sigmoid(zt) : ops::softmax(zt);
      if (cache) {
        cache->ft_input = pooled.output;
        cache->pool = std::move(pooled);
      }
      break;
    }
  }
  out.f1 = squeeze_last(f1);
  if (!f2.empty()) out.f2 = squeeze_last(f2);
  if (cache) {
    cache->f1 = std::move(f1);
    cache->f2 = std::move(f2);
    cache->recording = out.recording_scores;
  }
  return out;
}

ForwardOutput forward(const ModelParams& params, const Tensor& input, Mode mode,
                      ForwardCache* cache) {
  Tensor trunk = trunk_forward(params, input, mode, cache);
  return head_forward(params, trunk, mode, cache);
}

ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const Tensor& grad) {
  if (cache.f1.empty()) throw std::logic_error("backward: missing forward cache");
  const GradLayout layout = grad_layout(params);
  ModelGrads grads;
  grads.tensors.resize(layout.total);
  const bool need_trunk = params.any_block_trainable();
  const bool need_f1_grad = params.f1_trainable || need_trunk;

  // Gradient w.r.t. the pre-activations of a conv head. Max-pooled sigmoid
  // heads and softmax heads receive logit gradients already.
  auto conv_head_grad = [&]() -> Tensor {
    Tensor g_seg = ops::global_pool_backward(grad, cache.pool);
    if (params.head == HeadKind::sigmoid && params.pooling != PoolMode::max) {
      return ops::sigmoid_backward(cache.segment_probs, g_seg);
    }
    return g_seg;
  };

  Tensor g_f1;
  switch (params.variant) {
    case Variant::source: {
      Tensor g_z2 = conv_head_grad();
      auto cg = ops::conv2d_backward(cache.f1, params.f2->weight, g_z2, params.f2->geometry,
                                     need_f1_grad, params.f2_trainable);
      if (params.f2_trainable) store(grads, layout.f2, std::move(cg.weight), std::move(cg.bias));
      g_f1 = std::move(cg.input);
      break;
    }
    case Variant::adapted_i: {
      Tensor g_zt = conv_head_grad();
      auto cg = ops::conv2d_backward(cache.f1, params.ft_conv->weight, g_zt,
                                     params.ft_conv->geometry, need_f1_grad, params.ft_trainable);
      if (params.ft_trainable) store(grads, layout.ft, std::move(cg.weight), std::move(cg.bias));
      g_f1 = std::move(cg.input);
      break;
    }
    case Variant::adapted_ii: {
      Tensor g_zt = conv_head_grad();
      const bool need_f2 = params.f2_trainable || need_f1_grad;
      auto ct = ops::conv2d_backward(cache.f2, params.ft_conv->weight, g_zt,
                                     params.ft_conv->geometry, need_f2, params.ft_trainable);
      if (params.ft_trainable) store(grads, layout.ft, std::move(ct.weight), std::move(ct.bias));
      if (need_f2) {
        Tensor g_z2 = ops::relu_backward(cache.f2, ct.input);
        auto c2 = ops::conv2d_backward(cache.f1, params.f2->weight, g_z2, params.f2->geometry,
                                       need_f1_grad, params.f2_trainable);
        if (params.f2_trainable) store(grads, layout.f2, std::move(c2.weight), std::move(c2.bias));
        g_f1 = std::move(c2.input);
      }
      break;
    }
    case Variant::adapted_iii: {
      const Tensor& g_zt = grad;
      const bool need_f2 = params.f2_trainable || need_f1_grad;
      auto dg = ops::dense_backward(cache.ft_input, params.ft_dense->weight, g_zt, need_f2,
                                    params.ft_trainable);
      if (params.ft_trainable) store(grads, layout.ft, std::move(dg.weight), std::move(dg.bias));
      if (need_f2) {
        Tensor g_f2 = ops::global_pool_backward(dg.input, cache.pool);
        Tensor g_z2 = ops::relu_backward(cache.f2, g_f2);
        auto c2 = ops::conv2d_backward(cache.f1, params.f2->weight, g_z2, params.f2->geometry,
                                       need_f1_grad, params.f2_trainable);
        if (params.f2_trainable) store(grads, layout.f2, std::move(c2.weight), std::move(c2.bias));
        g_f1 = std::move(c2.input);
      }
      break;
    }
  }
  if (!need_f1_grad) return grads;

  Tensor g_z1 = ops::relu_backward(cache.f1, g_f1);
  auto c1 = ops::conv2d_backward(cache.trunk_output, params.f1.weight, g_z1, params.f1.geometry,
                                 need_trunk, params.f1_trainable);
  if (params.f1_trainable) store(grads, layout.f1, std::move(c1.weight), std::move(c1.bias));
  if (!need_trunk) return grads;
  if (!cache.has_trunk) throw std::logic_error("backward: trunk activations were not cached");

  std::size_t lowest = 0;
  while (!params.block_trainable[lowest]) ++lowest;
  Tensor g = std::move(c1.input);
  for (std::size_t b = params.blocks.size(); b-- > lowest;) {
    g = ops::maxpool2d_backward(g, cache.pools[b]);
    for (std::size_t l = params.blocks[b].size(); l-- > 0;) {
      const ConvBnLayer& layer = params.blocks[b][l];
      const ConvBnCache& lc = cache.blocks[b][l];
      const Tensor& output = cache.activations[lc.input_index + 1];
      const bool need_input = b > lowest || l > 0;
      const bool trainable = params.block_trainable[b];
      Tensor g_bn = ops::relu_backward(output, g);
      auto bg = ops::batchnorm2d_backward(g_bn, layer.bn.gamma, lc.bn, true, trainable);
      auto cg = ops::conv2d_backward(cache.activations[lc.input_index], layer.conv.weight,
                                     bg.input, layer.conv.geometry, need_input, trainable);
      if (trainable) {
        const std::size_t base = layout.block_offset[b] + 4 * l;
        store(grads, base, std::move(cg.weight), std::move(cg.bias));
        store(grads, base + 2, std::move(bg.gamma), std::move(bg.beta));
      }
      g = std::move(cg.input);
    }
  }
  return grads;
}

void apply_batch_statistics(ModelParams& params, const ForwardCache& cache) {
  for (std::size_t b = 0; b < params.blocks.size() && b < cache.blocks.size(); ++b) {
    if (!params.block_trainable[b]) continue;
    for (std::size_t l = 0; l < cache.blocks[b].size(); ++l) {
      ops::update_running_stats(params.blocks[b][l].bn.running, cache.blocks[b][l].bn,
                                params.bn_options);
    }
  }
}

std::vector<LogmelSpectrogram> split_segments(const LogmelSpectrogram& x) {
  const LogmelSpectrogram padded = pad_frames(x);
  const std::size_t k = segment_count(padded.num_frames), mels = padded.n_mels();
  std::vector<LogmelSpectrogram> out(k);
  for (std::size_t s = 0; s < k; ++s) {
    out[s].config = padded.config;
    out[s].num_frames = 128;
    const auto first = padded.frames.begin() + static_cast<std::ptrdiff_t>(s * 64 * mels);
    out[s].frames.assign(first, first + static_cast<std::ptrdiff_t>(128 * mels));
  }
  return out;
}

Inference infer(const ModelParams& params, const LogmelSpectrogram& x) {
  Inference r;
  if (!params.segmentwise) {
    const Tensor input = prepare_batch(params, {&x});
    ForwardOutput out = forward(params, input, Mode::eval);
    const std::size_t c = out.segment_scores.dim(1), k = out.segment_scores.dim(2);
    r.segments.scores = Tensor({c, k}, out.segment_scores.storage());
    r.recording.scores = out.recording_scores.storage();
    r.f1 = Tensor({out.f1.dim(1), k}, out.f1.storage());
    if (!out.f2.empty()) r.f2 = Tensor({out.f2.dim(1), k}, out.f2.storage());
    return r;
  }
  if (params.variant == Variant::adapted_iii) {
    throw std::invalid_argument("infer: segmentwise scoring needs segment-level class outputs");
  }
  const std::vector<LogmelSpectrogram> segments = split_segments(x);
  const std::size_t k = segments.size();
  std::vector<const LogmelSpectrogram*> ptrs;
  for (const auto& s : segments) ptrs.push_back(&s);
  ForwardOutput out = forward(params, prepare_batch(params, ptrs), Mode::eval);
  // Outputs are [K, C, 1]; transpose to [C, K].
  auto gather = [k](const Tensor& t) {
    const std::size_t c = t.dim(1);
    Tensor g({c, k});
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t j = 0; j < c; ++j) g[j * k + s] = t[s * c + j];
    }
    return g;
  };
  r.segments.scores = gather(out.segment_scores);
  r.f1 = gather(out.f1);
  if (!out.f2.empty()) r.f2 = gather(out.f2);
  if (params.head == HeadKind::softmax) {
    throw std::invalid_argument("infer: segmentwise scoring supports sigmoid heads only");
  }
  r.recording = global_pool(r.segments, params.pooling);
  return r;
}

RecordingScores global_pool(const SegmentScores& segments, PoolMode mode) {
  Tensor t = segments.scores;
  t.reshape({1, t.dim(0), t.dim(1)});
  auto pooled = ops::global_pool(t, mode);
  return {pooled.output.storage()};
}

}  // namespace weaknet
