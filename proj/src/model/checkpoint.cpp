#include "weaknet/checkpoint.hpp"

#include <stdexcept>

#include "weaknet/container.hpp"
#include "weaknet/hash.hpp"

namespace weaknet {
namespace {

std::string bn_name(std::size_t b, std::size_t l) {
  return "b" + std::to_string(b + 1) + ".bn" + std::to_string(l + 1);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const Provenance& provenance) {
  nlohmann::json h;
  h["format"] = "weaknet-checkpoint";
  h["version"] = kCheckpointVersion;
  h["variant"] = to_string(params.variant);
  h["num_classes"] = params.num_classes;
  h["source_classes"] = params.source_classes;
  h["spec_hash"] = spec_of(params).hash();
  h["bn"] = {{"momentum", params.bn_options.momentum}, {"eps", params.bn_options.eps}};
  h["pooling"] = to_string(params.pooling);
  h["head"] = to_string(params.head);
  h["f2_activation"] = to_string(params.f2_activation);
  h["n_mels"] = params.n_mels;
  h["segmentwise"] = params.segmentwise;
  h["ft"] = params.ft_conv ? "conv" : params.ft_dense ? "dense" : "none";
  h["trainable"] = {{"blocks", params.block_trainable},
                    {"f1", params.f1_trainable},
                    {"f2", params.f2_trainable},
                    {"ft", params.ft_trainable}};
  h["provenance"] = provenance;

  std::vector<NamedBlob> blobs;
  for (const ConstParamRef& r : parameter_refs(params)) blobs.push_back({r.name, *r.tensor});
  bool tracked = true;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (std::size_t l = 0; l < params.blocks[b].size(); ++l) {
      const auto& running = params.blocks[b][l].bn.running;
      if (!running.tracked) {
        tracked = false;
        continue;
      }
      blobs.push_back({bn_name(b, l) + ".running_mean", running.mean});
      blobs.push_back({bn_name(b, l) + ".running_var", running.var});
    }
  }
  h["bn_tracked"] = tracked;
  if (!params.normalization.empty()) {
    const std::size_t m = params.normalization.mean.size();
    blobs.push_back({"input.mean", Tensor({m}, params.normalization.mean)});
    blobs.push_back({"input.inv_std", Tensor({m}, params.normalization.inv_std)});
  }
  write_container(path, std::move(h), blobs);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("checkpoint not found: " + path.string());
  }
  const Container c = read_container(path);
  const auto& h = c.header;
  if (h.value("format", "") != "weaknet-checkpoint") {
    throw std::runtime_error(path.string() + " is not a weaknet checkpoint");
  }
  if (h.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  const auto source_classes = h.at("source_classes").get<std::size_t>();
  ModelParams p = build_source(source_classes, 0);
  p.variant = parse_variant(h.at("variant").get<std::string>());
  p.num_classes = h.at("num_classes").get<std::size_t>();
  p.bn_options.momentum = h.at("bn").at("momentum").get<double>();
  p.bn_options.eps = h.at("bn").at("eps").get<double>();
  p.pooling = parse_pool_mode(h.at("pooling").get<std::string>());
  p.head = parse_head(h.at("head").get<std::string>());
  p.f2_activation = parse_activation(h.at("f2_activation").get<std::string>());
  p.n_mels = h.at("n_mels").get<std::size_t>();
  p.segmentwise = h.at("segmentwise").get<bool>();
  const std::string ft = h.at("ft").get<std::string>();
  if (p.variant == Variant::adapted_i) p.f2.reset();
  if (ft == "conv") {
    p.ft_conv = ConvLayer{};
  } else if (ft == "dense") {
    p.ft_dense = DenseLayer{};
  }
  const auto& t = h.at("trainable");
  p.block_trainable = t.at("blocks").get<std::array<bool, 6>>();
  p.f1_trainable = t.at("f1").get<bool>();
  p.f2_trainable = t.at("f2").get<bool>();
  p.ft_trainable = t.at("ft").get<bool>();

  for (const ParamRef& r : parameter_refs(p)) {
    const Tensor* blob = c.find(r.name);
    if (!blob) throw std::runtime_error("checkpoint lacks tensor " + r.name);
    if (!r.tensor->empty() && r.tensor->shape() != blob->shape()) {
      throw std::runtime_error("checkpoint tensor " + r.name + " has shape " +
                               shape_string(blob->shape()) + ", expected " +
                               shape_string(r.tensor->shape()));
    }
    *r.tensor = *blob;
  }
  if (h.at("bn_tracked").get<bool>()) {
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
      for (std::size_t l = 0; l < p.blocks[b].size(); ++l) {
        const Tensor* mean = c.find(bn_name(b, l) + ".running_mean");
        const Tensor* var = c.find(bn_name(b, l) + ".running_var");
        if (!mean || !var) throw std::runtime_error("checkpoint lacks BN statistics");
        auto& running = p.blocks[b][l].bn.running;
        running.mean = *mean;
        running.var = *var;
        running.tracked = true;
      }
    }
  }
  if (const Tensor* mean = c.find("input.mean")) {
    const Tensor* inv = c.find("input.inv_std");
    if (!inv) throw std::runtime_error("checkpoint lacks input.inv_std");
    p.normalization.mean = mean->storage();
    p.normalization.inv_std = inv->storage();
  }
  if (h.at("spec_hash").get<std::string>() != spec_of(p).hash()) {
    throw std::runtime_error("checkpoint spec hash does not match its tensors");
  }
  LoadedCheckpoint out;
  out.params = std::move(p);
  out.provenance = h.at("provenance").get<Provenance>();
  out.digest = file_digest(path);
  return out;
}

}  // namespace weaknet
