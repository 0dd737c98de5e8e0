#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "weaknet/network.hpp"

namespace weaknet {

inline constexpr int kCheckpointVersion = 1;

/// Free-form provenance copied into the header (config hash, seed, parent
/// checkpoint hash, ...).
using Provenance = std::map<std::string, std::string>;

/// Header: version, variant, C, spec hash, BN momentum/eps, pooling, head,
/// trainable flags. Blobs follow parameter_refs() order, then BN running
/// statistics, then the input normalisation.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const Provenance& provenance = {});

struct LoadedCheckpoint {
  ModelParams params;
  Provenance provenance;
  std::string digest;  // hash of the file bytes
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace weaknet
