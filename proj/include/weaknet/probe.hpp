#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "weaknet/network.hpp"

namespace weaknet {

struct EventCount {
  std::size_t event = 0;  // F2 neuron / source class index
  std::size_t count = 0;
};

struct SceneEventProfile {
  std::vector<EventCount> events;  // by count desc, then index asc
  std::size_t segments = 0;        // segments scanned
  std::size_t k = 0;
};

/// Counts, over every segment of every clip, which F2 neurons are among the
/// k most active, and returns the top_n most frequent. Ties inside a segment
/// go to the lower index; neurons with zero activation are never counted.
SceneEventProfile scene_event_probe(const ModelParams& model,
                                    const std::vector<const LogmelSpectrogram*>& clips,
                                    std::size_t k = 5, std::size_t top_n = 10);

/// Indices of the k largest entries of one F2 column; ties to the lower index.
std::vector<std::size_t> top_k_indices(const float* values, std::size_t n, std::size_t stride,
                                       std::size_t k);

/// CSV: header "label,d0,...,d{D-1}", then one row per recording with nine
/// significant digits.
void export_embeddings(const std::filesystem::path& path,
                       const std::vector<std::vector<float>>& representations,
                       const std::vector<std::string>& labels, std::size_t dim);

struct EmbeddingTable {
  std::vector<std::string> labels;
  std::vector<std::vector<float>> rows;
  std::size_t dim = 0;
};

EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace weaknet
