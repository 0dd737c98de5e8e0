#include "weaknet/probe.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace weaknet {

std::vector<std::size_t> top_k_indices(const float* values, std::size_t n, std::size_t stride,
                                       std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const float va = values[a * stride], vb = values[b * stride];
                      return va > vb || (va == vb && a < b);
                    });
  idx.resize(k);
  return idx;
}

SceneEventProfile scene_event_probe(const ModelParams& model,
                                    const std::vector<const LogmelSpectrogram*>& clips,
                                    std::size_t k, std::size_t top_n) {
  if (!model.f2) {
    throw std::invalid_argument("scene_event_probe: a " + to_string(model.variant) +
                                " model has no F2 layer");
  }
  if (k < 1) throw std::invalid_argument("scene_event_probe: k must be >= 1");
  const std::size_t events = model.source_classes;
  std::vector<std::size_t> counts(events, 0);
  SceneEventProfile profile;
  profile.k = k;
  for (const LogmelSpectrogram* clip : clips) {
    const Inference r = infer(model, *clip);
    const std::size_t segs = r.f2.dim(1);
    for (std::size_t s = 0; s < segs; ++s) {
      // A ReLU F2 is exactly zero for every event it does not detect; those
      // ties say nothing about the segment and are not counted.
      for (std::size_t e : top_k_indices(r.f2.data() + s, events, segs, k)) {
        if (r.f2[e * segs + s] > 0.0f) ++counts[e];
      }
    }
    profile.segments += segs;
  }
  for (std::size_t e = 0; e < events; ++e) {
    if (counts[e] > 0) profile.events.push_back({e, counts[e]});
  }
  std::stable_sort(profile.events.begin(), profile.events.end(),
                   [](const EventCount& a, const EventCount& b) { return a.count > b.count; });
  if (profile.events.size() > top_n) profile.events.resize(top_n);
  return profile;
}

void export_embeddings(const std::filesystem::path& path,
                       const std::vector<std::vector<float>>& representations,
                       const std::vector<std::string>& labels, std::size_t dim) {
  if (representations.size() != labels.size()) {
    throw std::invalid_argument("export_embeddings: " + std::to_string(representations.size()) +
                                " rows but " + std::to_string(labels.size()) + " labels");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < dim; ++j) out << ",d" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < representations.size(); ++i) {
    if (representations[i].size() != dim) {
      throw std::invalid_argument("export_embeddings: row " + std::to_string(i) +
                                  " has the wrong width");
    }
    if (labels[i].find_first_of(",\"\n") != std::string::npos) {
      throw std::invalid_argument("export_embeddings: label '" + labels[i] +
                                  "' contains a CSV delimiter");
    }
    out << labels[i];
    for (float v : representations[i]) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  EmbeddingTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty embeddings file " + path.string());
  t.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    t.labels.push_back(cell);
    std::vector<float> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
    if (row.size() != t.dim) throw std::runtime_error("ragged row in " + path.string());
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace weaknet
