#include "weaknet/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace weaknet {

std::size_t DatasetManifest::class_index(const std::string& label) const {
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), label);
  if (it == vocabulary.end()) {
    throw std::invalid_argument("label '" + label + "' is not in the vocabulary");
  }
  return static_cast<std::size_t>(it - vocabulary.begin());
}

std::vector<float> DatasetManifest::target(const ManifestRecord& r) const {
  std::vector<float> t(vocabulary.size(), 0.0f);
  for (const std::string& l : r.labels) t[class_index(l)] = 1.0f;
  return t;
}

std::vector<int> DatasetManifest::folds() const {
  std::set<int> f;
  for (const auto& r : records) {
    if (r.fold >= 0) f.insert(r.fold);
  }
  return {f.begin(), f.end()};
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const ManifestRecord& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["labels"] = r.labels;
    j["split"] = r.split;
    if (r.fold >= 0) j["fold"] = r.fold;
    if (!r.features.empty()) j["features"] = r.features;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_vocabulary(const std::filesystem::path& path, const std::vector<std::string>& vocabulary) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << nlohmann::json(vocabulary).dump(2) << '\n';
}

std::vector<std::string> read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  try {
    return nlohmann::json::parse(in).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad vocabulary file " + path.string() + ": " + e.what());
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path,
                              const std::filesystem::path& vocabulary_path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest not found: " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> paths;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.path = j.at("path").get<std::string>();
      r.labels = j.at("labels").get<std::vector<std::string>>();
      r.split = j.value("split", "train");
      r.fold = j.value("fold", -1);
      r.features = j.value("features", "");
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad split '" +
                               r.split + "'");
    }
    if (!paths.insert(r.path).second) {
      throw std::runtime_error(path.string() + ": duplicate path " + r.path);
    }
    m.records.push_back(std::move(r));
  }
  std::filesystem::path vocab = vocabulary_path;
  if (vocab.empty() && std::filesystem::exists(m.base_dir / "vocabulary.json")) {
    vocab = m.base_dir / "vocabulary.json";
  }
  if (!vocab.empty()) {
    m.vocabulary = read_vocabulary(vocab);
  } else {
    std::set<std::string> labels;
    for (const auto& r : m.records) labels.insert(r.labels.begin(), r.labels.end());
    m.vocabulary.assign(labels.begin(), labels.end());
  }
  for (const auto& r : m.records) {
    for (const auto& l : r.labels) m.class_index(l);
  }
  return m;
}

}  // namespace weaknet
