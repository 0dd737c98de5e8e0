#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace weaknet {

/// One JSON line of a dataset manifest.
struct ManifestRecord {
  std::string path;  // audio, relative to the manifest directory
  std::vector<std::string> labels;
  std::string split = "train";  // train | val | test
  int fold = -1;                // -1 when unassigned
  std::string features;         // LMEL file, relative; set by featurization
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> vocabulary;  // defines class indices
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
  /// Throws std::invalid_argument for labels outside the vocabulary.
  std::size_t class_index(const std::string& label) const;
  /// Multi-hot target over the vocabulary.
  std::vector<float> target(const ManifestRecord& r) const;
  std::vector<int> folds() const;  // distinct assigned folds, ascending
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
void write_vocabulary(const std::filesystem::path& path, const std::vector<std::string>& vocabulary);
std::vector<std::string> read_vocabulary(const std::filesystem::path& path);

/// Reads JSON lines. The vocabulary comes from `vocabulary_path`, else from
/// vocabulary.json beside the manifest, else sorted distinct labels. Paths
/// must be unique and every label must be in the vocabulary.
DatasetManifest read_manifest(const std::filesystem::path& path,
                              const std::filesystem::path& vocabulary_path = {});

}  // namespace weaknet
