#pragma once

// Corpus-level glue used by the CLI and the acceptance suite.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "weaknet/config.hpp"
#include "weaknet/manifest.hpp"
#include "weaknet/metrics.hpp"
#include "weaknet/svm.hpp"
#include "weaknet/transfer.hpp"

namespace weaknet {

/// WEAKNET_WORKERS, else the hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on `workers` threads. Each index is handled
/// exactly once; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Loads (and resamples if needed) every clip, writes features/<stem>.lmel
/// under out_dir, and a manifest.jsonl + vocabulary.json pointing at them.
DatasetManifest featurize_manifest(const DatasetManifest& manifest,
                                   const std::filesystem::path& out_dir,
                                   const LogmelConfig& config, std::size_t workers);

LogmelSpectrogram featurize_clip(const std::filesystem::path& audio, const LogmelConfig& config);

/// Examples for records accepted by `keep` (all when empty). Single-label
/// corpora get class_index from the first label.
std::vector<LabeledExample> load_examples(
    const DatasetManifest& manifest, const LogmelConfig& config,
    const std::function<bool(const ManifestRecord&)>& keep = {});

std::function<bool(const ManifestRecord&)> split_is(const std::string& split);

/// Pooled recording representations of a corpus plus their provenance.
struct RepresentationSet {
  FeatureMatrix matrix;
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> labels;
  std::vector<std::string> splits;
  std::vector<int> folds;
  std::vector<std::string> vocabulary;
  std::string layer;
  std::string pooling;
  std::string variant;
  std::map<std::string, std::string> provenance;
};

RepresentationSet extract_set(const ModelParams& model, const std::vector<LabeledExample>& examples,
                              Layer layer, PoolMode pooling, std::size_t workers);

/// "REPR" u32 version u32 N u32 D then f32 rows; sidecar <path>.json holds
/// the metadata.
void write_representations(const std::filesystem::path& path, const RepresentationSet& set);
RepresentationSet read_representations(const std::filesystem::path& path);

struct SvmSettings {
  std::vector<double> grid = kDefaultCGrid;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  SvmOptions options;
};

struct SvmRun {
  SvmModel model;
  CrossValidation cv;
};

/// Chooses C by stratified cross-validation, then refits on everything.
SvmRun fit_svm(const FeatureMatrix& x, const std::vector<int>& labels, std::size_t num_classes,
               const SvmSettings& settings);

struct FoldResult {
  int fold = 0;
  double accuracy = 0.0;
  double C = 0.0;
  ConfusionMatrix confusion;
};

struct FoldReport {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
};

/// For each fold f: model_for_fold(f, training examples) gives the network,
/// representations are extracted, an SVM is cross-validated and fitted on
/// the other folds and scored on fold f.
FoldReport fold_runner(
    const std::vector<LabeledExample>& examples, const std::vector<int>& folds,
    std::size_t num_classes,
    const std::function<ModelParams(int, const std::vector<LabeledExample>&)>& model_for_fold,
    Layer layer, PoolMode pooling, const SvmSettings& svm, std::size_t workers);

}  // namespace weaknet
