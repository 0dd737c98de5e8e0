#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "weaknet/logmel.hpp"
#include "weaknet/svm.hpp"
#include "weaknet/train.hpp"
#include "weaknet/transfer.hpp"

namespace weaknet {

/// Flat "[section]" + "key = value" file. '#' and ';' start comments.
/// Every key must be known; the hash covers the effective values of all keys.
struct ExperimentConfig {
  LogmelConfig dsp;
  TrainConfig train;  // source and SLAT training
  TrainConfig adapt = adaptation_config();
  AdaptMethod method = AdaptMethod::iii;
  Layer layer = Layer::f1;
  PoolMode representation_pooling = PoolMode::max;
  std::vector<double> c_grid = kDefaultCGrid;
  std::size_t svm_folds = 5;
  std::uint64_t svm_seed = 0;
  SvmOptions svm;
  std::size_t probe_k = 5;
  std::size_t probe_top_n = 10;

  /// Canonical "section.key=value" lines, sorted.
  std::string canonical() const;
  std::string hash() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace weaknet
