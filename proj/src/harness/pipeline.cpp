#include "weaknet/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "weaknet/log.hpp"

namespace weaknet {

std::size_t worker_count() {
  if (const char* env = std::getenv("WEAKNET_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

LogmelSpectrogram featurize_clip(const std::filesystem::path& audio, const LogmelConfig& config) {
  AudioClip clip = load_audio(audio);
  if (clip.sample_rate != config.sample_rate) clip = resample(clip, config.sample_rate);
  return logmel(clip, config);
}

DatasetManifest featurize_manifest(const DatasetManifest& manifest,
                                   const std::filesystem::path& out_dir,
                                   const LogmelConfig& config, std::size_t workers) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "features");
  DatasetManifest out = manifest;
  out.base_dir = out_dir;
  std::set<std::string> stems;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    ManifestRecord& r = out.records[i];
    std::string stem = fs::path(r.path).stem().string();
    if (!stems.insert(stem).second) stem += "_" + std::to_string(i);
    r.features = "features/" + stem + ".lmel";
    const fs::path audio = fs::absolute(manifest.resolve(manifest.records[i].path));
    r.path = fs::relative(audio, fs::absolute(out_dir)).generic_string();
  }
  parallel_for(manifest.records.size(), workers, [&](std::size_t i) {
    const fs::path audio = manifest.resolve(manifest.records[i].path);
    if (!fs::exists(audio)) throw std::runtime_error("audio file not found: " + audio.string());
    write_logmel(out_dir / out.records[i].features, featurize_clip(audio, config));
  });
  write_manifest(out_dir / "manifest.jsonl", out.records);
  write_vocabulary(out_dir / "vocabulary.json", out.vocabulary);
  return out;
}

std::function<bool(const ManifestRecord&)> split_is(const std::string& split) {
  return [split](const ManifestRecord& r) { return r.split == split; };
}

std::vector<LabeledExample> load_examples(const DatasetManifest& manifest,
                                          const LogmelConfig& config,
                                          const std::function<bool(const ManifestRecord&)>& keep) {
  std::vector<const ManifestRecord*> chosen;
  for (const ManifestRecord& r : manifest.records) {
    if (!keep || keep(r)) chosen.push_back(&r);
  }
  std::vector<LabeledExample> out(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const ManifestRecord& r = *chosen[i];
    if (r.features.empty()) {
      throw std::runtime_error("manifest record " + r.path + " has no features; run featurize");
    }
    const auto path = manifest.resolve(r.features);
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("feature file not found: " + path.string());
    }
    out[i].id = r.path;
    out[i].features = read_logmel(path, config);
    out[i].target = manifest.target(r);
    if (!r.labels.empty()) out[i].class_index = static_cast<int>(manifest.class_index(r.labels[0]));
  }
  return out;
}

RepresentationSet extract_set(const ModelParams& model, const std::vector<LabeledExample>& examples,
                              Layer layer, PoolMode pooling, std::size_t workers) {
  check_layer(model, layer);
  std::vector<std::vector<float>> rows(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    rows[i] = extract_representation(model, examples[i].features, layer, pooling).values;
  });
  RepresentationSet set;
  set.layer = to_string(layer);
  set.pooling = to_string(pooling);
  set.variant = to_string(model.variant);
  set.matrix.cols = layer == Layer::f1 ? model.f1.weight.dim(0) : model.source_classes;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    set.matrix.append(rows[i]);
    set.ids.push_back(examples[i].id);
  }
  return set;
}

void write_representations(const std::filesystem::path& path, const RepresentationSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint32_t head[3] = {1, static_cast<std::uint32_t>(set.matrix.rows),
                                 static_cast<std::uint32_t>(set.matrix.cols)};
  out.write("REPR", 4);
  out.write(reinterpret_cast<const char*>(head), sizeof head);
  out.write(reinterpret_cast<const char*>(set.matrix.values.data()),
            static_cast<std::streamsize>(set.matrix.values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path.string());

  nlohmann::ordered_json j;
  j["layer"] = set.layer;
  j["pooling"] = set.pooling;
  j["variant"] = set.variant;
  j["D"] = set.matrix.cols;
  j["N"] = set.matrix.rows;
  j["provenance"] = set.provenance;
  j["ids"] = set.ids;
  j["labels"] = set.labels;
  j["splits"] = set.splits;
  j["folds"] = set.folds;
  j["vocabulary"] = set.vocabulary;
  std::ofstream side(path.string() + ".json");
  side << j.dump(2) << '\n';
  if (!side) throw std::runtime_error("write failed: " + path.string() + ".json");
}

RepresentationSet read_representations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("representation file not found: " + path.string());
  char magic[4];
  std::uint32_t head[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (!in || std::memcmp(magic, "REPR", 4) != 0 || head[0] != 1) {
    throw std::runtime_error("not a representation file: " + path.string());
  }
  RepresentationSet set;
  set.matrix.rows = head[1];
  set.matrix.cols = head[2];
  set.matrix.values.resize(static_cast<std::size_t>(head[1]) * head[2]);
  in.read(reinterpret_cast<char*>(set.matrix.values.data()),
          static_cast<std::streamsize>(set.matrix.values.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated representation file: " + path.string());
  std::ifstream side(path.string() + ".json");
  if (!side) throw std::runtime_error("missing sidecar " + path.string() + ".json");
  const auto j = nlohmann::json::parse(side);
  set.layer = j.at("layer").get<std::string>();
  set.pooling = j.at("pooling").get<std::string>();
  set.variant = j.at("variant").get<std::string>();
  set.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  set.ids = j.at("ids").get<std::vector<std::string>>();
  set.labels = j.at("labels").get<std::vector<std::vector<std::string>>>();
  set.splits = j.at("splits").get<std::vector<std::string>>();
  set.folds = j.at("folds").get<std::vector<int>>();
  set.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  if (set.ids.size() != set.matrix.rows) {
    throw std::runtime_error("sidecar row count disagrees with " + path.string());
  }
  return set;
}

SvmRun fit_svm(const FeatureMatrix& x, const std::vector<int>& labels, std::size_t num_classes,
               const SvmSettings& settings) {
  SvmRun run;
  run.cv = cross_validate_C(x, labels, num_classes, settings.grid, settings.folds, settings.seed,
                            settings.options);
  run.model = train_linear_svm(x, labels, num_classes, run.cv.best_C, settings.options);
  return run;
}

FoldReport fold_runner(
    const std::vector<LabeledExample>& examples, const std::vector<int>& folds,
    std::size_t num_classes,
    const std::function<ModelParams(int, const std::vector<LabeledExample>&)>& model_for_fold,
    Layer layer, PoolMode pooling, const SvmSettings& svm, std::size_t workers) {
  if (examples.size() != folds.size()) throw std::invalid_argument("fold_runner: fold list mismatch");
  const std::set<int> distinct(folds.begin(), folds.end());
  if (distinct.count(-1)) throw std::invalid_argument("fold_runner: record without a fold");
  FoldReport report;
  std::vector<double> accs;
  for (int f : distinct) {
    std::vector<LabeledExample> train;
    std::vector<std::size_t> test_idx, train_idx;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      (folds[i] == f ? test_idx : train_idx).push_back(i);
    }
    if (train_idx.empty() || test_idx.empty()) {
      throw std::invalid_argument("fold " + std::to_string(f) + " has an empty partition");
    }
    for (std::size_t i : train_idx) train.push_back(examples[i]);
    const ModelParams model = model_for_fold(f, train);
    const RepresentationSet reps = extract_set(model, examples, layer, pooling, workers);
    FeatureMatrix xtr, xte;
    xtr.cols = xte.cols = reps.matrix.cols;
    std::vector<int> ytr, yte;
    for (std::size_t i : train_idx) {
      xtr.values.insert(xtr.values.end(), reps.matrix.row(i), reps.matrix.row(i) + xtr.cols);
      ++xtr.rows;
      ytr.push_back(examples[i].class_index);
    }
    for (std::size_t i : test_idx) {
      xte.values.insert(xte.values.end(), reps.matrix.row(i), reps.matrix.row(i) + xte.cols);
      ++xte.rows;
      yte.push_back(examples[i].class_index);
    }
    const SvmRun run = fit_svm(xtr, ytr, num_classes, svm);
    const AccuracyReport acc = accuracy_and_confusion(predict_all(run.model, xte), yte, num_classes);
    report.folds.push_back({f, acc.accuracy, run.cv.best_C, acc.confusion});
    accs.push_back(acc.accuracy);
    log_info("fold " + std::to_string(f) + ": accuracy " + std::to_string(acc.accuracy) +
             " (C=" + std::to_string(run.cv.best_C) + ")");
  }
  report.mean_accuracy = mean_fold_accuracy(accs);
  return report;
}

}  // namespace weaknet
