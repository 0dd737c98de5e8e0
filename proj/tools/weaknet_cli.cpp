// weaknet: command-line driver for the weak-label network pipeline.
//
//   synth-data -> featurize -> train-source | train-slat -> adapt -> extract
//   -> svm -> evaluate, plus probe and folds.
//
// Every command reads only the files named on its command line and embeds
// the config hash, seed and upstream checkpoint hash in what it writes.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "weaknet/checkpoint.hpp"
#include "weaknet/config.hpp"
#include "weaknet/hash.hpp"
#include "weaknet/log.hpp"
#include "weaknet/pipeline.hpp"
#include "weaknet/probe.hpp"
#include "weaknet/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace weaknet;

namespace {

struct Common {
  std::string config_path;
  ExperimentConfig config;
  std::string config_hash;

  void load() {
    config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    config_hash = config.hash();
  }
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw std::runtime_error(what + " not found: " + path);
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::stod(buf);
}

DatasetManifest open_manifest(const std::string& path, const std::string& vocabulary) {
  require_file(path, "manifest");
  return read_manifest(path, vocabulary);
}

// Refuses manifests whose vocabulary does not fit the model's output.
void check_vocabulary(const DatasetManifest& m, std::size_t classes, const std::string& what) {
  if (m.vocabulary.size() != classes) {
    throw std::runtime_error(what + " has " + std::to_string(classes) +
                             " classes but the manifest vocabulary has " +
                             std::to_string(m.vocabulary.size()));
  }
}

std::function<bool(const ManifestRecord&)> selection(const std::string& split, int fold,
                                                     int exclude_fold) {
  if (fold >= 0) return [fold](const ManifestRecord& r) { return r.fold == fold; };
  if (exclude_fold >= 0) {
    return [exclude_fold](const ManifestRecord& r) { return r.fold != exclude_fold; };
  }
  if (split == "all") return {};
  return split_is(split);
}

ordered_json confusion_json(const ConfusionMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (std::size_t t = 0; t < m.classes; ++t) {
    ordered_json row = ordered_json::array();
    for (std::size_t p = 0; p < m.classes; ++p) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  return rows;
}

ordered_json class_metrics_json(const ClassMetrics& m, const std::vector<std::string>& names) {
  ordered_json per = ordered_json::object();
  for (std::size_t c = 0; c < m.auc.size(); ++c) {
    ordered_json e;
    e["auc"] = m.auc[c] ? ordered_json(round9(*m.auc[c])) : ordered_json(nullptr);
    e["ap"] = m.ap[c] ? ordered_json(round9(*m.ap[c])) : ordered_json(nullptr);
    per[c < names.size() ? names[c] : std::to_string(c)] = e;
  }
  return per;
}

// CSV with a header row; returns the header and numeric rows.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_numeric_csv(
    const std::string& path) {
  require_file(path, "CSV file");
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  if (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) throw std::runtime_error("ragged row in " + path);
    rows.push_back(std::move(row));
  }
  return {header, rows};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-label sound event network: training, transfer and evaluation"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Experiment config (key = value sections)");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic weakly labelled corpus");
  std::string synth_spec = "source", synth_out, dump_spec;
  long long synth_seed = -1, synth_clips = -1;
  synth->add_option("--spec", synth_spec, "source | target | path to a spec JSON");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the spec seed");
  synth->add_option("--clips", synth_clips, "Override the clip count");

  auto* dump = app.add_subcommand("dump-spec", "Write a built-in synthetic spec as JSON");
  dump->add_option("--spec", synth_spec, "source | target")->required();
  dump->add_option("--out", dump_spec, "Output JSON")->required();

  // featurize
  auto* feat = app.add_subcommand("featurize", "Compute logmel features for a manifest");
  std::string manifest, out, vocabulary;
  feat->add_option("--manifest", manifest)->required();
  feat->add_option("--out", out, "Output directory")->required();

  // train-source / train-slat
  auto* train_src = app.add_subcommand("train-source", "Weak-label training of the source network");
  auto* train_slat_cmd = app.add_subcommand("train-slat", "Strong-label-assumption baseline");
  std::string log_path;
  for (auto* cmd : {train_src, train_slat_cmd}) {
    cmd->add_option("--manifest", manifest, "Featurized manifest (train and val splits)")
        ->required();
    cmd->add_option("--out", out, "Checkpoint path")->required();
    cmd->add_option("--log", log_path, "Per-epoch CSV log");
    cmd->add_option("--vocabulary", vocabulary);
  }

  // adapt
  auto* adapt_cmd = app.add_subcommand("adapt", "Build and train an adapted network");
  std::string checkpoint, method_name;
  int fold = -1, exclude_fold = -1;
  std::string split = "train";
  adapt_cmd->add_option("--checkpoint", checkpoint, "Source checkpoint")->required();
  adapt_cmd->add_option("--manifest", manifest, "Featurized target manifest")->required();
  adapt_cmd->add_option("--out", out, "Adapted checkpoint path")->required();
  adapt_cmd->add_option("--method", method_name, "I | II | III (default from config)");
  adapt_cmd->add_option("--split", split, "Training split (train | val | test | all)");
  adapt_cmd->add_option("--exclude-fold", exclude_fold, "Train on every fold but this one");
  adapt_cmd->add_option("--log", log_path, "Per-epoch CSV log");
  adapt_cmd->add_option("--vocabulary", vocabulary);

  // extract
  auto* extract = app.add_subcommand("extract", "Extract pooled recording representations");
  std::string layer_name, pool_name, csv_path;
  extract->add_option("--checkpoint", checkpoint)->required();
  extract->add_option("--manifest", manifest)->required();
  extract->add_option("--out", out, "Representation file (binary, plus .json sidecar)")
      ->required();
  extract->add_option("--layer", layer_name, "F1 | F2");
  extract->add_option("--pool", pool_name, "max | avg");
  extract->add_option("--csv", csv_path, "Also export an embeddings CSV");
  extract->add_option("--vocabulary", vocabulary);

  // svm
  auto* svm_cmd = app.add_subcommand("svm", "Train a linear SVM on representations");
  std::string reps;
  svm_cmd->add_option("--reps", reps, "Representation file")->required();
  svm_cmd->add_option("--out", out, "SVM model path")->required();
  svm_cmd->add_option("--split", split, "Training split (train | val | test | all)");
  svm_cmd->add_option("--exclude-fold", exclude_fold, "Train on every fold but this one");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Write a metrics report");
  std::string svm_path, scores_csv, labels_csv, predictions_csv;
  std::string eval_split = "test";
  eval->add_option("--out", out, "Metrics JSON")->required();
  eval->add_option("--svm", svm_path, "SVM model (with --reps)");
  eval->add_option("--reps", reps, "Representation file (with --svm)");
  eval->add_option("--checkpoint", checkpoint, "Network checkpoint (with --manifest)");
  eval->add_option("--manifest", manifest);
  eval->add_option("--vocabulary", vocabulary);
  eval->add_option("--scores", scores_csv, "CSV of scores: header of class names, N rows");
  eval->add_option("--labels", labels_csv, "CSV of 0/1 labels aligned with --scores");
  eval->add_option("--predictions", predictions_csv, "CSV with columns truth,prediction");
  eval->add_option("--split", eval_split, "Records to score (train | val | test | all)");
  eval->add_option("--fold", fold, "Score only this fold");

  // probe
  auto* probe = app.add_subcommand("probe", "Most frequently activated source events per scene");
  std::string source_vocabulary;
  std::size_t probe_k = 0, probe_top = 0;
  probe->add_option("--checkpoint", checkpoint, "Model with an F2 layer")->required();
  probe->add_option("--manifest", manifest, "Featurized scene manifest")->required();
  probe->add_option("--out", out, "Profile JSON")->required();
  probe->add_option("--event-vocabulary", source_vocabulary, "JSON list naming the F2 neurons");
  probe->add_option("--k", probe_k, "Neurons counted per segment");
  probe->add_option("--top-n", probe_top, "Events reported per scene");
  probe->add_option("--vocabulary", vocabulary);

  // folds
  auto* folds_cmd = app.add_subcommand("folds", "Cross-fold transfer evaluation");
  folds_cmd->add_option("--checkpoint", checkpoint, "Source checkpoint")->required();
  folds_cmd->add_option("--manifest", manifest, "Featurized manifest with folds")->required();
  folds_cmd->add_option("--out", out, "Report JSON")->required();
  folds_cmd->add_option("--method", method_name, "none | I | II | III")->default_val("none");
  folds_cmd->add_option("--layer", layer_name, "F1 | F2");
  folds_cmd->add_option("--pool", pool_name, "max | avg");
  folds_cmd->add_option("--vocabulary", vocabulary);

  CLI11_PARSE(app, argc, argv);

  try {
    common.load();
    const ExperimentConfig& cfg = common.config;

    if (*synth) {
      SynthSpec spec;
      if (synth_spec == "source") {
        spec = source_benchmark_spec();
      } else if (synth_spec == "target") {
        spec = target_benchmark_spec();
      } else {
        require_file(synth_spec, "synth spec");
        std::ifstream in(synth_spec);
        spec = synth_spec_from_json(nlohmann::json::parse(in));
      }
      if (synth_seed >= 0) spec.seed = static_cast<std::uint64_t>(synth_seed);
      if (synth_clips > 0) spec.clips = static_cast<std::size_t>(synth_clips);
      const auto records = synth_data(spec, synth_out);
      log_info("wrote " + std::to_string(records.size()) + " clips to " + synth_out);
      return 0;
    }

    if (*dump) {
      const SynthSpec spec =
          synth_spec == "target" ? target_benchmark_spec() : source_benchmark_spec();
      write_json(dump_spec, ordered_json::parse(to_json(spec).dump()));
      return 0;
    }

    if (*feat) {
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      featurize_manifest(m, out, cfg.dsp, worker_count());
      log_info("featurized " + std::to_string(m.records.size()) + " clips into " + out);
      return 0;
    }

    if (*train_src || *train_slat_cmd) {
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      const auto train = load_examples(m, cfg.dsp, split_is("train"));
      const auto val = load_examples(m, cfg.dsp, split_is("val"));
      TrainConfig tc = cfg.train;
      tc.log_path = log_path;
      const bool slat = train_slat_cmd->parsed();
      TrainResult r = slat ? train_slat(train, val, m.vocabulary.size(), tc)
                           : train_weak(train, val, m.vocabulary.size(), tc);
      Provenance prov{{"config_hash", common.config_hash},
                      {"seed", std::to_string(tc.seed)},
                      {"manifest_hash", file_digest(manifest)},
                      {"training", slat ? "slat" : "weak"},
                      {"best_epoch", std::to_string(r.best_epoch)}};
      if (out.empty() == false && fs::path(out).has_parent_path()) {
        fs::create_directories(fs::path(out).parent_path());
      }
      save_checkpoint(out, r.params, prov);
      log_info("saved " + out);
      return 0;
    }

    if (*adapt_cmd) {
      require_file(checkpoint, "source checkpoint");
      const LoadedCheckpoint src = load_checkpoint(checkpoint);
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      const auto train = load_examples(m, cfg.dsp, selection(split, -1, exclude_fold));
      const AdaptMethod method = method_name.empty() ? cfg.method : parse_adapt_method(method_name);
      TrainConfig tc = cfg.adapt;
      tc.log_path = log_path;
      const ModelParams model =
          adapt(src.params, method, m.vocabulary.size(), tc.loss, tc.seed);
      TrainResult r = adapt_train(model, train, tc);
      Provenance prov{{"config_hash", common.config_hash},
                      {"seed", std::to_string(tc.seed)},
                      {"checkpoint_hash", src.digest},
                      {"manifest_hash", file_digest(manifest)},
                      {"method", to_string(method)},
                      {"exclude_fold", std::to_string(exclude_fold)}};
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      save_checkpoint(out, r.params, prov);
      log_info("saved " + out);
      return 0;
    }

    if (*extract) {
      require_file(checkpoint, "checkpoint");
      const LoadedCheckpoint ck = load_checkpoint(checkpoint);
      const Layer layer = layer_name.empty() ? cfg.layer : parse_layer(layer_name);
      const PoolMode pool = pool_name.empty() ? cfg.representation_pooling : parse_pool_mode(pool_name);
      check_layer(ck.params, layer);
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      const auto examples = load_examples(m, cfg.dsp);
      RepresentationSet set = extract_set(ck.params, examples, layer, pool, worker_count());
      for (const ManifestRecord& r : m.records) {
        set.labels.push_back(r.labels);
        set.splits.push_back(r.split);
        set.folds.push_back(r.fold);
      }
      set.vocabulary = m.vocabulary;
      set.provenance = {{"config_hash", common.config_hash},
                        {"checkpoint_hash", ck.digest},
                        {"seed", ck.provenance.count("seed") ? ck.provenance.at("seed") : ""}};
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      write_representations(out, set);
      if (!csv_path.empty()) {
        std::vector<std::vector<float>> rows;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < set.matrix.rows; ++i) {
          rows.emplace_back(set.matrix.row(i), set.matrix.row(i) + set.matrix.cols);
          std::string l;
          for (const auto& s : set.labels[i]) l += (l.empty() ? "" : "|") + s;
          labels.push_back(l);
        }
        export_embeddings(csv_path, rows, labels, set.matrix.cols);
      }
      log_info("wrote " + std::to_string(set.matrix.rows) + " x " +
               std::to_string(set.matrix.cols) + " representations to " + out);
      return 0;
    }

    if (*svm_cmd) {
      const RepresentationSet set = read_representations(reps);
      FeatureMatrix x;
      x.cols = set.matrix.cols;
      std::vector<int> y;
      DatasetManifest vocab_only;
      vocab_only.vocabulary = set.vocabulary;
      for (std::size_t i = 0; i < set.matrix.rows; ++i) {
        ManifestRecord r;
        r.split = set.splits[i];
        r.fold = set.folds[i];
        const auto keep = selection(split, -1, exclude_fold);
        if (keep && !keep(r)) continue;
        if (set.labels[i].size() != 1) {
          throw std::runtime_error("svm needs single-label records; " + set.ids[i] + " has " +
                                   std::to_string(set.labels[i].size()));
        }
        x.append(std::vector<float>(set.matrix.row(i), set.matrix.row(i) + x.cols));
        y.push_back(static_cast<int>(vocab_only.class_index(set.labels[i][0])));
      }
      SvmSettings settings{cfg.c_grid, cfg.svm_folds, cfg.svm_seed, cfg.svm};
      const SvmRun run = fit_svm(x, y, set.vocabulary.size(), settings);
      std::map<std::string, std::string> prov = set.provenance;
      prov["config_hash"] = common.config_hash;
      prov["representation_hash"] = file_digest(reps);
      prov["svm_seed"] = std::to_string(cfg.svm_seed);
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      save_svm(out, run.model, prov);
      log_info("C=" + std::to_string(run.cv.best_C) + " saved " + out);
      return 0;
    }

    if (*eval) {
      ordered_json report;
      report["config_hash"] = common.config_hash;
      if (!svm_path.empty() || !reps.empty()) {
        if (svm_path.empty() || reps.empty()) throw std::runtime_error("--svm and --reps go together");
        require_file(svm_path, "SVM model");
        const SvmModel model = load_svm(svm_path);
        const RepresentationSet set = read_representations(reps);
        DatasetManifest vocab_only;
        vocab_only.vocabulary = set.vocabulary;
        std::vector<int> truth, pred;
        std::vector<double> scores;
        std::vector<int> onehot;
        for (std::size_t i = 0; i < set.matrix.rows; ++i) {
          ManifestRecord r;
          r.split = set.splits[i];
          r.fold = set.folds[i];
          const auto keep = selection(eval_split, fold, -1);
          if (keep && !keep(r)) continue;
          const Prediction p = predict(model, set.matrix.row(i), set.matrix.cols);
          const int t = static_cast<int>(vocab_only.class_index(set.labels[i].at(0)));
          truth.push_back(t);
          pred.push_back(p.label);
          scores.insert(scores.end(), p.scores.begin(), p.scores.end());
          for (std::size_t c = 0; c < model.classes; ++c) onehot.push_back(static_cast<int>(c) == t);
        }
        if (truth.empty()) throw std::runtime_error("no records selected for evaluation");
        const AccuracyReport acc = accuracy_and_confusion(pred, truth, model.classes);
        const ClassMetrics cm = class_metrics(scores, onehot, model.classes);
        report["seed"] = set.provenance.count("seed") ? set.provenance.at("seed") : "";
        report["checkpoint_hash"] =
            set.provenance.count("checkpoint_hash") ? set.provenance.at("checkpoint_hash") : "";
        report["svm_hash"] = file_digest(svm_path);
        report["per_class"] = class_metrics_json(cm, set.vocabulary);
        report["mauc"] = round9(cm.mauc);
        report["map"] = round9(cm.map);
        report["accuracy"] = round9(acc.accuracy);
        report["confusion"] = confusion_json(acc.confusion);
        report["classes"] = set.vocabulary;
        report["count"] = truth.size();
      } else if (!checkpoint.empty()) {
        require_file(checkpoint, "checkpoint");
        const LoadedCheckpoint ck = load_checkpoint(checkpoint);
        const DatasetManifest m = open_manifest(manifest, vocabulary);
        check_vocabulary(m, ck.params.num_classes, "checkpoint");
        const auto examples = load_examples(m, cfg.dsp, selection(eval_split, fold, -1));
        if (examples.empty()) throw std::runtime_error("no records selected for evaluation");
        const ClassMetrics cm = evaluate_examples(ck.params, examples);
        report["seed"] = ck.provenance.count("seed") ? ck.provenance.at("seed") : "";
        report["checkpoint_hash"] = ck.digest;
        report["per_class"] = class_metrics_json(cm, m.vocabulary);
        report["mauc"] = round9(cm.mauc);
        report["map"] = round9(cm.map);
        report["count"] = examples.size();
      } else if (!scores_csv.empty()) {
        auto [names, s] = read_numeric_csv(scores_csv);
        auto [lnames, l] = read_numeric_csv(labels_csv);
        if (names != lnames || s.size() != l.size()) {
          throw std::runtime_error("--scores and --labels disagree in shape");
        }
        std::vector<double> flat;
        std::vector<int> lab;
        for (std::size_t i = 0; i < s.size(); ++i) {
          flat.insert(flat.end(), s[i].begin(), s[i].end());
          for (double v : l[i]) lab.push_back(v > 0.5);
        }
        const ClassMetrics cm = class_metrics(flat, lab, names.size());
        report["per_class"] = class_metrics_json(cm, names);
        report["mauc"] = round9(cm.mauc);
        report["map"] = round9(cm.map);
        report["count"] = s.size();
      } else if (!predictions_csv.empty()) {
        auto [names, rows] = read_numeric_csv(predictions_csv);
        if (names.size() != 2) throw std::runtime_error("--predictions needs truth,prediction");
        std::vector<int> truth, pred;
        int classes = 0;
        for (const auto& r : rows) {
          truth.push_back(static_cast<int>(r[0]));
          pred.push_back(static_cast<int>(r[1]));
          classes = std::max({classes, truth.back() + 1, pred.back() + 1});
        }
        const AccuracyReport acc =
            accuracy_and_confusion(pred, truth, static_cast<std::size_t>(classes));
        report["accuracy"] = round9(acc.accuracy);
        report["confusion"] = confusion_json(acc.confusion);
        report["count"] = rows.size();
      } else {
        throw std::runtime_error("evaluate needs --svm/--reps, --checkpoint/--manifest, "
                                 "--scores/--labels or --predictions");
      }
      write_json(out, report);
      return 0;
    }

    if (*probe) {
      require_file(checkpoint, "checkpoint");
      const LoadedCheckpoint ck = load_checkpoint(checkpoint);
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      std::vector<std::string> events;
      if (!source_vocabulary.empty()) {
        require_file(source_vocabulary, "event vocabulary");
        events = read_vocabulary(source_vocabulary);
      }
      const auto examples = load_examples(m, cfg.dsp);
      ordered_json report;
      report["config_hash"] = common.config_hash;
      report["checkpoint_hash"] = ck.digest;
      report["k"] = probe_k ? probe_k : cfg.probe_k;
      ordered_json scenes = ordered_json::object();
      for (const std::string& scene : m.vocabulary) {
        std::vector<const LogmelSpectrogram*> clips;
        for (std::size_t i = 0; i < examples.size(); ++i) {
          if (!m.records[i].labels.empty() && m.records[i].labels[0] == scene) {
            clips.push_back(&examples[i].features);
          }
        }
        if (clips.empty()) continue;
        const SceneEventProfile p = scene_event_probe(ck.params, clips,
                                                      probe_k ? probe_k : cfg.probe_k,
                                                      probe_top ? probe_top : cfg.probe_top_n);
        ordered_json list = ordered_json::array();
        for (const EventCount& e : p.events) {
          list.push_back({{"event", e.event < events.size() ? events[e.event] : std::to_string(e.event)},
                          {"index", e.event},
                          {"count", e.count}});
        }
        scenes[scene] = {{"segments", p.segments}, {"events", list}};
      }
      report["scenes"] = scenes;
      write_json(out, report);
      return 0;
    }

    if (*folds_cmd) {
      require_file(checkpoint, "source checkpoint");
      const LoadedCheckpoint src = load_checkpoint(checkpoint);
      const DatasetManifest m = open_manifest(manifest, vocabulary);
      const auto examples = load_examples(m, cfg.dsp);
      std::vector<int> fold_ids;
      for (const auto& r : m.records) fold_ids.push_back(r.fold);
      const Layer layer = layer_name.empty() ? cfg.layer : parse_layer(layer_name);
      const PoolMode pool = pool_name.empty() ? cfg.representation_pooling : parse_pool_mode(pool_name);
      const bool do_adapt = method_name != "none";
      const AdaptMethod method = do_adapt ? parse_adapt_method(method_name) : cfg.method;
      const std::size_t classes = m.vocabulary.size();
      auto model_for = [&](int, const std::vector<LabeledExample>& train) {
        if (!do_adapt) return src.params;
        const ModelParams model = adapt(src.params, method, classes, cfg.adapt.loss, cfg.adapt.seed);
        return adapt_train(model, train, cfg.adapt).params;
      };
      SvmSettings settings{cfg.c_grid, cfg.svm_folds, cfg.svm_seed, cfg.svm};
      const FoldReport rep =
          fold_runner(examples, fold_ids, classes, model_for, layer, pool, settings, worker_count());
      ordered_json report;
      report["config_hash"] = common.config_hash;
      report["checkpoint_hash"] = src.digest;
      report["method"] = do_adapt ? to_string(method) : "none";
      report["layer"] = to_string(layer);
      report["pooling"] = to_string(pool);
      ordered_json per = ordered_json::array();
      for (const FoldResult& f : rep.folds) {
        per.push_back({{"fold", f.fold},
                       {"accuracy", round9(f.accuracy)},
                       {"C", f.C},
                       {"confusion", confusion_json(f.confusion)}});
      }
      report["folds"] = per;
      report["mean_accuracy"] = round9(rep.mean_accuracy);
      write_json(out, report);
      std::cout << "mean accuracy " << rep.mean_accuracy << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
