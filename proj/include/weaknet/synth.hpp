#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "weaknet/audio.hpp"
#include "weaknet/manifest.hpp"

namespace weaknet {

/// One sound-event class. kind: tone | chirp | noise | harmonic | pulses.
/// For chirps f_lo/f_hi are the sweep endpoints; for harmonic sounds they
/// bound the fundamental.
struct EventTemplate {
  std::string name;
  std::string kind;
  double f_lo = 0.0;
  double f_hi = 0.0;
  double dur_min = 0.3;  // seconds
  double dur_max = 1.0;
  double snr_db_min = 0.0;
  double snr_db_max = 10.0;
};

/// A single-label scene: a mix of events drawn from `events`, plus optional
/// distractors drawn from `distractors`.
struct SceneTemplate {
  std::string name;
  std::vector<std::size_t> events;
  std::size_t events_min = 1;
  std::size_t events_max = 3;
  std::vector<std::size_t> distractors;
  double distractor_prob = 0.0;
};

struct SynthSpec {
  std::string name;
  std::uint64_t seed = 0;
  int sample_rate = 44100;
  std::size_t clips = 100;
  double clip_min_s = 2.0;
  double clip_max_s = 10.0;
  std::vector<EventTemplate> classes;
  // Event-labelled mode (scenes empty): each clip holds classes_min..max
  // distinct classes, each occurring events_min..max times.
  bool multi_label = true;
  std::size_t classes_min = 1;
  std::size_t classes_max = 2;
  std::size_t events_min = 1;
  std::size_t events_max = 2;
  // Scene-labelled mode: labels are scene names.
  std::vector<SceneTemplate> scenes;
  // Background: coloured noise, one-pole low-pass coefficient in
  // [colour_min, colour_max], RMS level in [level_min, level_max].
  double background_colour_min = 0.0;
  double background_colour_max = 0.9;
  double background_level_min = 0.01;
  double background_level_max = 0.05;
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  std::size_t folds = 0;  // 0: no fold assignment

  /// Throws std::invalid_argument for infeasible specs.
  void validate() const;
  std::vector<std::string> vocabulary() const;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

/// 5-class multi-label event corpus, 200 clips of 2-10 s.
SynthSpec source_benchmark_spec();
/// 4-scene single-label corpus of 80 clips in 5 folds. Each scene is built
/// around one source event class (its planted event) with randomly
/// occurring distractors from the others.
SynthSpec target_benchmark_spec();

struct SynthClip {
  AudioClip audio;
  ManifestRecord record;
};

/// Clip i is a pure function of (spec, i).
SynthClip synthesize_clip(const SynthSpec& spec, std::size_t index);

/// Writes clips/<name>_NNNN.wav, manifest.jsonl, vocabulary.json and
/// spec.json under `out_dir`. Returns the manifest records.
std::vector<ManifestRecord> synth_data(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace weaknet
