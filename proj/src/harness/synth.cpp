#include "weaknet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace weaknet {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Portable draws on top of mt19937_64 (the std distributions are not
// specified bit-for-bit across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + index(hi - lo + 1); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

std::uint64_t clip_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

// Raised-cosine fade of `ramp` samples at both ends.
void apply_envelope(std::vector<double>& x, std::size_t ramp) {
  ramp = std::min(ramp, x.size() / 2);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
    x[i] *= g;
    x[x.size() - 1 - i] *= g;
  }
}

std::vector<double> render_event(const EventTemplate& t, std::size_t n, double sr, Rng& rng) {
  std::vector<double> x(n, 0.0);
  if (t.kind == "tone") {
    const double f = rng.uniform(t.f_lo, t.f_hi), ph = rng.uniform(0.0, kTwoPi);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(kTwoPi * f * i / sr + ph);
  } else if (t.kind == "chirp") {
    const bool up = rng.uniform() < 0.5;
    const double f0 = up ? t.f_lo : t.f_hi, f1 = up ? t.f_hi : t.f_lo;
    const double dur = static_cast<double>(n) / sr;
    for (std::size_t i = 0; i < n; ++i) {
      const double tt = i / sr;
      x[i] = std::sin(kTwoPi * (f0 * tt + 0.5 * (f1 - f0) / dur * tt * tt));
    }
  } else if (t.kind == "noise") {
    // Band-limited noise as a dense sum of random-phase partials.
    const std::size_t partials = 48;
    for (std::size_t p = 0; p < partials; ++p) {
      const double f = rng.uniform(t.f_lo, t.f_hi), ph = rng.uniform(0.0, kTwoPi);
      const double a = 0.5 + rng.uniform();
      for (std::size_t i = 0; i < n; ++i) x[i] += a * std::sin(kTwoPi * f * i / sr + ph);
    }
  } else if (t.kind == "harmonic") {
    const double f0 = rng.uniform(t.f_lo, t.f_hi);
    for (int h = 1; h <= 6; ++h) {
      if (f0 * h >= sr / 2) break;
      const double ph = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) x[i] += std::sin(kTwoPi * f0 * h * i / sr + ph) / h;
    }
  } else if (t.kind == "pulses") {
    // Tone pips: 40 ms on, 60 ms off.
    const double f = rng.uniform(t.f_lo, t.f_hi);
    const auto period = static_cast<std::size_t>(0.1 * sr), on = static_cast<std::size_t>(0.04 * sr);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = i % period;
      if (pos < on) {
        const double g = std::sin(std::numbers::pi * static_cast<double>(pos) / on);
        x[i] = g * std::sin(kTwoPi * f * i / sr);
      }
    }
  } else {
    throw std::invalid_argument("unknown event kind '" + t.kind + "'");
  }
  apply_envelope(x, static_cast<std::size_t>(0.01 * sr));
  return x;
}

void mix_event(std::vector<double>& clip, const EventTemplate& t, double background_rms,
               double sr, Rng& rng) {
  const double dur = std::min(rng.uniform(t.dur_min, t.dur_max),
                              static_cast<double>(clip.size()) / sr);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(dur * sr));
  const std::size_t offset = rng.index(clip.size() - n + 1);
  std::vector<double> ev = render_event(t, n, sr, rng);
  const double snr = rng.uniform(t.snr_db_min, t.snr_db_max);
  const double gain = background_rms * std::pow(10.0, snr / 20.0) / std::max(rms(ev), 1e-12);
  for (std::size_t i = 0; i < n; ++i) clip[offset + i] += gain * ev[i];
}

void check_template_kind(const EventTemplate& t) {
  static const std::set<std::string> kinds{"tone", "chirp", "noise", "harmonic", "pulses"};
  if (!kinds.count(t.kind)) throw std::invalid_argument("unknown event kind '" + t.kind + "'");
}

}  // namespace

void SynthSpec::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("synth: sample_rate must be positive");
  if (clips == 0) throw std::invalid_argument("synth: no clips requested");
  if (!(clip_min_s > 0.0) || clip_max_s < clip_min_s) {
    throw std::invalid_argument("synth: need 0 < clip_min_s <= clip_max_s");
  }
  if (classes.empty()) throw std::invalid_argument("synth: no event classes");
  std::set<std::string> names;
  for (const EventTemplate& t : classes) {
    check_template_kind(t);
    if (!names.insert(t.name).second) throw std::invalid_argument("synth: duplicate class " + t.name);
    if (t.dur_min > clip_min_s) {
      throw std::invalid_argument("synth: event '" + t.name + "' (" + std::to_string(t.dur_min) +
                                  " s) is longer than the shortest clip");
    }
    if (!(t.dur_min > 0.0) || t.dur_max < t.dur_min) {
      throw std::invalid_argument("synth: bad duration range for '" + t.name + "'");
    }
    if (t.f_lo <= 0.0 || t.f_hi < t.f_lo || t.f_hi >= sample_rate / 2.0) {
      throw std::invalid_argument("synth: bad frequency range for '" + t.name + "'");
    }
  }
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const auto& x = classes[a];
      const auto& y = classes[b];
      if (x.kind == y.kind && x.f_lo == y.f_lo && x.f_hi == y.f_hi) {
        throw std::invalid_argument("synth: classes '" + x.name + "' and '" + y.name +
                                    "' have identical templates");
      }
    }
  }
  if (scenes.empty()) {
    if (classes_min < 1 || classes_max < classes_min || classes_max > classes.size()) {
      throw std::invalid_argument("synth: bad classes-per-clip range");
    }
    if (!multi_label && classes_max != 1) {
      throw std::invalid_argument("synth: single-label corpora hold one class per clip");
    }
    if (events_min < 1 || events_max < events_min) {
      throw std::invalid_argument("synth: bad events-per-class range");
    }
  } else {
    for (const SceneTemplate& s : scenes) {
      if (s.events.empty() || s.events_min < 1 || s.events_max < s.events_min) {
        throw std::invalid_argument("synth: bad event set for scene '" + s.name + "'");
      }
      for (std::size_t e : s.events) {
        if (e >= classes.size()) throw std::invalid_argument("synth: scene event out of range");
      }
      for (std::size_t e : s.distractors) {
        if (e >= classes.size()) throw std::invalid_argument("synth: distractor out of range");
      }
    }
  }
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("synth: split fractions must leave training clips");
  }
}

std::vector<std::string> SynthSpec::vocabulary() const {
  std::vector<std::string> v;
  if (scenes.empty()) {
    for (const auto& c : classes) v.push_back(c.name);
  } else {
    for (const auto& s : scenes) v.push_back(s.name);
  }
  return v;
}

SynthClip synthesize_clip(const SynthSpec& spec, std::size_t index) {
  Rng rng(clip_seed(spec.seed, index));
  const double sr = spec.sample_rate;
  const double seconds = rng.uniform(spec.clip_min_s, spec.clip_max_s);
  const auto n = static_cast<std::size_t>(seconds * sr);

  // Coloured background noise.
  const double colour = rng.uniform(spec.background_colour_min, spec.background_colour_max);
  const double level = rng.uniform(spec.background_level_min, spec.background_level_max);
  std::vector<double> x(n);
  double state = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    state = colour * state + (1.0 - colour) * rng.normal();
    x[i] = state;
  }
  const double scale = level / std::max(rms(x), 1e-12);
  for (double& v : x) v *= scale;

  SynthClip clip;
  if (spec.scenes.empty()) {
    // Classes are dealt round-robin in single-label corpora to balance them.
    std::vector<std::size_t> chosen;
    if (!spec.multi_label) {
      chosen.push_back(index % spec.classes.size());
    } else {
      std::vector<std::size_t> pool(spec.classes.size());
      for (std::size_t c = 0; c < pool.size(); ++c) pool[c] = c;
      const std::size_t count = rng.between(spec.classes_min, spec.classes_max);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pick = rng.index(pool.size());
        chosen.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      std::sort(chosen.begin(), chosen.end());
    }
    for (std::size_t c : chosen) {
      const std::size_t events = rng.between(spec.events_min, spec.events_max);
      for (std::size_t e = 0; e < events; ++e) mix_event(x, spec.classes[c], level, sr, rng);
      clip.record.labels.push_back(spec.classes[c].name);
    }
  } else {
    const SceneTemplate& scene = spec.scenes[index % spec.scenes.size()];
    const std::size_t events = rng.between(scene.events_min, scene.events_max);
    for (std::size_t e = 0; e < events; ++e) {
      mix_event(x, spec.classes[scene.events[rng.index(scene.events.size())]], level, sr, rng);
    }
    for (std::size_t d : scene.distractors) {
      if (rng.uniform() < scene.distractor_prob) mix_event(x, spec.classes[d], level, sr, rng);
    }
    clip.record.labels.push_back(scene.name);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double norm = peak > 0.99 ? 0.99 / peak : 1.0;
  clip.audio.sample_rate = spec.sample_rate;
  clip.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.audio.samples[i] = static_cast<float>(x[i] * norm);

  char name[64];
  std::snprintf(name, sizeof name, "clips/%s_%04zu.wav", spec.name.c_str(), index);
  clip.record.path = name;
  if (spec.folds > 0) {
    // Consecutive rounds of the class cycle share a fold, so folds stay
    // balanced when classes are dealt round-robin.
    const std::size_t cycle = spec.scenes.empty() ? spec.classes.size() : spec.scenes.size();
    clip.record.fold = static_cast<int>((index / cycle) % spec.folds);
  }
  return clip;
}

std::vector<ManifestRecord> synth_data(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "clips");
  // Split by a seeded permutation: the first val_fraction are validation,
  // the next test_fraction test, the rest training.
  std::vector<std::size_t> perm(spec.clips);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(clip_seed(spec.seed, spec.clips + 0x51117));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * spec.clips));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * spec.clips));
  std::vector<std::string> split(spec.clips, "train");
  for (std::size_t r = 0; r < n_val + n_test && r < perm.size(); ++r) {
    split[perm[r]] = r < n_val ? "val" : "test";
  }

  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < spec.clips; ++i) {
    SynthClip c = synthesize_clip(spec, i);
    c.record.split = split[i];
    write_wav16(out_dir / c.record.path, c.audio);
    records.push_back(std::move(c.record));
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  write_vocabulary(out_dir / "vocabulary.json", spec.vocabulary());
  std::ofstream(out_dir / "spec.json") << to_json(spec).dump(2) << '\n';
  return records;
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["sample_rate"] = s.sample_rate;
  j["clips"] = s.clips;
  j["clip_min_s"] = s.clip_min_s;
  j["clip_max_s"] = s.clip_max_s;
  j["multi_label"] = s.multi_label;
  j["classes_min"] = s.classes_min;
  j["classes_max"] = s.classes_max;
  j["events_min"] = s.events_min;
  j["events_max"] = s.events_max;
  j["background_colour_min"] = s.background_colour_min;
  j["background_colour_max"] = s.background_colour_max;
  j["background_level_min"] = s.background_level_min;
  j["background_level_max"] = s.background_level_max;
  j["val_fraction"] = s.val_fraction;
  j["test_fraction"] = s.test_fraction;
  j["folds"] = s.folds;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& t : s.classes) {
    classes.push_back({{"name", t.name},         {"kind", t.kind},
                       {"f_lo", t.f_lo},         {"f_hi", t.f_hi},
                       {"dur_min", t.dur_min},   {"dur_max", t.dur_max},
                       {"snr_db_min", t.snr_db_min}, {"snr_db_max", t.snr_db_max}});
  }
  j["classes"] = classes;
  auto scenes = nlohmann::ordered_json::array();
  for (const auto& sc : s.scenes) {
    scenes.push_back({{"name", sc.name},
                      {"events", sc.events},
                      {"events_min", sc.events_min},
                      {"events_max", sc.events_max},
                      {"distractors", sc.distractors},
                      {"distractor_prob", sc.distractor_prob}});
  }
  j["scenes"] = scenes;
  return nlohmann::json::parse(j.dump());
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  static const std::set<std::string> known{
      "name", "seed", "sample_rate", "clips", "clip_min_s", "clip_max_s", "multi_label",
      "classes_min", "classes_max", "events_min", "events_max", "background_colour_min",
      "background_colour_max", "background_level_min", "background_level_max", "val_fraction",
      "test_fraction", "folds", "classes", "scenes"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("synth spec: unknown key '" + key + "'");
  }
  s.name = j.at("name").get<std::string>();
  s.seed = j.value("seed", s.seed);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.clips = j.value("clips", s.clips);
  s.clip_min_s = j.value("clip_min_s", s.clip_min_s);
  s.clip_max_s = j.value("clip_max_s", s.clip_max_s);
  s.multi_label = j.value("multi_label", s.multi_label);
  s.classes_min = j.value("classes_min", s.classes_min);
  s.classes_max = j.value("classes_max", s.classes_max);
  s.events_min = j.value("events_min", s.events_min);
  s.events_max = j.value("events_max", s.events_max);
  s.background_colour_min = j.value("background_colour_min", s.background_colour_min);
  s.background_colour_max = j.value("background_colour_max", s.background_colour_max);
  s.background_level_min = j.value("background_level_min", s.background_level_min);
  s.background_level_max = j.value("background_level_max", s.background_level_max);
  s.val_fraction = j.value("val_fraction", s.val_fraction);
  s.test_fraction = j.value("test_fraction", s.test_fraction);
  s.folds = j.value("folds", s.folds);
  for (const auto& t : j.at("classes")) {
    EventTemplate e;
    e.name = t.at("name").get<std::string>();
    e.kind = t.at("kind").get<std::string>();
    e.f_lo = t.at("f_lo").get<double>();
    e.f_hi = t.at("f_hi").get<double>();
    e.dur_min = t.value("dur_min", e.dur_min);
    e.dur_max = t.value("dur_max", e.dur_max);
    e.snr_db_min = t.value("snr_db_min", e.snr_db_min);
    e.snr_db_max = t.value("snr_db_max", e.snr_db_max);
    s.classes.push_back(e);
  }
  if (j.contains("scenes")) {
    for (const auto& t : j.at("scenes")) {
      SceneTemplate sc;
      sc.name = t.at("name").get<std::string>();
      sc.events = t.at("events").get<std::vector<std::size_t>>();
      sc.events_min = t.value("events_min", sc.events_min);
      sc.events_max = t.value("events_max", sc.events_max);
      sc.distractors = t.value("distractors", sc.distractors);
      sc.distractor_prob = t.value("distractor_prob", sc.distractor_prob);
      s.scenes.push_back(sc);
    }
  }
  s.validate();
  return s;
}

SynthSpec source_benchmark_spec() {
  SynthSpec s;
  s.name = "source";
  s.seed = 1234;
  s.clips = 200;
  s.clip_min_s = 2.0;
  s.clip_max_s = 10.0;
  s.multi_label = true;
  s.classes_min = 1;
  s.classes_max = 2;
  s.events_min = 1;
  s.events_max = 2;
  s.val_fraction = 0.2;
  s.classes = {
      {"whistle", "tone", 2000.0, 3000.0, 0.3, 0.8, 0.0, 10.0},
      {"siren", "chirp", 600.0, 1400.0, 0.5, 1.2, 0.0, 10.0},
      {"hiss", "noise", 5000.0, 9000.0, 0.2, 0.6, 0.0, 10.0},
      {"hum", "harmonic", 100.0, 180.0, 0.5, 1.5, 0.0, 10.0},
      {"beeps", "pulses", 1000.0, 1400.0, 0.4, 1.0, 0.0, 10.0},
  };
  return s;
}

SynthSpec target_benchmark_spec() {
  SynthSpec s;
  s.name = "target";
  s.seed = 4321;
  s.clips = 80;
  s.clip_min_s = 3.0;
  s.clip_max_s = 6.0;
  s.multi_label = false;
  s.val_fraction = 0.0;
  s.folds = 5;
  // Related to, not copies of, the source templates.
  s.classes = {
      {"bird", "tone", 2200.0, 3200.0, 0.2, 0.6, -3.0, 6.0},
      {"alarm", "chirp", 700.0, 1500.0, 0.4, 1.0, -3.0, 6.0},
      {"steam", "noise", 5500.0, 9500.0, 0.2, 0.5, -3.0, 6.0},
      {"engine", "harmonic", 110.0, 200.0, 0.5, 1.2, -3.0, 6.0},
      {"signal", "pulses", 1000.0, 1400.0, 0.3, 0.8, -3.0, 6.0},
  };
  s.scenes = {
      {"park", {0}, 1, 3, {1, 2, 3, 4}, 0.25},
      {"street", {1}, 1, 3, {0, 2, 3, 4}, 0.25},
      {"workshop", {2}, 1, 3, {0, 1, 3, 4}, 0.25},
      {"garage", {3}, 1, 3, {0, 1, 2, 4}, 0.25},
  };
  return s;
}

}  // namespace weaknet
