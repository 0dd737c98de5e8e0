#include "weaknet/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "weaknet/hash.hpp"

namespace weaknet {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw std::invalid_argument(key + ": '" + v + "' is not a number");
  return d;
}

std::uint64_t to_uint(const std::string& v, const std::string& key) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument(key + ": '" + v + "' is not a non-negative integer");
  }
  return std::stoull(v);
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(key + ": '" + v + "' is not a boolean");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Get, class Set>
Field field(Get g, Set s) {
  return {s, g};
}

void add_train_fields(std::map<std::string, Field>& f, const std::string& section,
                      TrainConfig ExperimentConfig::*member) {
  auto key = [&](const char* k) { return section + "." + k; };
  f[key("lr")] = field([=](const ExperimentConfig& c) { return fmt((c.*member).lr); },
                       [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
                         (c.*member).lr = to_double(v, k);
                       });
  f[key("epochs")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).epochs); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).epochs = to_uint(v, k);
      });
  f[key("batch_size")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).batch_size); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).batch_size = to_uint(v, k);
      });
  f[key("max_batch_frames")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).max_batch_frames); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).max_batch_frames = to_uint(v, k);
      });
  f[key("seed")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).seed); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).seed = to_uint(v, k);
      });
  f[key("beta1")] = field([=](const ExperimentConfig& c) { return fmt((c.*member).beta1); },
                          [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
                            (c.*member).beta1 = to_double(v, k);
                          });
  f[key("beta2")] = field([=](const ExperimentConfig& c) { return fmt((c.*member).beta2); },
                          [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
                            (c.*member).beta2 = to_double(v, k);
                          });
  f[key("adam_eps")] = field(
      [=](const ExperimentConfig& c) { return fmt((c.*member).adam_eps); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).adam_eps = to_double(v, k);
      });
  f[key("loss")] = field(
      [=](const ExperimentConfig& c) { return to_string((c.*member).loss); },
      [=](ExperimentConfig& c, const std::string& v, const std::string&) {
        (c.*member).loss = parse_loss_kind(v);
      });
  f[key("select_best")] = field(
      [=](const ExperimentConfig& c) { return std::string((c.*member).select_best ? "true" : "false"); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).select_best = to_bool(v, k);
      });
  f[key("patience")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).patience); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).patience = to_uint(v, k);
      });
  f[key("plateau_patience")] = field(
      [=](const ExperimentConfig& c) { return std::to_string((c.*member).plateau_patience); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).plateau_patience = to_uint(v, k);
      });
  f[key("lr_decay")] = field(
      [=](const ExperimentConfig& c) { return fmt((c.*member).lr_decay); },
      [=](ExperimentConfig& c, const std::string& v, const std::string& k) {
        (c.*member).lr_decay = to_double(v, k);
      });
}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    f["dsp.sample_rate"] = field(
        [](const ExperimentConfig& c) { return std::to_string(c.dsp.sample_rate); },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.dsp.sample_rate = static_cast<int>(to_uint(v, k));
        });
    f["dsp.fft_size"] = field(
        [](const ExperimentConfig& c) { return std::to_string(c.dsp.fft_size); },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.dsp.fft_size = static_cast<int>(to_uint(v, k));
        });
    f["dsp.hop_size"] = field(
        [](const ExperimentConfig& c) { return std::to_string(c.dsp.hop_size); },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.dsp.hop_size = static_cast<int>(to_uint(v, k));
        });
    f["dsp.n_mels"] = field(
        [](const ExperimentConfig& c) { return std::to_string(c.dsp.n_mels); },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.dsp.n_mels = static_cast<int>(to_uint(v, k));
        });
    f["dsp.fmin"] = field([](const ExperimentConfig& c) { return fmt(c.dsp.fmin); },
                          [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                            c.dsp.fmin = to_double(v, k);
                          });
    f["dsp.fmax"] = field([](const ExperimentConfig& c) { return fmt(c.dsp.fmax); },
                          [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                            c.dsp.fmax = to_double(v, k);
                          });
    f["dsp.log_floor"] = field([](const ExperimentConfig& c) { return fmt(c.dsp.log_floor); },
                               [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                                 c.dsp.log_floor = to_double(v, k);
                               });
    add_train_fields(f, "train", &ExperimentConfig::train);
    f["train.pooling"] = field(
        [](const ExperimentConfig& c) { return to_string(c.train.pooling); },
        [](ExperimentConfig& c, const std::string& v, const std::string&) {
          c.train.pooling = parse_pool_mode(v);
        });
    add_train_fields(f, "adapt", &ExperimentConfig::adapt);
    f["adapt.method"] = field([](const ExperimentConfig& c) { return to_string(c.method); },
                              [](ExperimentConfig& c, const std::string& v, const std::string&) {
                                c.method = parse_adapt_method(v);
                              });
    f["representation.layer"] = field(
        [](const ExperimentConfig& c) { return to_string(c.layer); },
        [](ExperimentConfig& c, const std::string& v, const std::string&) {
          c.layer = parse_layer(v);
        });
    f["representation.pooling"] = field(
        [](const ExperimentConfig& c) { return to_string(c.representation_pooling); },
        [](ExperimentConfig& c, const std::string& v, const std::string&) {
          c.representation_pooling = parse_pool_mode(v);
        });
    f["svm.c_grid"] = field(
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.c_grid.size(); ++i) s += (i ? "," : "") + fmt(c.c_grid[i]);
          return s;
        },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.c_grid.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.c_grid.push_back(to_double(trim(item), k));
          if (c.c_grid.empty()) throw std::invalid_argument(k + ": empty grid");
        });
    f["svm.folds"] = field([](const ExperimentConfig& c) { return std::to_string(c.svm_folds); },
                           [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                             c.svm_folds = to_uint(v, k);
                           });
    f["svm.seed"] = field([](const ExperimentConfig& c) { return std::to_string(c.svm_seed); },
                          [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                            c.svm_seed = to_uint(v, k);
                          });
    f["svm.tolerance"] = field([](const ExperimentConfig& c) { return fmt(c.svm.tolerance); },
                               [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                                 c.svm.tolerance = to_double(v, k);
                               });
    f["svm.max_epochs"] = field(
        [](const ExperimentConfig& c) { return std::to_string(c.svm.max_epochs); },
        [](ExperimentConfig& c, const std::string& v, const std::string& k) {
          c.svm.max_epochs = to_uint(v, k);
        });
    f["probe.k"] = field([](const ExperimentConfig& c) { return std::to_string(c.probe_k); },
                         [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                           c.probe_k = to_uint(v, k);
                         });
    f["probe.top_n"] = field([](const ExperimentConfig& c) { return std::to_string(c.probe_top_n); },
                             [](ExperimentConfig& c, const std::string& v, const std::string& k) {
                               c.probe_top_n = to_uint(v, k);
                             });
    return f;
  }();
  return fields;
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [key, f] : schema()) out += key + "=" + f.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical()); }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  std::stringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = schema().find(key);
    if (it == schema().end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
    try {
      it->second.set(c, value, key);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  c.dsp.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace weaknet
