#include "weaknet/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "weaknet/container.hpp"
#include "weaknet/log.hpp"

namespace weaknet {

void FeatureMatrix::append(const std::vector<float>& r) {
  if (rows == 0 && cols == 0) cols = r.size();
  if (r.size() != cols) throw std::invalid_argument("FeatureMatrix: row width mismatch");
  values.insert(values.end(), r.begin(), r.end());
  ++rows;
}

BinarySvm train_binary_svm(const FeatureMatrix& x, const std::vector<int>& y, double C,
                           const SvmOptions& options) {
  if (x.rows != y.size()) throw std::invalid_argument("svm: label count mismatch");
  if (!(C > 0.0)) throw std::invalid_argument("svm: C must be positive");
  const std::size_t n = x.rows, d = x.cols;
  BinarySvm m;
  m.w.assign(d, 0.0);
  const bool has_pos = std::count(y.begin(), y.end(), 1) > 0;
  const bool has_neg = std::count(y.begin(), y.end(), -1) > 0;
  if (!has_pos || !has_neg) {
    m.degenerate = true;
    m.b = -1.0;
    m.converged = true;
    return m;
  }
  const double bs = options.bias_scale;
  std::vector<double> qd(n), alpha(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = bs * bs;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(x.row(i)[j]) * x.row(i)[j];
    qd[i] = s;
  }
  double wb = 0.0;  // weight of the constant feature
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    double pg_max = -INFINITY, pg_min = INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      const float* xi = x.row(i);
      const double yi = y[i];
      double dot = wb * bs;
      for (std::size_t j = 0; j < d; ++j) dot += m.w[j] * xi[j];
      const double g = yi * dot - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] == C) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0 || qd[i] == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / qd[i], 0.0, C);
      const double delta = (alpha[i] - old) * yi;
      for (std::size_t j = 0; j < d; ++j) m.w[j] += delta * xi[j];
      wb += delta * bs;
    }
    double norm = wb * wb;
    for (double v : m.w) norm += v * v;
    m.dual_objective.push_back(0.5 * norm - std::accumulate(alpha.begin(), alpha.end(), 0.0));
    m.epochs = epoch + 1;
    if (pg_max - pg_min < options.tolerance) {
      m.converged = true;
      break;
    }
  }
  m.b = wb * bs;
  if (!m.converged) {
    log_warning("svm: no convergence after " + std::to_string(m.epochs) + " epochs (C=" +
                std::to_string(C) + ")");
  }
  return m;
}

double primal_objective(const BinarySvm& model, const FeatureMatrix& x, const std::vector<int>& y,
                        double C, double bias_scale) {
  const double wb = model.b / bias_scale;
  double obj = 0.5 * wb * wb;
  for (double v : model.w) obj += 0.5 * v * v;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double f = model.b;
    for (std::size_t j = 0; j < x.cols; ++j) f += model.w[j] * x.row(i)[j];
    obj += C * std::max(0.0, 1.0 - y[i] * f);
  }
  return obj;
}

namespace {

FeatureMatrix standardize(const FeatureMatrix& x, const SvmModel& m) {
  FeatureMatrix out = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      out.values[i * x.cols + j] =
          static_cast<float>((x.row(i)[j] - m.mean[j]) * m.inv_std[j]);
    }
  }
  return out;
}

}  // namespace

SvmModel train_linear_svm(const FeatureMatrix& x, const std::vector<int>& labels,
                          std::size_t num_classes, double C, const SvmOptions& options) {
  if (x.rows < 2) throw std::invalid_argument("svm: need at least two examples");
  if (labels.size() != x.rows) throw std::invalid_argument("svm: label count mismatch");
  if (num_classes < 2) throw std::invalid_argument("svm: need at least two classes");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw std::invalid_argument("svm: label " + std::to_string(l) + " out of range");
    }
  }
  SvmModel m;
  m.C = C;
  m.dim = x.cols;
  m.classes = num_classes;
  m.mean.assign(x.cols, 0.0);
  m.inv_std.assign(x.cols, 1.0);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sum += x.row(i)[j];
    const double mean = sum / static_cast<double>(x.rows);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double dv = x.row(i)[j] - mean;
      sq += dv * dv;
    }
    const double sd = std::sqrt(sq / static_cast<double>(x.rows));
    m.mean[j] = mean;
    m.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  const FeatureMatrix z = standardize(x, m);
  m.weights.assign(num_classes * x.cols, 0.0);
  m.bias.assign(num_classes, 0.0);
  std::vector<int> y(x.rows);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < x.rows; ++i) y[i] = labels[i] == static_cast<int>(c) ? 1 : -1;
    const BinarySvm b = train_binary_svm(z, y, C, options);
    if (b.degenerate) {
      log_warning("svm: class " + std::to_string(c) +
                  " has a single polarity; using a constant negative decision");
    }
    std::copy(b.w.begin(), b.w.end(), m.weights.begin() + static_cast<std::ptrdiff_t>(c * x.cols));
    m.bias[c] = b.b;
  }
  return m;
}

Prediction predict(const SvmModel& model, const float* x, std::size_t dim) {
  if (dim != model.dim) {
    throw std::invalid_argument("svm predict: feature dimension " + std::to_string(dim) +
                                " != model dimension " + std::to_string(model.dim));
  }
  Prediction p;
  p.scores.resize(model.classes);
  for (std::size_t c = 0; c < model.classes; ++c) {
    double s = model.bias[c];
    const double* w = model.weights.data() + c * dim;
    for (std::size_t j = 0; j < dim; ++j) s += w[j] * ((x[j] - model.mean[j]) * model.inv_std[j]);
    p.scores[c] = s;
    if (s > p.scores[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(c);
  }
  return p;
}

std::vector<int> predict_all(const SvmModel& model, const FeatureMatrix& x) {
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict(model, x.row(i), x.cols).label;
  return out;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t k_folds,
                                  std::uint64_t seed) {
  if (k_folds < 2) throw std::invalid_argument("cross validation needs k_folds >= 2");
  std::vector<int> fold(labels.size(), -1);
  const int max_label = labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) fold[i] = static_cast<int>(next++ % k_folds);
  }
  return fold;
}

CrossValidation cross_validate_C(const FeatureMatrix& x, const std::vector<int>& labels,
                                 std::size_t num_classes, const std::vector<double>& grid,
                                 std::size_t k_folds, std::uint64_t seed,
                                 const SvmOptions& options) {
  if (grid.empty()) throw std::invalid_argument("cross_validate_C: empty grid");
  if (x.rows / std::max<std::size_t>(k_folds, 1) < num_classes) {
    throw std::invalid_argument("cross_validate_C: " + std::to_string(x.rows) +
                                " examples give folds smaller than the " +
                                std::to_string(num_classes) + " classes");
  }
  const std::vector<int> fold = stratified_folds(labels, k_folds, seed);
  CrossValidation cv;
  cv.grid = grid;
  for (double C : grid) {
    double acc_sum = 0.0;
    for (std::size_t f = 0; f < k_folds; ++f) {
      FeatureMatrix tr, te;
      tr.cols = te.cols = x.cols;
      std::vector<int> ytr, yte;
      for (std::size_t i = 0; i < x.rows; ++i) {
        FeatureMatrix& dst = fold[i] == static_cast<int>(f) ? te : tr;
        dst.values.insert(dst.values.end(), x.row(i), x.row(i) + x.cols);
        ++dst.rows;
        (fold[i] == static_cast<int>(f) ? yte : ytr).push_back(labels[i]);
      }
      const SvmModel m = train_linear_svm(tr, ytr, num_classes, C, options);
      const std::vector<int> pred = predict_all(m, te);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == yte[i];
      acc_sum += te.rows ? static_cast<double>(hit) / static_cast<double>(te.rows) : 0.0;
    }
    cv.mean_accuracy.push_back(acc_sum / static_cast<double>(k_folds));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool better = cv.mean_accuracy[i] > cv.mean_accuracy[best];
    const bool tie_smaller = cv.mean_accuracy[i] == cv.mean_accuracy[best] && grid[i] < grid[best];
    if (better || tie_smaller) best = i;
  }
  cv.best_C = grid[best];
  return cv;
}

void save_svm(const std::filesystem::path& path, const SvmModel& model,
              const std::map<std::string, std::string>& provenance) {
  nlohmann::json h;
  h["format"] = "weaknet-svm";
  h["version"] = 1;
  h["C"] = model.C;
  h["D"] = model.dim;
  h["classes"] = model.classes;
  h["standardization"] = "per-dimension mean / population std of the training set";
  h["provenance"] = provenance;
  // Weights are trained in f64 and stored as f32.
  std::vector<NamedBlob> blobs;
  auto add = [&](const std::string& name, const std::vector<double>& v, Shape shape) {
    blobs.push_back({name, Tensor(std::move(shape), std::vector<float>(v.begin(), v.end()))});
  };
  add("mean", model.mean, {model.dim});
  add("inv_std", model.inv_std, {model.dim});
  add("weights", model.weights, {model.classes, model.dim});
  add("bias", model.bias, {model.classes});
  write_container(path, std::move(h), blobs);
}

SvmModel load_svm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("SVM model not found: " + path.string());
  const Container c = read_container(path);
  if (c.header.value("format", "") != "weaknet-svm") {
    throw std::runtime_error(path.string() + " is not a weaknet SVM model");
  }
  SvmModel m;
  m.C = c.header.at("C").get<double>();
  m.dim = c.header.at("D").get<std::size_t>();
  m.classes = c.header.at("classes").get<std::size_t>();
  auto get = [&](const std::string& name) {
    const Tensor* t = c.find(name);
    if (!t) throw std::runtime_error("SVM model lacks blob " + name);
    return std::vector<double>(t->storage().begin(), t->storage().end());
  };
  m.mean = get("mean");
  m.inv_std = get("inv_std");
  m.weights = get("weights");
  m.bias = get("bias");
  return m;
}

}  // namespace weaknet
