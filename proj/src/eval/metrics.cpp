#include "weaknet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "weaknet/log.hpp"

namespace weaknet {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a) + " scores vs " +
                                std::to_string(b) + " labels");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] > 0) {
        positives += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetric("auc: need at least one positive and one negative");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "average_precision");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] > 0) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  if (hits == 0.0) throw UndefinedMetric("average_precision: no positive labels");
  return sum / hits;
}

double mean_defined(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) throw UndefinedMetric("mean over classes: no class has a defined metric");
  return sum / static_cast<double>(count);
}

ClassMetrics class_metrics(std::span<const double> scores, std::span<const int> labels,
                           std::size_t num_classes) {
  check_lengths(scores.size(), labels.size(), "class_metrics");
  if (num_classes == 0 || scores.size() % num_classes != 0) {
    throw std::invalid_argument("class_metrics: matrix is not N x C");
  }
  const std::size_t n = scores.size() / num_classes;
  ClassMetrics m;
  m.auc.resize(num_classes);
  m.ap.resize(num_classes);
  std::vector<double> col(n);
  std::vector<int> lab(n);
  std::size_t skipped = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores[i * num_classes + c];
      lab[i] = labels[i * num_classes + c];
    }
    try {
      m.auc[c] = auc(col, lab);
    } catch (const UndefinedMetric&) {
      ++skipped;
    }
    try {
      m.ap[c] = average_precision(col, lab);
    } catch (const UndefinedMetric&) {
    }
  }
  if (skipped > 0) {
    log_warning(std::to_string(skipped) + " of " + std::to_string(num_classes) +
                " classes lack both polarities; skipped from class means");
  }
  m.mauc = mean_defined(m.auc);
  m.map = mean_defined(m.ap);
  return m;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t c = 0; c < classes; ++c) t += at(c, c);
  return t;
}

AccuracyReport accuracy_and_confusion(std::span<const int> predictions,
                                      std::span<const int> truths, std::size_t num_classes) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("accuracy_and_confusion: length mismatch");
  }
  AccuracyReport r;
  r.confusion.classes = num_classes;
  r.confusion.counts.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw std::invalid_argument("accuracy_and_confusion: class index out of range");
    }
    ++r.confusion.counts[static_cast<std::size_t>(t) * num_classes + static_cast<std::size_t>(p)];
  }
  const std::size_t total = r.confusion.total();
  r.accuracy = total ? static_cast<double>(r.confusion.trace()) / static_cast<double>(total) : 0.0;
  return r;
}

double mean_fold_accuracy(std::span<const double> fold_accuracies) {
  if (fold_accuracies.empty()) throw std::invalid_argument("mean_fold_accuracy: no folds");
  return std::accumulate(fold_accuracies.begin(), fold_accuracies.end(), 0.0) /
         static_cast<double>(fold_accuracies.size());
}

}  // namespace weaknet
