#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace weaknet {

/// Raised when a metric is undefined for the given labels (e.g. AUC with a
/// single polarity, AP without positives).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
/// correctly, ties counted as one half.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Non-interpolated average precision; equal scores keep input order.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct ClassMetrics {
  std::vector<std::optional<double>> auc;  // nullopt where undefined
  std::vector<std::optional<double>> ap;
  double mauc = 0.0;
  double map = 0.0;
};

/// Unweighted means over the defined entries; throws UndefinedMetric when
/// none is defined.
double mean_defined(const std::vector<std::optional<double>>& values);

/// scores and labels are N x C, row-major. Classes without both polarities
/// are skipped from the means with a warning.
ClassMetrics class_metrics(std::span<const double> scores, std::span<const int> labels,
                           std::size_t num_classes);

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // row = truth, column = prediction

  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes + predicted];
  }
  std::size_t total() const;
  std::size_t trace() const;
};

struct AccuracyReport {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

AccuracyReport accuracy_and_confusion(std::span<const int> predictions,
                                      std::span<const int> truths, std::size_t num_classes);

/// Cross-fold protocol: unweighted mean of per-fold accuracies.
double mean_fold_accuracy(std::span<const double> fold_accuracies);

}  // namespace weaknet
