#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace weaknet {

/// Row-major N x D feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  const float* row(std::size_t i) const { return values.data() + i * cols; }
  void append(const std::vector<float>& r);
};

struct SvmOptions {
  double tolerance = 1e-4;       // projected-gradient gap
  std::size_t max_epochs = 20000;
  double bias_scale = 1.0;       // constant feature appended for the bias
};

/// Solver trace for one binary problem.
struct BinarySvm {
  std::vector<double> w;
  double b = 0.0;
  bool degenerate = false;  // single-polarity problem, constant negative
  std::size_t epochs = 0;
  bool converged = false;
  std::vector<double> dual_objective;  // after every epoch
};

/// L2-regularised hinge loss, dual coordinate descent in fixed example
/// order. Labels are +1 / -1. The bias is learned through an appended
/// constant feature, so it is regularised along with w.
BinarySvm train_binary_svm(const FeatureMatrix& x, const std::vector<int>& y, double C,
                           const SvmOptions& options = {});

/// 0.5 * (|w|^2 + b^2) + C * sum of hinge losses.
double primal_objective(const BinarySvm& model, const FeatureMatrix& x, const std::vector<int>& y,
                        double C, double bias_scale = 1.0);

struct SvmModel {
  double C = 1.0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> mean;     // standardisation, per dimension
  std::vector<double> inv_std;
  std::vector<double> weights;  // classes x dim, on standardised features
  std::vector<double> bias;     // per class
};

/// Standardises features with training statistics, then trains one
/// one-vs-rest binary problem per class index in [0, num_classes).
SvmModel train_linear_svm(const FeatureMatrix& x, const std::vector<int>& labels,
                          std::size_t num_classes, double C, const SvmOptions& options = {});

struct Prediction {
  int label = 0;
  std::vector<double> scores;
};

/// argmax over classes; ties go to the lowest index.
Prediction predict(const SvmModel& model, const float* x, std::size_t dim);
std::vector<int> predict_all(const SvmModel& model, const FeatureMatrix& x);

struct CrossValidation {
  double best_C = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_accuracy;  // aligned with grid
};

inline const std::vector<double> kDefaultCGrid{0.01, 0.1, 1.0, 10.0, 100.0};

/// Stratified folds: each class is shuffled with `seed` and dealt round-robin.
std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t k_folds,
                                  std::uint64_t seed);

/// Mean held-out accuracy per C; ties go to the smaller C.
CrossValidation cross_validate_C(const FeatureMatrix& x, const std::vector<int>& labels,
                                 std::size_t num_classes, const std::vector<double>& grid,
                                 std::size_t k_folds = 5, std::uint64_t seed = 0,
                                 const SvmOptions& options = {});

void save_svm(const std::filesystem::path& path, const SvmModel& model,
              const std::map<std::string, std::string>& provenance = {});
SvmModel load_svm(const std::filesystem::path& path);

}  // namespace weaknet
