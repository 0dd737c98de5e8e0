#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "weaknet/metrics.hpp"

using namespace weaknet;

namespace {

double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

// Precision at each positive, walking a stable descending sort.
double ap_walk(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (y[idx[r]] == 1) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / hits;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("auc examples") {
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{1, 1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.8, 0.7, 0.6, 0.2}, std::vector<int>{1, 0, 1, 0}) == 0.75);
    CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}) == 0.5);
    CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), UndefinedMetric);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), std::invalid_argument);
  }

  TEST_CASE("average precision examples") {
    CHECK(average_precision(std::vector<double>{0.9, 0.5, 0.1}, std::vector<int>{1, 0, 1}) ==
          doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.1, 0.0}, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}) ==
          doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}),
                    UndefinedMetric);
  }

  TEST_CASE("auc and ap agree with brute force") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> len(2, 50), level(0, 9);
    for (int trial = 0; trial < 500; ++trial) {
      const int n = len(rng);
      std::vector<double> s(n);
      std::vector<int> y(n);
      // Coarse score levels force ties.
      for (int i = 0; i < n; ++i) {
        s[i] = level(rng) / 10.0;
        y[i] = static_cast<int>(rng() & 1);
      }
      y[0] = 1;
      y[1] = 0;
      CHECK(auc(s, y) == doctest::Approx(auc_pairs(s, y)).epsilon(1e-12));
      CHECK(average_precision(s, y) == doctest::Approx(ap_walk(s, y)).epsilon(1e-12));
    }
  }

  TEST_CASE("strictly increasing transforms keep auc and ap") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> s(20), t(20);
      std::vector<int> y(20);
      for (int i = 0; i < 20; ++i) {
        s[i] = u(rng);
        t[i] = std::exp(2.0 * s[i]) + 1.0;
        y[i] = i % 3 == 0;
      }
      CHECK(auc(s, y) == auc(t, y));
      CHECK(average_precision(s, y) == average_precision(t, y));
    }
  }

  TEST_CASE("class means skip undefined classes") {
    CHECK(mean_defined({1.0, 0.5}) == 0.75);
    CHECK(mean_defined({std::nullopt, 0.5, 1.0}) == 0.75);
    CHECK_THROWS_AS(mean_defined({std::nullopt}), UndefinedMetric);
    // Class 1 is positive everywhere and drops out.
    const std::vector<double> scores{0.9, 0.1, 0.2, 0.8, 0.3, 0.5};
    const std::vector<int> labels{1, 1, 0, 1, 0, 1};
    const ClassMetrics m = class_metrics(scores, labels, 2);
    CHECK(m.auc[0].has_value());
    CHECK_FALSE(m.auc[1].has_value());
    CHECK(m.mauc == 1.0);
    CHECK(m.map == 1.0);
  }

  TEST_CASE("accuracy and confusion") {
    const std::vector<int> pred{0, 1, 1, 2, 2}, truth{0, 1, 2, 2, 0};
    const AccuracyReport r = accuracy_and_confusion(pred, truth, 3);
    CHECK(r.accuracy == doctest::Approx(0.6));
    CHECK(r.confusion.at(2, 1) == 1);
    CHECK(r.confusion.at(0, 2) == 1);
    CHECK(r.confusion.trace() == 3);
    CHECK(r.confusion.total() == 5);
    CHECK_THROWS_AS(accuracy_and_confusion(pred, std::vector<int>{0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(accuracy_and_confusion(std::vector<int>{3}, std::vector<int>{0}, 3),
                    std::invalid_argument);
    CHECK(mean_fold_accuracy(std::vector<double>{0.8, 0.6}) == doctest::Approx(0.7));
  }
}
