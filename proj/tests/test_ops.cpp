#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "helpers.hpp"
#include "weaknet/gemm.hpp"
#include "weaknet/loss.hpp"
#include "weaknet/ops.hpp"

using namespace weaknet;
using TD = TensorD;

namespace {

// Central differences of a scalar function of one tensor; max-norm relative
// error against the analytic gradient.
double fd_error(TD& x, const TD& analytic, const std::function<double()>& f, double h = 1e-6) {
  double worst = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double old = x[i];
    x[i] = old + h;
    const double up = f();
    x[i] = old - h;
    const double down = f();
    x[i] = old;
    const double num = (up - down) / (2.0 * h);
    worst = std::max(worst, std::fabs(num - analytic[i]));
    scale = std::max(scale, std::fabs(num));
  }
  return worst / scale;
}

double weighted_sum(const TD& y, const TD& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

constexpr double kGradTol = 1e-4;

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d examples") {
    TD x({1, 1, 3, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) - 5.0;
    TD one({1, 1, 1, 1}, 1.0);
    CHECK(ops::conv2d(x, one, TD({1}), {1, 0}) == x);

    TD c({1, 1, 5, 6}, 2.5);
    TD ones({1, 1, 3, 3}, 1.0);
    const TD y = ops::conv2d(c, ones, TD({1}), {1, 1});
    REQUIRE(y.shape() == Shape{1, 1, 5, 6});
    CHECK(y.at(0, 0, 2, 2) == 9 * 2.5);
    CHECK(y.at(0, 0, 0, 0) == 4 * 2.5);
    CHECK(y.at(0, 0, 4, 5) == 4 * 2.5);
    CHECK(y.at(0, 0, 0, 3) == 6 * 2.5);

    TD b6({1, 512, 14, 2});
    TD f1({4, 512, 2, 2});
    CHECK(ops::conv2d(b6, f1, TD({4}), {1, 0}).shape() == Shape{1, 4, 13, 1});

    CHECK_THROWS_AS(ops::conv2d(TD({1, 2, 4, 4}), TD({1, 3, 3, 3}), TD({1}), {1, 1}),
                    std::invalid_argument);
    CHECK(ops::conv_output_size(7, 3, {2, 1}) == 4);
  }

  TEST_CASE("conv2d is linear without bias") {
    std::mt19937_64 rng(1);
    const TD a = testing::random_tensor<double>({2, 3, 6, 5}, rng);
    const TD b = testing::random_tensor<double>({2, 3, 6, 5}, rng);
    const TD w = testing::random_tensor<double>({4, 3, 3, 3}, rng);
    TD mix(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 0.7 * a[i] - 1.3 * b[i];
    const TD ya = ops::conv2d(a, w, TD(), {1, 1});
    const TD yb = ops::conv2d(b, w, TD(), {1, 1});
    const TD ym = ops::conv2d(mix, w, TD(), {1, 1});
    for (std::size_t i = 0; i < ym.size(); ++i) {
      REQUIRE(ym[i] == doctest::Approx(0.7 * ya[i] - 1.3 * yb[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(2, 6), ch(1, 4), k(1, 3), st(1, 2), pd(0, 1);
    for (int trial = 0; trial < 24; ++trial) {
      const std::size_t kh = k(rng), kw = k(rng);
      const ops::ConvGeometry g{static_cast<std::size_t>(st(rng)), static_cast<std::size_t>(pd(rng))};
      const std::size_t h = std::max<std::size_t>(kh, dim(rng)), w = std::max<std::size_t>(kw, dim(rng));
      TD x = testing::random_tensor<double>({2, static_cast<std::size_t>(ch(rng)), h, w}, rng);
      TD wt = testing::random_tensor<double>({static_cast<std::size_t>(ch(rng)), x.dim(1), kh, kw}, rng);
      TD b = testing::random_tensor<double>({wt.dim(0)}, rng);
      const TD y = ops::conv2d(x, wt, b, g);
      const TD r = testing::random_tensor<double>(y.shape(), rng);
      const auto grads = ops::conv2d_backward(x, wt, r, g, true, true);
      auto f = [&] { return weighted_sum(ops::conv2d(x, wt, b, g), r); };
      CHECK(fd_error(x, grads.input, f) < kGradTol);
      CHECK(fd_error(wt, grads.weight, f) < kGradTol);
      CHECK(fd_error(b, grads.bias, f) < kGradTol);
    }
  }

  TEST_CASE("conv2d backward edge cases") {
    std::mt19937_64 rng(2);
    const TD x = testing::random_tensor<double>({1, 2, 4, 4}, rng);
    const TD w = testing::random_tensor<double>({3, 2, 3, 3}, rng);
    const auto zero = ops::conv2d_backward(x, w, TD({1, 3, 4, 4}), {1, 1}, true, true);
    for (double v : zero.input.storage()) CHECK(v == 0.0);
    for (double v : zero.weight.storage()) CHECK(v == 0.0);
    const auto frozen = ops::conv2d_backward(x, w, testing::random_tensor<double>({1, 3, 4, 4}, rng),
                                             {1, 1}, true, false);
    CHECK(frozen.weight.empty());
    CHECK(frozen.bias.empty());
    CHECK_FALSE(frozen.input.empty());
    CHECK_THROWS_AS(ops::conv2d_backward(x, w, TD({1, 3, 3, 3}), {1, 1}, true, true),
                    std::invalid_argument);
  }

  TEST_CASE("batchnorm examples") {
    // Zero-mean, unit-variance channels pass through up to the eps term.
    TD x({2, 1, 1, 2});
    x[0] = 1.0;
    x[1] = -1.0;
    x[2] = 1.0;
    x[3] = -1.0;
    ops::RunningStats<double> rs;
    const TD y = ops::batchnorm2d<double>(x, TD({1}, 1.0), TD({1}, 0.0), rs, ops::Mode::train, {}, nullptr);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-5));

    TD c({3, 1, 2, 2}, 4.0);
    const TD yc = ops::batchnorm2d<double>(c, TD({1}, 2.0), TD({1}, 0.25), rs, ops::Mode::train, {}, nullptr);
    for (double v : yc.storage()) CHECK(v == 0.25);

    CHECK_THROWS_AS(ops::batchnorm2d<double>(x, TD({1}, 1.0), TD({1}, 0.0), rs, ops::Mode::eval, {}, nullptr),
                    std::logic_error);
    CHECK_THROWS_AS(ops::batchnorm2d<double>(x, TD({2}, 1.0), TD({2}, 0.0), rs, ops::Mode::train, {}, nullptr),
                    std::invalid_argument);
  }

  TEST_CASE("running statistics follow the momentum rule") {
    TD x({1, 1, 1, 4});
    for (int i = 0; i < 4; ++i) x[i] = i;  // mean 1.5, biased var 1.25
    ops::RunningStats<double> rs;
    ops::BatchNormCache<double> cache;
    ops::batchnorm2d<double>(x, TD({1}, 1.0), TD({1}, 0.0), rs, ops::Mode::train, {0.1, 1e-5}, &cache);
    CHECK_FALSE(rs.tracked);
    ops::update_running_stats(rs, cache, {0.1, 1e-5});
    CHECK(rs.tracked);
    CHECK(rs.mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 1.5));
    CHECK(rs.var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25 * 4.0 / 3.0));
    const TD y = ops::batchnorm2d<double>(x, TD({1}, 1.0), TD({1}, 0.0), rs, ops::Mode::eval, {0.1, 1e-5}, nullptr);
    CHECK(y[3] == doctest::Approx((3.0 - rs.mean[0]) / std::sqrt(rs.var[0] + 1e-5)));
  }

  TEST_CASE("batchnorm gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      TD x = testing::random_tensor<double>({3, 2, 3, 2}, rng, -2.0, 2.0);
      TD gamma = testing::random_tensor<double>({2}, rng, 0.5, 1.5);
      TD beta = testing::random_tensor<double>({2}, rng);
      ops::RunningStats<double> rs;
      ops::BatchNormCache<double> cache;
      const TD y = ops::batchnorm2d<double>(x, gamma, beta, rs, ops::Mode::train, {}, &cache);
      const TD r = testing::random_tensor<double>(y.shape(), rng);
      const auto g = ops::batchnorm2d_backward(r, gamma, cache, true, true);
      auto f = [&] {
        return weighted_sum(ops::batchnorm2d<double>(x, gamma, beta, rs, ops::Mode::train, {}, nullptr), r);
      };
      CHECK(fd_error(x, g.input, f) < kGradTol);
      CHECK(fd_error(gamma, g.gamma, f) < kGradTol);
      CHECK(fd_error(beta, g.beta, f) < kGradTol);
    }
  }

  TEST_CASE("eval-mode batchnorm gradient") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      TD x = testing::random_tensor<double>({2, 3, 2, 2}, rng);
      TD gamma = testing::random_tensor<double>({3}, rng, 0.5, 1.5);
      TD beta = testing::random_tensor<double>({3}, rng);
      ops::RunningStats<double> rs{testing::random_tensor<double>({3}, rng),
                                   testing::random_tensor<double>({3}, rng, 0.5, 2.0), true};
      ops::BatchNormCache<double> cache;
      const TD y = ops::batchnorm2d<double>(x, gamma, beta, rs, ops::Mode::eval, {}, &cache);
      const TD r = testing::random_tensor<double>(y.shape(), rng);
      const auto g = ops::batchnorm2d_backward(r, gamma, cache, true, true);
      auto f = [&] {
        return weighted_sum(ops::batchnorm2d<double>(x, gamma, beta, rs, ops::Mode::eval, {}, nullptr), r);
      };
      CHECK(fd_error(x, g.input, f) < kGradTol);
      CHECK(fd_error(gamma, g.gamma, f) < kGradTol);
    }
  }

  TEST_CASE("maxpool examples") {
    TD x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto p = ops::maxpool2d(x);
    CHECK(p.output.size() == 1);
    CHECK(p.output[0] == 4);
    const TD g = ops::maxpool2d_backward(TD({1, 1, 1, 1}, 1.0), p);
    CHECK(g == TD({1, 1, 2, 2}, std::vector<double>{0, 0, 0, 1}));

    CHECK(ops::maxpool2d(TD({1, 2, 5, 7})).output.shape() == Shape{1, 2, 2, 3});

    // Ties keep the first element in row-major order.
    const auto tie = ops::maxpool2d(TD({1, 1, 2, 2}, 5.0));
    CHECK(tie.argmax[0] == 0);
    CHECK_THROWS_AS(ops::maxpool2d(TD({1, 1, 1, 4})), std::invalid_argument);
  }

  TEST_CASE("maxpool gradient matches finite differences") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      TD x = testing::random_tensor<double>({2, 2, 5, 4}, rng);
      const auto p = ops::maxpool2d(x);
      const TD r = testing::random_tensor<double>(p.output.shape(), rng);
      const TD g = ops::maxpool2d_backward(r, p);
      // Distinct random values: h far below the smallest gap keeps argmax fixed.
      auto f = [&] { return weighted_sum(ops::maxpool2d(x).output, r); };
      CHECK(fd_error(x, g, f, 1e-8) < kGradTol);
    }
  }

  TEST_CASE("activation examples") {
    TD x({1, 2}, std::vector<double>{-3.0, 5.0});
    CHECK(ops::relu(x) == TD({1, 2}, std::vector<double>{0.0, 5.0}));
    CHECK(ops::sigmoid(0.0) == 0.5);
    CHECK(ops::sigmoid(-800.0) >= 0.0);
    CHECK(ops::sigmoid(800.0) == 1.0);
    CHECK(std::isfinite(ops::sigmoid(-800.0f)));
    const TD s = ops::softmax(TD({1, 3}, 0.0));
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3.0));
    const TD big = ops::softmax(TD({1, 3}, std::vector<double>{1000, 1001, 1002}));
    CHECK(big[0] + big[1] + big[2] == doctest::Approx(1.0));
  }

  TEST_CASE("activation gradients match finite differences") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      TD x = testing::random_tensor<double>({2, 4, 3}, rng, -3.0, 3.0);
      // Keep relu inputs away from the kink.
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::fabs(x[i]) < 1e-3) x[i] = 0.5;
      }
      const TD r = testing::random_tensor<double>(x.shape(), rng);
      const TD yr = ops::relu(x);
      CHECK(fd_error(x, ops::relu_backward(yr, r), [&] { return weighted_sum(ops::relu(x), r); }) <
            kGradTol);
      const TD ys = ops::sigmoid(x);
      CHECK(fd_error(x, ops::sigmoid_backward(ys, r),
                     [&] { return weighted_sum(ops::sigmoid(x), r); }) < kGradTol);
      const TD ym = ops::softmax(x);
      CHECK(fd_error(x, ops::softmax_backward(ym, r),
                     [&] { return weighted_sum(ops::softmax(x), r); }) < kGradTol);
    }
  }

  TEST_CASE("global pooling examples and gradients") {
    TD seg({1, 1, 3, 1}, std::vector<double>{0.2, 0.9, 0.1});
    CHECK(ops::global_pool(seg, ops::PoolMode::max).output[0] == 0.9);
    CHECK(ops::global_pool(seg, ops::PoolMode::avg).output[0] == doctest::Approx(0.4));
    TD one({2, 3, 1, 1}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(ops::global_pool(one, ops::PoolMode::max).output ==
          ops::global_pool(one, ops::PoolMode::avg).output);

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      for (auto mode : {ops::PoolMode::max, ops::PoolMode::avg}) {
        TD x = testing::random_tensor<double>({2, 3, 5, 1}, rng);
        const auto p = ops::global_pool(x, mode);
        const TD r = testing::random_tensor<double>(p.output.shape(), rng);
        const TD g = ops::global_pool_backward(r, p);
        CHECK(fd_error(x, g, [&] { return weighted_sum(ops::global_pool(x, mode).output, r); }, 1e-8) <
              kGradTol);
        if (mode == ops::PoolMode::max) {
          // At most one segment per (example, class) receives gradient.
          for (std::size_t n = 0; n < 2; ++n) {
            for (std::size_t c = 0; c < 3; ++c) {
              int nonzero = 0;
              for (std::size_t k = 0; k < 5; ++k) nonzero += g.at(n, c, k, 0) != 0.0;
              CHECK(nonzero <= 1);
            }
          }
        } else {
          CHECK(g.at(1, 2, 3, 0) == doctest::Approx(r[1 * 3 + 2] / 5.0));
        }
      }
    }
  }

  TEST_CASE("appending segments never lowers a max-pooled score") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
      const TD a = testing::random_tensor<double>({1, 4, 6, 1}, rng);
      const TD more = testing::random_tensor<double>({1, 4, 3, 1}, rng);
      TD joined({1, 4, 9, 1});
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t k = 0; k < 9; ++k) {
          joined.at(0, c, k, 0) = k < 6 ? a.at(0, c, k, 0) : more.at(0, c, k - 6, 0);
        }
      }
      const TD pa = ops::global_pool(a, ops::PoolMode::max).output;
      const TD pj = ops::global_pool(joined, ops::PoolMode::max).output;
      for (std::size_t c = 0; c < 4; ++c) CHECK(pj[c] >= pa[c]);
    }
  }

  TEST_CASE("dense gradients match finite differences") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      TD x = testing::random_tensor<double>({3, 5}, rng);
      TD w = testing::random_tensor<double>({4, 5}, rng);
      TD b = testing::random_tensor<double>({4}, rng);
      const TD r = testing::random_tensor<double>({3, 4}, rng);
      const auto g = ops::dense_backward(x, w, r, true, true);
      auto f = [&] { return weighted_sum(ops::dense(x, w, b), r); };
      CHECK(fd_error(x, g.input, f) < kGradTol);
      CHECK(fd_error(w, g.weight, f) < kGradTol);
      CHECK(fd_error(b, g.bias, f) < kGradTol);
    }
  }

  TEST_CASE("bce loss values") {
    std::vector<double> half{0.5, 0.5};
    for (auto y : {std::vector<double>{0, 0}, std::vector<double>{1, 0}, std::vector<double>{1, 1}}) {
      CHECK(bce_loss<double>(half, y).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    std::vector<double> p{0.9, 0.2}, y{1, 0};
    CHECK(bce_loss<double>(p, y).value ==
          doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2.0).epsilon(1e-12));
    CHECK(bce_loss<double>(p, y).value == doctest::Approx(0.164252).epsilon(1e-6));
    std::vector<double> exact{1.0, 0.0};
    CHECK(bce_loss<double>(exact, y).value < 1e-6);
    CHECK_THROWS_AS(bce_loss<double>(p, std::vector<double>{1.0}), std::invalid_argument);
  }

  TEST_CASE("cce loss values") {
    std::vector<double> flat(4, 0.3);
    CHECK(cce_loss<double>(flat, 2).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    std::vector<double> z{1, 2, 3};
    const double direct = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    CHECK(cce_loss<double>(z, 2).value == doctest::Approx(direct).epsilon(1e-12));
    CHECK(cce_loss<double>(z, 2).value == doctest::Approx(0.407606).epsilon(1e-6));
    std::vector<double> dominant{0.0, 1000.0, 0.0};
    CHECK(cce_loss<double>(dominant, 1).value < 1e-12);
    CHECK(std::isfinite(cce_loss<double>(dominant, 0).value));
    CHECK_THROWS_AS(cce_loss<double>(z, 3), std::invalid_argument);
  }

  TEST_CASE("logit bce matches bce on sigmoid outputs") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 100; ++trial) {
      const TD z = testing::random_tensor<double>({5}, rng, -6.0, 6.0);
      std::vector<double> y(5), p(5);
      for (std::size_t i = 0; i < 5; ++i) {
        y[i] = (rng() & 1) ? 1.0 : 0.0;
        p[i] = ops::sigmoid(z[i]);
      }
      const auto a = bce_logits_loss<double>(z.storage(), y);
      const auto b = bce_loss<double>(p, y);
      CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(a.grad[i] == doctest::Approx(b.grad[i] * p[i] * (1.0 - p[i])).epsilon(1e-9));
      }
    }
    // Saturated and wrong: the gradient stays at (s - y) / C.
    const std::vector<float> z{40.0f, -40.0f}, y{0.0f, 1.0f};
    const auto l = bce_logits_loss<float>(z, y);
    CHECK(l.grad[0] == doctest::Approx(0.5));
    CHECK(l.grad[1] == doctest::Approx(-0.5));
    CHECK(l.value == doctest::Approx(40.0));
  }

  TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int trial = 0; trial < 20; ++trial) {
      TD p({6});
      std::vector<double> y(6);
      for (std::size_t i = 0; i < 6; ++i) {
        p[i] = u(rng);
        y[i] = (rng() & 1) ? 1.0 : 0.0;
      }
      const auto l = bce_loss<double>(p.storage(), y);
      CHECK(fd_error(p, TD({6}, l.grad), [&] { return bce_loss<double>(p.storage(), y).value; }) <
            kGradTol);
      TD z = testing::random_tensor<double>({5}, rng, -3.0, 3.0);
      TD zl = testing::random_tensor<double>({6}, rng, -4.0, 4.0);
      const auto bl = bce_logits_loss<double>(zl.storage(), y);
      CHECK(fd_error(zl, TD({6}, bl.grad), [&] { return bce_logits_loss<double>(zl.storage(), y).value; }) <
            kGradTol);
      const std::size_t target = rng() % 5;
      const auto c = cce_loss<double>(z.storage(), target);
      CHECK(fd_error(z, TD({5}, c.grad), [&] { return cce_loss<double>(z.storage(), target).value; }) <
            kGradTol);
    }
  }

  TEST_CASE("gemm column results do not depend on matrix width") {
    std::mt19937_64 rng(14);
    const std::size_t m = 19, k = 300;
    const Tensor a = testing::random_tensor<float>({m, k}, rng);
    const Tensor b = testing::random_tensor<float>({k, 97}, rng);
    std::vector<float> wide(m * 97), narrow(m * 5);
    gemm<float>(m, 97, k, {a.data(), static_cast<std::ptrdiff_t>(k), 1}, {b.data(), 97, 1},
                wide.data(), 97);
    // Columns 40..44 as their own product.
    gemm<float>(m, 5, k, {a.data(), static_cast<std::ptrdiff_t>(k), 1}, {b.data() + 40, 97, 1},
                narrow.data(), 5);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < 5; ++j) REQUIRE(narrow[i * 5 + j] == wide[i * 97 + 40 + j]);
    }
    // And against a double-precision reference.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < 97; j += 13) {
        double ref = 0.0;
        for (std::size_t p = 0; p < k; ++p) ref += static_cast<double>(a[i * k + p]) * b[p * 97 + j];
        CHECK(wide[i * 97 + j] == doctest::Approx(ref).epsilon(1e-4));
      }
    }
  }

  TEST_CASE("float forward ops are bit-reproducible") {
    std::mt19937_64 rng(15);
    const Tensor x = testing::random_tensor<float>({2, 8, 40, 16}, rng);
    const Tensor w = testing::random_tensor<float>({16, 8, 3, 3}, rng);
    const Tensor b = testing::random_tensor<float>({16}, rng);
    CHECK(testing::same_bits(ops::conv2d(x, w, b, {1, 1}), ops::conv2d(x, w, b, {1, 1})));
  }
}
