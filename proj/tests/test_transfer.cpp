#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "weaknet/transfer.hpp"

using namespace weaknet;

namespace {

ModelParams calibrated_source(std::size_t classes, std::uint64_t seed) {
  ModelParams p = build_source(classes, seed);
  const auto a = testing::random_logmel(256, seed + 1), b = testing::random_logmel(128, seed + 2);
  calibrate_batchnorm(p, {&a, &b});
  return p;
}

std::vector<LabeledExample> scene_set(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.id = "s" + std::to_string(i);
    ex.features = testing::random_logmel(128 + 64 * (i % 3), seed * 100 + i);
    ex.class_index = static_cast<int>(i % classes);
    for (std::size_t t = 0; t < ex.features.num_frames; ++t) {
      const std::size_t lo = 30 * static_cast<std::size_t>(ex.class_index);
      for (std::size_t b = lo; b < lo + 10; ++b) {
        ex.features.frames[t * 128 + b] += 4.0f;
      }
    }
    ex.target.assign(classes, 0.0f);
    ex.target[ex.class_index] = 1.0f;
    out.push_back(std::move(ex));
  }
  return out;
}

// Everything that must not move during adaptation: B1..B6 weights and BN state.
std::vector<std::vector<float>> trunk_state(const ModelParams& p) {
  std::vector<std::vector<float>> s;
  for (const auto& block : p.blocks) {
    for (const auto& l : block) {
      s.push_back(l.conv.weight.storage());
      s.push_back(l.conv.bias.storage());
      s.push_back(l.bn.gamma.storage());
      s.push_back(l.bn.beta.storage());
      s.push_back(l.bn.running.mean.storage());
      s.push_back(l.bn.running.var.storage());
    }
  }
  return s;
}

}  // namespace

TEST_SUITE("transfer") {
  TEST_CASE("adapted heads and trainable sets") {
    const ModelParams src = calibrated_source(20, 1);
    const ModelParams m1 = adapt_method_i(src, 50, LossKind::categorical_ce);
    REQUIRE(m1.ft_conv.has_value());
    CHECK(m1.ft_conv->weight.shape() == Shape{50, 1024, 1, 1});
    CHECK_FALSE(m1.f2.has_value());
    CHECK(m1.head == HeadKind::softmax);
    std::vector<std::string> trainable;
    for (const auto& r : parameter_refs(m1)) {
      if (r.trainable) trainable.push_back(r.name);
    }
    CHECK(trainable == std::vector<std::string>{"f1.weight", "f1.bias", "ft.weight", "ft.bias"});

    const ModelParams m2 = adapt_method_ii(src, 7, LossKind::categorical_ce);
    CHECK(m2.ft_conv->weight.shape() == Shape{7, 20, 1, 1});
    CHECK(m2.f2_activation == Activation::relu);
    const ModelParams m3 = adapt_method_iii(src, 7, LossKind::multilabel_bce);
    REQUIRE(m3.ft_dense.has_value());
    CHECK(m3.ft_dense->weight.shape() == Shape{7, 20});
    CHECK(m3.head == HeadKind::sigmoid);
    for (const auto* m : {&m1, &m2, &m3}) {
      for (bool t : m->block_trainable) CHECK_FALSE(t);
      CHECK(m->f1_trainable);
    }
    CHECK(m2.f2_trainable);
    CHECK_FALSE(m1.f2_trainable);

    CHECK_THROWS_AS(adapt_method_i(m1, 5, LossKind::categorical_ce), std::invalid_argument);
    CHECK_THROWS_AS(adapt_method_ii(src, 1, LossKind::categorical_ce), std::invalid_argument);
    CHECK_THROWS_AS(adapt_method_iii(build_source(5, 0), 3, LossKind::categorical_ce),
                    std::invalid_argument);
  }

  TEST_CASE("adaptation defaults") {
    const TrainConfig c = adaptation_config();
    CHECK(c.lr == 0.0002);
    CHECK(c.epochs == 50);
    CHECK_FALSE(c.select_best);
    CHECK(parse_adapt_method("III") == AdaptMethod::iii);
    CHECK_THROWS_AS(parse_adapt_method("IV"), std::invalid_argument);
  }

  TEST_CASE("single-segment outputs of methods II and III agree") {
    const ModelParams src = calibrated_source(6, 2);
    ModelParams m2 = adapt_method_ii(src, 4, LossKind::categorical_ce);
    const ModelParams m3 = adapt_method_iii(src, 4, LossKind::categorical_ce, 9);
    m2.ft_conv->weight = Tensor({4, 6, 1, 1}, m3.ft_dense->weight.storage());
    m2.ft_conv->bias = m3.ft_dense->bias;
    for (std::uint64_t seed : {3u, 4u, 5u}) {
      const auto x = testing::random_logmel(128, seed);
      const auto a = infer(m2, x).recording.scores, b = infer(m3, x).recording.scores;
      for (std::size_t c = 0; c < 4; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-5));
    }
  }

  TEST_CASE("untrained adaptation keeps F1 and ReLU F2") {
    const ModelParams src = calibrated_source(6, 6);
    const auto x = testing::random_logmel(320, 7);
    const auto f1 = extract_representation(src, x, Layer::f1, PoolMode::max);
    for (auto method : {AdaptMethod::i, AdaptMethod::ii, AdaptMethod::iii}) {
      const ModelParams m = adapt(src, method, 3, LossKind::categorical_ce);
      CHECK(extract_representation(m, x, Layer::f1, PoolMode::max).values == f1.values);
    }
    const Inference s = infer(src, x);
    for (float v : s.f2.storage()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    const Inference a = infer(adapt_method_iii(src, 3, LossKind::categorical_ce), x);
    bool saw_zero_or_above_one = false;
    for (float v : a.f2.storage()) {
      CHECK(v >= 0.0f);
      saw_zero_or_above_one |= v == 0.0f || v > 1.0f;
    }
    CHECK(saw_zero_or_above_one);
    const ModelParams m1 = adapt_method_i(src, 3, LossKind::categorical_ce);
    CHECK_THROWS_AS(extract_representation(m1, x, Layer::f2, PoolMode::max), std::invalid_argument);
    CHECK_THROWS_AS(check_layer(m1, Layer::f2), std::invalid_argument);
    CHECK_NOTHROW(check_layer(m1, Layer::f1));
  }

  TEST_CASE("pooled representations ignore segment order") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor act = testing::random_tensor<float>({12, 7}, rng, 0.0, 3.0);
      std::vector<std::size_t> perm(7);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Tensor shuffled({12, 7});
      for (std::size_t d = 0; d < 12; ++d) {
        for (std::size_t s = 0; s < 7; ++s) shuffled[d * 7 + s] = act[d * 7 + perm[s]];
      }
      const auto a = pool_representation(act, Layer::f2, PoolMode::max, Variant::adapted_iii);
      const auto b = pool_representation(shuffled, Layer::f2, PoolMode::max, Variant::adapted_iii);
      CHECK(a.values == b.values);
      const auto am = pool_representation(act, Layer::f2, PoolMode::avg, Variant::adapted_iii);
      const auto bm = pool_representation(shuffled, Layer::f2, PoolMode::avg, Variant::adapted_iii);
      for (std::size_t d = 0; d < 12; ++d) CHECK(am.values[d] == doctest::Approx(bm.values[d]));
    }
  }

  TEST_CASE("adaptation trains only the head and leaves the trunk untouched") {
    const ModelParams src = calibrated_source(5, 9);
    const auto train = scene_set(6, 3, 10);
    TrainConfig cfg = adaptation_config();
    cfg.epochs = 3;
    cfg.batch_size = 3;
    const auto before = trunk_state(src);
    for (auto method : {AdaptMethod::i, AdaptMethod::ii, AdaptMethod::iii}) {
      const ModelParams m = adapt(src, method, 3, LossKind::categorical_ce);
      const TrainResult r = adapt_train(m, train, cfg);
      CHECK(r.history.size() == 3);
      CHECK(trunk_state(r.params) == before);
      CHECK(r.params.f1.weight != src.f1.weight);
      if (method != AdaptMethod::i) CHECK(r.params.f2->weight != src.f2->weight);
    }
    CHECK_THROWS_AS(adapt_train(src, train, cfg), std::invalid_argument);
  }

  TEST_CASE("batchnorm calibration") {
    ModelParams p = build_source(3, 11);
    CHECK_FALSE(p.blocks[0][0].bn.running.tracked);
    const auto x = testing::random_logmel(128, 12);
    calibrate_batchnorm(p, {&x});
    for (const auto& block : p.blocks) {
      for (const auto& l : block) CHECK(l.bn.running.tracked);
    }
    CHECK(p.blocks[0][0].bn.running.mean[0] != 0.0f);
    CHECK_THROWS_AS(calibrate_batchnorm(p, {}), std::invalid_argument);
  }
}
