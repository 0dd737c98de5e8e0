#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "weaknet/adam.hpp"
#include "weaknet/checkpoint.hpp"
#include "weaknet/loss.hpp"
#include "weaknet/train.hpp"
#include "weaknet/transfer.hpp"

using namespace weaknet;

namespace {

// Class c lights up mel bands [24c, 24c + 12) over a random stretch of frames.
std::vector<LabeledExample> toy_set(std::size_t n, std::size_t frames, std::size_t classes,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.id = "toy" + std::to_string(i);
    ex.features = testing::random_logmel(frames, seed * 1000 + i);
    for (float& v : ex.features.frames) v = v * 0.2f - 8.0f;
    ex.target.assign(classes, 0.0f);
    const std::size_t c = i % classes;
    ex.target[c] = 1.0f;
    if (rng() % 3 == 0) ex.target[(c + 1) % classes] = 1.0f;
    for (std::size_t k = 0; k < classes; ++k) {
      if (ex.target[k] == 0.0f) continue;
      const std::size_t start = rng() % (frames / 2), len = frames / 3;
      for (std::size_t t = start; t < start + len; ++t) {
        for (std::size_t b = 24 * k; b < 24 * k + 12; ++b) ex.features.frames[t * 128 + b] += 6.0f;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.seed = 3;
  cfg.select_best = false;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("example validation") {
    auto set = toy_set(3, 128, 3, 1);
    CHECK_NOTHROW(validate_examples(set, 3, LossKind::multilabel_bce));
    CHECK_THROWS_AS(validate_examples(set, 4, LossKind::multilabel_bce), std::invalid_argument);
    CHECK_THROWS_AS(validate_examples({}, 3, LossKind::multilabel_bce), std::invalid_argument);
    set[1].target.assign(3, 0.0f);
    CHECK_THROWS_AS(validate_examples(set, 3, LossKind::multilabel_bce), std::invalid_argument);
    TrainConfig bad = quick_config(1);
    bad.lr = 0.0;
    CHECK_THROWS_AS(train_weak(toy_set(2, 128, 2, 1), {}, 2, bad), std::invalid_argument);
  }

  TEST_CASE("small set overfits") {
    const auto set = toy_set(6, 128, 3, 2);
    TrainConfig cfg = quick_config(40);
    cfg.batch_size = 6;
    const TrainResult r = train_weak(set, {}, 3, cfg);
    REQUIRE(r.history.size() == 40);
    CHECK(dataset_loss(r.params, set, LossKind::multilabel_bce) < 0.2);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
  }

  TEST_CASE("identical seeds give identical runs") {
    const auto set = toy_set(5, 192, 3, 4);
    const TrainResult a = train_weak(set, {}, 3, quick_config(3));
    const TrainResult b = train_weak(set, {}, 3, quick_config(3));
    for (std::size_t e = 0; e < 3; ++e) CHECK(a.history[e].train_loss == b.history[e].train_loss);
    const auto ra = parameter_refs(a.params), rb = parameter_refs(b.params);
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(testing::same_bits(*ra[i].tensor, *rb[i].tensor));
    TrainConfig other = quick_config(3);
    other.seed = 4;
    CHECK(train_weak(set, {}, 3, other).history[0].train_loss != a.history[0].train_loss);
  }

  TEST_CASE("best validation epoch is kept") {
    const auto train = toy_set(6, 128, 3, 5), val = toy_set(6, 128, 3, 6);
    TrainConfig cfg = quick_config(6);
    cfg.select_best = true;
    const TrainResult r = train_weak(train, val, 3, cfg);
    REQUIRE(r.best_epoch >= 1);
    double best = -1.0;
    std::size_t arg = 0;
    for (const auto& rec : r.history) {
      CHECK(rec.has_validation);
      if (rec.val_mauc > best) {
        best = rec.val_mauc;
        arg = rec.epoch;
      }
    }
    CHECK(r.best_epoch == arg);
    CHECK(r.best_val_mauc == best);
    CHECK(evaluate_examples(r.params, val).mauc == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("early stopping and plateau decay") {
    const auto train = toy_set(4, 128, 2, 7);
    // A validation set the model cannot separate keeps MAUC flat.
    auto val = toy_set(4, 128, 2, 8);
    for (auto& ex : val) ex.features = val[0].features;
    TrainConfig cfg = quick_config(30);
    cfg.select_best = true;
    cfg.patience = 4;
    cfg.plateau_patience = 2;
    const TrainResult r = train_weak(train, val, 2, cfg);
    CHECK(r.history.size() == 5);
    CHECK(r.history.back().lr < cfg.lr);
  }

  TEST_CASE("stop hook ends training") {
    TrainConfig cfg = quick_config(10);
    cfg.stop_when = [](const EpochRecord& r) { return r.epoch == 2; };
    CHECK(train_weak(toy_set(3, 128, 2, 20), {}, 2, cfg).history.size() == 2);
  }

  TEST_CASE("slat segments") {
    const auto set = toy_set(2, 896, 2, 9);
    const auto segs = slat_segments(set);
    CHECK(segs.size() == 26);
    CHECK(segs[13].target == set[1].target);
    CHECK(segs[3].features.num_frames == 128);
    CHECK(segs[3].features.at(0, 7) == set[0].features.at(192, 7));
  }

  TEST_CASE("slat equals weak training on single-segment clips") {
    const auto set = toy_set(4, 128, 2, 10);
    const TrainResult w = train_weak(set, {}, 2, quick_config(2));
    const TrainResult s = train_slat(set, {}, 2, quick_config(2));
    CHECK(s.params.segmentwise);
    for (std::size_t e = 0; e < 2; ++e) CHECK(w.history[e].train_loss == s.history[e].train_loss);
    CHECK(score_examples(w.params, set) == score_examples(s.params, set));
  }

  TEST_CASE("one small Adam step lowers the loss") {
    const auto set = toy_set(4, 128, 2, 11);
    ModelParams p = build_source(2, 12);
    std::vector<const LogmelSpectrogram*> feats;
    for (const auto& ex : set) feats.push_back(&ex.features);
    p.normalization = fit_normalization(feats);
    const Tensor input = prepare_batch(p, feats);
    auto batch_loss = [&](const ModelParams& m, ForwardCache* cache, Tensor* grad) {
      const ForwardOutput out = forward(m, input, Mode::train, cache);
      double total = 0.0;
      for (std::size_t n = 0; n < set.size(); ++n) {
        const auto l = bce_logits_loss<float>(
            std::span<const float>(out.recording_logits.data() + 2 * n, 2), set[n].target);
        total += l.value;
        if (grad) {
          for (std::size_t c = 0; c < 2; ++c) (*grad)[2 * n + c] = l.grad[c] / 4.0f;
        }
      }
      return total / 4.0;
    };
    ForwardCache cache;
    Tensor grad({4, 2});
    const double before = batch_loss(p, &cache, &grad);
    const ModelGrads g = backward(p, cache, grad);
    AdamState state = adam_init(p);
    adam_step(p, g, state, {1e-5});
    CHECK(batch_loss(p, nullptr, nullptr) < before);
  }

  TEST_CASE("adam update rules") {
    ModelParams p = build_source(2, 13);
    const ModelParams original = p;
    AdamState state = adam_init(p);
    adam_step(p, zero_grads(p), state, {});
    CHECK(p.f1.weight == original.f1.weight);

    ModelGrads g = zero_grads(p);
    auto refs = parameter_refs(p);
    std::mt19937_64 rng(14);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      g.tensors[i] = testing::random_tensor<float>(refs[i].tensor->shape(), rng);
    }
    p.block_trainable[0] = false;
    AdamState fresh = adam_init(p);
    adam_step(p, g, fresh, {0.01});
    const auto orig_refs = parameter_refs(original);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Tensor& now = *refs[i].tensor;
      const Tensor& was = *orig_refs[i].tensor;
      if (refs[i].name.rfind("b1.", 0) == 0) {
        CHECK(testing::same_bits(now, was));
        continue;
      }
      // First bias-corrected step moves each entry by about lr * sign(g).
      for (std::size_t j = 0; j < now.size(); j += 97) {
        const float gj = g.tensors[i][j];
        if (std::fabs(gj) < 1e-3f) continue;
        REQUIRE((was[j] - now[j]) == doctest::Approx(0.01 * (gj > 0 ? 1 : -1)).epsilon(1e-3));
      }
    }
  }

  TEST_CASE("max pooling sends gradient to one segment per class") {
    const auto set = toy_set(1, 512, 3, 15);
    ModelParams p = build_source(3, 16);
    const Tensor input = prepare_batch(p, {&set[0].features});
    ForwardCache cache;
    forward(p, input, Mode::train, &cache);
    const std::size_t k = cache.pool.segments;
    CHECK(k == 7);
    const Tensor g = ops::global_pool_backward(Tensor({1, 3}, 1.0f), cache.pool);
    for (std::size_t c = 0; c < 3; ++c) {
      int nonzero = 0;
      for (std::size_t s = 0; s < k; ++s) nonzero += g[c * k + s] != 0.0f;
      CHECK(nonzero == 1);
    }
  }

  TEST_CASE("trained model keeps its input normalisation") {
    const auto set = toy_set(3, 128, 2, 17);
    const TrainResult r = train_weak(set, {}, 2, quick_config(1));
    REQUIRE_FALSE(r.params.normalization.empty());
    const auto dir = testing::scratch_dir("train_norm");
    save_checkpoint(dir / "m.ckpt", r.params);
    const auto back = load_checkpoint(dir / "m.ckpt");
    CHECK(back.params.normalization.mean == r.params.normalization.mean);
    CHECK(score_examples(back.params, set) == score_examples(r.params, set));
  }

  TEST_CASE("training log") {
    const auto dir = testing::scratch_dir("train_log");
    TrainConfig cfg = quick_config(2);
    cfg.log_path = dir / "sub" / "log.csv";
    train_weak(toy_set(2, 128, 2, 18), toy_set(2, 128, 2, 19), 2, cfg);
    std::ifstream in(cfg.log_path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);
  }
}
