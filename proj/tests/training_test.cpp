#include <gtest/gtest.h>

#include <cmath>

#include "rcti/rcti.hpp"
#include "test_support.hpp"

using namespace rcti;

namespace {

const LabeledDataset& train_set() {
  static const auto ds = [] {
    const auto dir = rcti::testing::data_dir();
    return subset(load_idx(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz"), 2000, 11);
  }();
  return ds;
}

const LabeledDataset& test_set() {
  static const auto ds = [] {
    const auto dir = rcti::testing::data_dir();
    return subset(load_idx(dir / "t10k-images-idx3-ubyte.gz", dir / "t10k-labels-idx1-ubyte.gz"), 1000, 12);
  }();
  return ds;
}

TrainConfig quick(double ratio = 0.0) {
  TrainConfig cfg;
  cfg.architecture = "mlp";
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.1;
  cfg.adversarial_ratio = ratio;
  cfg.seed = 5;
  return cfg;
}

LabeledDataset head(const LabeledDataset& ds, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return select(ds, idx);
}

}  // namespace

TEST(TrainBaseline, ZeroEpochsReturnsInitialisedModel) {
  auto cfg = quick();
  cfg.epochs = 0;
  EXPECT_EQ(train_baseline(train_set(), cfg), make_network("mlp", cfg.seed));
}

TEST(TrainBaseline, SameSeedBitIdentical) {
  const auto ds = head(train_set(), 300);
  EXPECT_EQ(train_baseline(ds, quick()), train_baseline(ds, quick()));
  auto other = quick();
  other.seed = 6;
  EXPECT_NE(train_baseline(ds, quick()), train_baseline(ds, other));
}

TEST(TrainBaseline, StepCountIsEpochsTimesBatches) {
  auto cfg = quick();
  cfg.epochs = 3;
  cfg.batch_size = 40;
  std::size_t steps = 0;
  train_baseline(head(train_set(), 130), cfg, [&](int, std::size_t, double) { ++steps; });
  EXPECT_EQ(steps, 3u * 4u);
}

TEST(TrainBaseline, RejectsAdversarialRatio) {
  EXPECT_THROW(train_baseline(train_set(), quick(0.5)), std::invalid_argument);
}

TEST(TrainBaseline, DivergenceIsReported) {
  auto cfg = quick();
  cfg.learning_rate = 1e200;
  EXPECT_THROW(train_baseline(head(train_set(), 200), cfg), TrainingError);
}

TEST(TrainBaseline, LearnsAboveChance) {
  const auto net = train_baseline(train_set(), quick());
  EXPECT_GT(evaluate_accuracy(net, test_set()), 0.8);
}

TEST(AdversarialTrain, ZeroRatioMatchesBaseline) {
  const auto ds = head(train_set(), 300);
  EXPECT_EQ(adversarial_train(ds, quick(0.0), AttackSpec::fg(0.3)), train_baseline(ds, quick()));
  EXPECT_EQ(adversarial_train(ds, quick(0.0), AttackSpec::pgd(0.3, true)), train_baseline(ds, quick()));
}

TEST(AdversarialTrain, SameSeedBitIdentical) {
  const auto ds = head(train_set(), 200);
  const auto spec = AttackSpec::pgd(0.2, true, 3);
  EXPECT_EQ(adversarial_train(ds, quick(0.5), spec), adversarial_train(ds, quick(0.5), spec));
}

TEST(AdversarialTrain, ZeroEpsilonWithPositiveRatioIsRejected) {
  EXPECT_THROW(adversarial_train(train_set(), quick(0.5), AttackSpec::fg(0.0)), std::invalid_argument);
}

TEST(AdversarialTrain, PerturbsExactlyFloorRatioTimesBatch) {
  for (double ratio : {0.35, 0.5, 1.0}) {
    auto cfg = quick(ratio);
    cfg.batch_size = 10;
    std::size_t batches_seen = 0;
    const double eps = 0.1;
    adversarial_train(head(train_set(), 95), cfg, AttackSpec::fg(eps), {}, [&](const Batch& clean, const Batch& mixed) {
      ++batches_seen;
      const std::size_t per = 784;
      std::size_t changed = 0;
      for (std::size_t s = 0; s < clean.size(); ++s) {
        bool differs = false;
        for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
          const double d = std::abs(mixed.images.data[i] - clean.images.data[i]);
          EXPECT_LE(d, eps + 1e-12);
          EXPECT_GE(mixed.images.data[i], 0.0);
          EXPECT_LE(mixed.images.data[i], 1.0);
          differs = differs || d > 0.0;
        }
        changed += differs;
      }
      EXPECT_EQ(mixed.labels, clean.labels);
      EXPECT_EQ(changed, adversarial_count(ratio, clean.size())) << "ratio " << ratio << " batch " << clean.size();
    });
    EXPECT_EQ(batches_seen, 10u);
  }
  EXPECT_EQ(adversarial_count(0.5, 7), 3u);
  EXPECT_EQ(adversarial_count(0.0, 64), 0u);
}

TEST(AdversarialTrain, FgRobustModelBeatsBaselineUnderAttack) {
  auto cfg = quick();
  cfg.epochs = 2;
  const auto base = train_baseline(train_set(), cfg);
  cfg.adversarial_ratio = 0.5;
  const auto robust = adversarial_train(train_set(), cfg, AttackSpec::fg(0.1));

  const auto attack_base = craft_adversarial_testset(base, test_set(), AttackSpec::fg(0.1));
  const auto attack_robust = craft_adversarial_testset(robust, test_set(), AttackSpec::fg(0.1));
  const double base_adv = evaluate_accuracy(base, attack_base);
  const double robust_adv = evaluate_accuracy(robust, attack_robust);
  EXPECT_GT(robust_adv, base_adv);

  const double base_clean = evaluate_accuracy(base, test_set());
  const double robust_clean = evaluate_accuracy(robust, test_set());
  EXPECT_LT(robust_clean, base_clean);
  EXPECT_GT(robust_clean, base_clean - 0.1);
}

TEST(ModelFile, SaveAndLoadRoundTrip) {
  rcti::testing::ScratchDir dir("model");
  const auto net = train_baseline(head(train_set(), 100), quick());
  save_model(net, dir / "m.rnet");
  EXPECT_EQ(load_model(dir / "m.rnet"), net);
  EXPECT_THROW(load_model(dir / "missing.rnet"), std::exception);
}
