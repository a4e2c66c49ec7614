#pragma once

// Baseline and adversarial training loops (plain SGD on mean cross-entropy).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcti/attacks.hpp"
#include "rcti/dataset.hpp"
#include "rcti/nn.hpp"
#include "rcti/rng.hpp"

namespace rcti {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  // Desk-scale defaults: enough to clear 95% clean accuracy on a 10k-or-fewer
  // MNIST subset within a few seconds.
  int epochs = 4;
  std::size_t batch_size = 8;
  double learning_rate = 0.05;
  double adversarial_ratio = 0.5;
  std::uint64_t seed = 1;
  std::string architecture = "cnn-small";

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(adversarial_ratio >= 0.0 && adversarial_ratio <= 1.0))
      throw std::invalid_argument("adversarial ratio must lie in [0,1]");
  }
};

/// Per-step progress hook: (epoch, step, loss).
using TrainObserver = std::function<void(int, std::size_t, double)>;

/// Sees each batch before and after adversarial mixing.
using BatchObserver = std::function<void(const Batch& clean, const Batch& mixed)>;

/// Number of samples replaced by adversarial versions in a batch of n.
inline std::size_t adversarial_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

namespace detail {

// Seed streams. Kept separate so a zero adversarial ratio leaves the
// initialisation and shuffle streams untouched.
inline constexpr std::uint64_t kShuffleStream = 0x5348;
inline constexpr std::uint64_t kAdversaryStream = 0x4144;

inline Network train_loop(const LabeledDataset& ds, const TrainConfig& cfg, const AttackSpec* attack,
                          const TrainObserver& observer, const BatchObserver& batch_observer = {}) {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  Network net = make_network(cfg.architecture, cfg.seed);
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  Rng adv_rng(derive_seed(cfg.seed, kAdversaryStream));
  const std::size_t per = sample_size(ds);

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    const auto epoch_batches = batches(select(ds, order), cfg.batch_size);
    for (std::size_t step = 0; step < epoch_batches.size(); ++step) {
      Batch batch = epoch_batches[step];
      const std::size_t k = attack ? adversarial_count(cfg.adversarial_ratio, batch.size()) : 0;
      if (k > 0) {
        // Partial Fisher-Yates picks which k samples get perturbed.
        std::vector<std::size_t> pick(batch.size());
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i)
          std::swap(pick[i], pick[i + adv_rng.below(pick.size() - i)]);
        pick.resize(k);

        Shape sub_shape = batch.images.shape;
        sub_shape[0] = k;
        Batch sub{Tensor(sub_shape), std::vector<int>(k)};
        for (std::size_t i = 0; i < k; ++i) {
          std::copy_n(batch.images.data.begin() + static_cast<std::ptrdiff_t>(pick[i] * per), per,
                      sub.images.data.begin() + static_cast<std::ptrdiff_t>(i * per));
          sub.labels[i] = batch.labels[pick[i]];
        }
        const Tensor adv = rcti::attack(net, sub, *attack, adv_rng.next_u64());
        for (std::size_t i = 0; i < k; ++i)
          std::copy_n(adv.data.begin() + static_cast<std::ptrdiff_t>(i * per), per,
                      batch.images.data.begin() + static_cast<std::ptrdiff_t>(pick[i] * per));
      }
      if (batch_observer) batch_observer(epoch_batches[step], batch);

      LossGrads g;
      try {
        g = loss_and_grads(net, batch);
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + ": " + e.what());
      }
      net = sgd_step(std::move(net), g.param_grads, cfg.learning_rate);
      if (observer) observer(epoch, step, g.loss);
    }
  }
  return net;
}

}  // namespace detail

/// Train without adversarial samples. Deterministic per cfg.seed.
inline Network train_baseline(const LabeledDataset& ds, const TrainConfig& cfg,
                              const TrainObserver& observer = {}) {
  if (cfg.adversarial_ratio != 0.0)
    throw std::invalid_argument("baseline training requires adversarial_ratio == 0");
  return detail::train_loop(ds, cfg, nullptr, observer);
}

/// Train with a fraction cfg.adversarial_ratio of every batch replaced by
/// attack outputs crafted against the current model.
inline Network adversarial_train(const LabeledDataset& ds, const TrainConfig& cfg,
                                 const AttackSpec& attack, const TrainObserver& observer = {},
                                 const BatchObserver& batch_observer = {}) {
  attack.validate();
  if (!(attack.epsilon > 0.0) && cfg.adversarial_ratio != 0.0)
    throw std::invalid_argument("adversarial training needs epsilon > 0 (or a zero ratio)");
  return detail::train_loop(ds, cfg, &attack, observer, batch_observer);
}

}  // namespace rcti
