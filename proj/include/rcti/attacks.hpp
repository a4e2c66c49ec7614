#pragma once

// White-box L-infinity evasion attacks: FGSM and PGD.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "rcti/dataset.hpp"
#include "rcti/nn.hpp"
#include "rcti/rng.hpp"

namespace rcti {

enum class AttackKind { FG, PGD };

inline std::string to_string(AttackKind k) { return k == AttackKind::FG ? "FG" : "PGD"; }

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "FG" || s == "fg" || s == "FGSM" || s == "fgsm") return AttackKind::FG;
  if (s == "PGD" || s == "pgd") return AttackKind::PGD;
  throw std::invalid_argument("unknown attack kind '" + s + "' (expected FG or PGD)");
}

struct AttackSpec {
  AttackKind kind = AttackKind::FG;
  double epsilon = 0.0;    // L-inf budget in pixel units
  double step_size = 0.0;  // PGD only
  int num_steps = 1;       // PGD only
  bool random_start = false;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  static AttackSpec fg(double eps) { return {AttackKind::FG, eps, eps, 1, false}; }

  /// PGD with the default schedule: 10 steps of eps/4.
  static AttackSpec pgd(double eps, bool random_start = false, int steps = 10) {
    return {AttackKind::PGD, eps, eps / 4.0, steps, random_start};
  }

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw std::invalid_argument("attack epsilon " + std::to_string(epsilon) + " outside [0,1]");
    if (!(clip_lo < clip_hi)) throw std::invalid_argument("attack clip range is empty");
    if (kind == AttackKind::PGD) {
      if (num_steps < 1) throw std::invalid_argument("PGD needs at least one step");
      if (!(step_size > 0.0) && epsilon > 0.0) throw std::invalid_argument("PGD step size must be positive");
    }
  }
};

/// sign with sign(0) == 0.
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// x_adv = clip(x + eps * sign(dL/dx), lo, hi).
inline Tensor fgsm(const Network& net, const Batch& batch, const AttackSpec& spec) {
  spec.validate();
  if (spec.kind != AttackKind::FG) throw std::invalid_argument("fgsm called with a PGD spec");
  if (spec.epsilon == 0.0) return batch.images;
  const auto g = loss_and_grads(net, batch, false);
  Tensor adv = batch.images;
  for (std::size_t i = 0; i < adv.size(); ++i)
    adv.data[i] = std::clamp(adv.data[i] + spec.epsilon * sign0(g.input_grads.data[i]),
                             spec.clip_lo, spec.clip_hi);
  return adv;
}

/// Iterated signed-gradient ascent, each step clipped to the pixel range and
/// projected back onto the eps-ball around the original images.
inline Tensor pgd(const Network& net, const Batch& batch, const AttackSpec& spec,
                  std::uint64_t seed = 0) {
  spec.validate();
  if (spec.kind != AttackKind::PGD) throw std::invalid_argument("pgd called with an FG spec");
  const Tensor& x0 = batch.images;
  if (spec.epsilon == 0.0) return x0;
  const double eps = spec.epsilon;

  Batch cur{x0, batch.labels};
  if (spec.random_start) {
    Rng rng(seed);
    for (double& v : cur.images.data)
      v = std::clamp(v + rng.uniform(-eps, eps), spec.clip_lo, spec.clip_hi);
  }
  for (int step = 0; step < spec.num_steps; ++step) {
    const auto g = loss_and_grads(net, cur, false);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double stepped = std::clamp(cur.images.data[i] + spec.step_size * sign0(g.input_grads.data[i]),
                                        spec.clip_lo, spec.clip_hi);
      cur.images.data[i] = std::min(std::max(stepped, x0.data[i] - eps), x0.data[i] + eps);
    }
  }
  return std::move(cur.images);
}

inline Tensor attack(const Network& net, const Batch& batch, const AttackSpec& spec,
                     std::uint64_t seed = 0) {
  return spec.kind == AttackKind::FG ? fgsm(net, batch, spec) : pgd(net, batch, spec, seed);
}

/// Replace every image with its attacked version against `net`, batch by
/// batch. Random-start noise for batch b is seeded from (seed, b).
inline LabeledDataset craft_adversarial_testset(const Network& net, const LabeledDataset& ds,
                                                const AttackSpec& spec, std::size_t batch_size = 500,
                                                std::uint64_t seed = 0) {
  spec.validate();
  LabeledDataset out = ds;
  if (spec.epsilon == 0.0) return out;
  std::size_t offset = 0, b = 0;
  for (const auto& batch : batches(ds, batch_size)) {
    const Tensor adv = attack(net, batch, spec, derive_seed(seed, b++));
    std::copy(adv.data.begin(), adv.data.end(),
              out.images.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += adv.size();
  }
  return out;
}

}  // namespace rcti
