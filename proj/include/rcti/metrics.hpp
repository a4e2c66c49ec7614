#pragma once

// Robustness-Carbon Trade-off Index.
//
//   delta_r = (P_i - P_base) / P_base          relative robustness
//   delta_c = (C_i - C_base) / C_base          relative carbon
//   rcti    = |delta_c / delta_r|
//
// plus the five-band elasticity classification.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcti {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// A relative quantity that may be +inf (zero base, positive numerator) or
/// undefined (0/0, flagged as no-change).
struct Ratio {
  double value = 0.0;
  bool no_change = false;

  static Ratio finite(double v) { return {v, false}; }
  static Ratio infinite() { return {kInfinity, false}; }
  static Ratio undefined() { return {0.0, true}; }

  bool is_infinite() const { return !no_change && std::isinf(value); }

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

enum class Elasticity { EcoCritical, EcoCostly, EcoNeutral, EcoEfficient, EcoIdeal };

inline std::string to_string(Elasticity e) {
  switch (e) {
    case Elasticity::EcoCritical: return "Eco-Critical";
    case Elasticity::EcoCostly: return "Eco-Costly";
    case Elasticity::EcoNeutral: return "Eco-Neutral";
    case Elasticity::EcoEfficient: return "Eco-Efficient";
    case Elasticity::EcoIdeal: return "Eco-Ideal";
  }
  return "?";
}

inline Elasticity parse_elasticity(const std::string& s) {
  for (auto e : {Elasticity::EcoCritical, Elasticity::EcoCostly, Elasticity::EcoNeutral,
                 Elasticity::EcoEfficient, Elasticity::EcoIdeal})
    if (to_string(e) == s) return e;
  throw std::invalid_argument("unknown elasticity class '" + s + "'");
}

struct RctiThresholds {
  double critical = 100.0;   // rcti above this is Eco-Critical
  double tolerance = 1e-6;   // equality band for Eco-Neutral (=1) and Eco-Ideal (=0)

  void validate() const {
    if (!(critical > 1.0)) throw std::invalid_argument("critical threshold must exceed 1");
    if (!(tolerance >= 0.0 && tolerance < 0.5)) throw std::invalid_argument("tolerance must lie in [0, 0.5)");
  }
};

inline Ratio compute_robustness(double p_i, double p_base) {
  if (p_i < 0.0 || p_base < 0.0) throw std::invalid_argument("performance must be non-negative");
  if (p_base == 0.0) return p_i > 0.0 ? Ratio::infinite() : Ratio::undefined();
  return Ratio::finite((p_i - p_base) / p_base);
}

inline double compute_carbon_delta(double c_i, double c_base) {
  if (c_i < 0.0 || c_base < 0.0) throw std::invalid_argument("carbon must be non-negative");
  if (c_base == 0.0) throw std::invalid_argument("baseline carbon must be positive");
  return (c_i - c_base) / c_base;
}

/// |delta_c / delta_r|. An infinite delta_r yields +inf (the index is reported
/// as unbounded whenever robustness is unbounded). A zero or undefined
/// delta_r with non-zero delta_c yields +inf; both zero is no-change.
inline Ratio compute_rcti(double delta_c, Ratio delta_r) {
  if (delta_r.is_infinite()) return Ratio::infinite();
  const double dr = delta_r.no_change ? 0.0 : delta_r.value;
  if (dr == 0.0) return delta_c == 0.0 ? Ratio::undefined() : Ratio::infinite();
  return Ratio::finite(std::abs(delta_c / dr));
}

inline Elasticity classify_elasticity(double rcti, const RctiThresholds& t = {}) {
  if (std::isnan(rcti) || rcti < 0.0) throw std::invalid_argument("rcti must be non-negative");
  if (std::isinf(rcti) || rcti > t.critical) return Elasticity::EcoCritical;
  if (rcti <= t.tolerance) return Elasticity::EcoIdeal;
  if (std::abs(rcti - 1.0) <= t.tolerance) return Elasticity::EcoNeutral;
  if (rcti > 1.0) return Elasticity::EcoCostly;
  return Elasticity::EcoEfficient;
}

/// A no-change index (nothing moved) sits on the balanced band.
inline Elasticity classify_elasticity(Ratio rcti, const RctiThresholds& t = {}) {
  if (rcti.no_change) return Elasticity::EcoNeutral;
  return classify_elasticity(rcti.value, t);
}

enum class CarbonBasis { Energy, Emissions };

inline std::string to_string(CarbonBasis b) { return b == CarbonBasis::Energy ? "energy" : "emissions"; }

struct ModelMeasurement {
  double epsilon = 0.0;
  double performance = 0.0;  // accuracy in [0,1]
  double carbon = 0.0;       // kWh or grams, per `basis`
  CarbonBasis basis = CarbonBasis::Energy;
  std::string span_set;      // which spans were summed into `carbon`
};

struct RctiRecord {
  double epsilon = 0.0;
  Ratio delta_r;
  double delta_c = 0.0;
  Ratio rcti;
  Elasticity elasticity = Elasticity::EcoNeutral;

  /// 0/0 robustness and zero carbon change: nothing to trade.
  bool no_change() const { return rcti.no_change; }

  friend bool operator==(const RctiRecord&, const RctiRecord&) = default;
};

inline RctiRecord score(const ModelMeasurement& base, const ModelMeasurement& model,
                        const RctiThresholds& t = {}) {
  if (base.basis != model.basis || base.span_set != model.span_set)
    throw std::invalid_argument("measurements use different carbon bases or span sets");
  RctiRecord r;
  r.epsilon = model.epsilon;
  r.delta_r = compute_robustness(model.performance, base.performance);
  r.delta_c = compute_carbon_delta(model.carbon, base.carbon);
  r.rcti = compute_rcti(r.delta_c, r.delta_r);
  r.elasticity = classify_elasticity(r.rcti, t);
  return r;
}

/// One record per model against a common baseline, in input order.
inline std::vector<RctiRecord> run_rcti_sweep(const ModelMeasurement& baseline,
                                              std::span<const ModelMeasurement> models,
                                              const RctiThresholds& t = {}) {
  t.validate();
  if (models.empty()) throw std::invalid_argument("RCTI sweep needs at least one model");
  std::vector<RctiRecord> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(score(baseline, m, t));
  return out;
}

struct MeasurementPair {
  ModelMeasurement baseline;
  ModelMeasurement robust;
};

/// Sweep where each robust model has its own baseline (e.g. the baseline
/// evaluated under the same attack strength).
inline std::vector<RctiRecord> run_rcti_sweep(std::span<const MeasurementPair> pairs,
                                              const RctiThresholds& t = {}) {
  t.validate();
  if (pairs.empty()) throw std::invalid_argument("RCTI sweep needs at least one model");
  const auto basis = pairs.front().baseline.basis;
  const auto& spans = pairs.front().baseline.span_set;
  std::vector<RctiRecord> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.baseline.basis != basis || p.baseline.span_set != spans)
      throw std::invalid_argument("measurements use different carbon bases or span sets");
    out.push_back(score(p.baseline, p.robust, t));
  }
  return out;
}

}  // namespace rcti
