#pragma once

// Power-model energy metering for labelled pipeline spans.
//
// CPU energy integrates cpu_power_w * utilization over sampled intervals
// (rectangle rule); RAM energy is ram_gb * ram_w_per_gb * duration.
// Emissions are carbon intensity (g/kWh) times total energy (kWh).

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace rcti {

inline constexpr double kJoulesPerKwh = 3.6e6;

struct HardwareProfile {
  double cpu_power_w = 42.5;  // half of an 85 W TDP
  double ram_gb = 8.0;
  double ram_w_per_gb = 0.375;  // 3 W per 8 GB
  double carbon_intensity_g_per_kwh = 475.0;

  void validate() const {
    if (!(cpu_power_w > 0 && ram_gb > 0 && ram_w_per_gb > 0 && carbon_intensity_g_per_kwh > 0))
      throw std::invalid_argument("hardware profile fields must all be strictly positive");
  }
};

struct EnergyReport {
  std::string label;
  double duration_s = 0.0;
  double cpu_energy_kwh = 0.0;
  double ram_energy_kwh = 0.0;
  double total_energy_kwh = 0.0;
  double emissions_g = 0.0;
  std::size_t samples = 0;
};

/// Emissions in grams CO2 for `energy_kwh` at `carbon_intensity_g_per_kwh`.
inline double compute_emissions(double energy_kwh, double carbon_intensity_g_per_kwh) {
  if (energy_kwh < 0.0 || carbon_intensity_g_per_kwh < 0.0)
    throw std::invalid_argument("emissions need non-negative energy and intensity");
  return carbon_intensity_g_per_kwh * energy_kwh;
}

/// Utilisation observed over (previous sample time, t_s].
struct UtilizationSample {
  double t_s = 0.0;
  double utilization = 0.0;
};

/// Closed-form report for a span that started at `start_s` and whose samples
/// end at the span's stop time.
inline EnergyReport integrate_energy(std::string label, const HardwareProfile& profile,
                                     double start_s, const std::vector<UtilizationSample>& samples) {
  EnergyReport r;
  r.label = std::move(label);
  r.samples = samples.size();
  double prev = start_s, cpu_joules = 0.0;
  for (const auto& s : samples) {
    const double dt = s.t_s - prev;
    if (dt > 0.0) cpu_joules += profile.cpu_power_w * s.utilization * dt;
    prev = std::max(prev, s.t_s);
  }
  r.duration_s = prev - start_s;
  r.cpu_energy_kwh = cpu_joules / kJoulesPerKwh;
  r.ram_energy_kwh = profile.ram_gb * profile.ram_w_per_gb * r.duration_s / kJoulesPerKwh;
  r.total_energy_kwh = r.cpu_energy_kwh + r.ram_energy_kwh;
  r.emissions_g = compute_emissions(r.total_energy_kwh, profile.carbon_intensity_g_per_kwh);
  return r;
}

class UtilizationProbe {
 public:
  virtual ~UtilizationProbe() = default;
  /// Mean CPU utilisation in [0,1] since the previous call (or construction).
  virtual double fraction(double wall_dt_s) = 0;
};

class ConstantUtilization final : public UtilizationProbe {
 public:
  explicit ConstantUtilization(double value = 1.0) : value_(value) {}
  double fraction(double) override { return value_; }

 private:
  double value_;
};

/// Process CPU time over wall time, normalised by the number of hardware threads.
class ProcessCpuUtilization final : public UtilizationProbe {
 public:
  ProcessCpuUtilization()
      : cores_(std::max(1u, std::thread::hardware_concurrency())), last_(cpu_seconds()) {}

  double fraction(double wall_dt_s) override {
    const double now = cpu_seconds();
    const double used = now - last_;
    last_ = now;
    if (!(wall_dt_s > 0.0)) return 0.0;
    return std::clamp(used / (wall_dt_s * cores_), 0.0, 1.0);
  }

 private:
  static double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }
  unsigned cores_;
  double last_;
};

using ProbeFactory = std::function<std::unique_ptr<UtilizationProbe>()>;
using TimeSource = std::function<double()>;

inline TimeSource steady_time_source() {
  return [] {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
  };
}

inline ProbeFactory constant_probe(double value = 1.0) {
  return [value] { return std::make_unique<ConstantUtilization>(value); };
}

inline ProbeFactory process_cpu_probe() {
  return [] { return std::make_unique<ProcessCpuUtilization>(); };
}

struct TrackerOptions {
  double sample_interval_s = 0.1;  // <= 0 disables the background sampler
  ProbeFactory probe = process_cpu_probe();
  TimeSource clock = steady_time_source();
};

class EnergyTracker {
 public:
  struct SpanHandle {
    std::uint64_t id = 0;
    std::string label;
  };

  explicit EnergyTracker(TrackerOptions options = {}) : options_(std::move(options)) {}

  EnergyTracker(const EnergyTracker&) = delete;
  EnergyTracker& operator=(const EnergyTracker&) = delete;

  ~EnergyTracker() {
    std::lock_guard lock(mutex_);
    for (auto& [id, span] : open_) span->sampler.request_stop();
  }

  SpanHandle start_span(const std::string& label, const HardwareProfile& profile) {
    profile.validate();
    std::lock_guard lock(mutex_);
    for (const auto& [id, span] : open_)
      if (span->label == label) throw std::logic_error("span '" + label + "' is already open");
    auto span = std::make_unique<Span>();
    span->label = label;
    span->profile = profile;
    span->probe = options_.probe ? options_.probe() : std::make_unique<ConstantUtilization>(1.0);
    span->start_s = span->last_s = options_.clock();
    if (options_.sample_interval_s > 0.0) {
      Span* s = span.get();
      const auto interval = std::chrono::duration<double>(options_.sample_interval_s);
      s->sampler = std::jthread([this, s, interval](std::stop_token stop) {
        std::unique_lock lk(s->mutex);
        for (;;) {
          s->cv.wait_for(lk, stop, interval, [] { return false; });
          if (stop.stop_requested()) break;
          take_sample(*s);
        }
      });
    }
    const std::uint64_t id = ++next_id_;
    open_.emplace(id, std::move(span));
    return {id, label};
  }

  EnergyReport stop_span(const SpanHandle& handle) {
    std::unique_ptr<Span> span;
    {
      std::lock_guard lock(mutex_);
      auto it = open_.find(handle.id);
      if (it == open_.end())
        throw std::logic_error("span '" + handle.label + "' is not open (already stopped?)");
      span = std::move(it->second);
      open_.erase(it);
    }
    span->sampler.request_stop();
    if (span->sampler.joinable()) span->sampler.join();
    take_sample(*span);
    auto report = integrate_energy(span->label, span->profile, span->start_s, span->samples);
    std::lock_guard lock(mutex_);
    reports_.push_back(report);
    return report;
  }

  /// Run `work` inside a span; returns the span's report.
  template <typename F>
  EnergyReport measure(const std::string& label, const HardwareProfile& profile, F&& work) {
    const auto handle = start_span(label, profile);
    try {
      std::forward<F>(work)();
    } catch (...) {
      stop_span(handle);
      throw;
    }
    return stop_span(handle);
  }

  std::vector<EnergyReport> reports() const {
    std::lock_guard lock(mutex_);
    return reports_;
  }

 private:
  struct Span {
    std::string label;
    HardwareProfile profile;
    std::unique_ptr<UtilizationProbe> probe;
    double start_s = 0.0, last_s = 0.0;
    std::vector<UtilizationSample> samples;
    std::mutex mutex;
    std::condition_variable_any cv;
    std::jthread sampler;
  };

  // Caller either holds span.mutex or has joined the sampler.
  void take_sample(Span& span) {
    const double now = options_.clock();
    const double dt = now - span.last_s;
    span.samples.push_back({now, span.probe->fraction(dt)});
    span.last_s = now;
  }

  TrackerOptions options_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::unique_ptr<Span>> open_;
  std::vector<EnergyReport> reports_;
  std::uint64_t next_id_ = 0;
};

}  // namespace rcti
