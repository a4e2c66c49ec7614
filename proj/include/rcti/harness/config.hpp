#pragma once

// Run configuration: line-oriented `key = value` files with dotted sections.
//
//   # comment
//   data.train_images = data/mnist/train-images-idx3-ubyte.gz
//   attack.epsilon_grid = 0,0.1,0.2,0.3,0.4,0.5
//
// Unknown keys, malformed values and out-of-range epsilons are rejected.

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcti/attacks.hpp"
#include "rcti/energy.hpp"
#include "rcti/metrics.hpp"
#include "rcti/training.hpp"

namespace rcti {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxGridEpsilon = 0.5;

enum class RobustMode { PerEpsilon, Fixed };

struct RunConfig {
  std::string train_images = "data/mnist/train-images-idx3-ubyte.gz";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte.gz";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte.gz";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte.gz";
  std::size_t train_size = 10000;  // clamped to what the files hold
  std::size_t test_size = 2000;

  TrainConfig train;  // adversarial_ratio applies to robust models only

  AttackKind attack_kind = AttackKind::FG;
  std::vector<double> epsilon_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  double attack_epsilon = 0.1;            // single-point subcommands
  int pgd_steps = 10;
  std::optional<double> pgd_step_size;    // unset: epsilon / 4
  bool eval_random_start = false;
  bool train_random_start = true;

  HardwareProfile hardware;
  double sample_interval_s = 0.1;
  std::string utilization = "process";    // process | constant

  RctiThresholds thresholds;
  CarbonBasis carbon_basis = CarbonBasis::Energy;

  std::uint64_t seed = 1;
  std::string output_dir = "rcti-out";
  bool include_training_energy = false;
  RobustMode robust_mode = RobustMode::PerEpsilon;
  double fixed_epsilon = 0.3;
  std::size_t eval_batch_size = 500;

  TrainConfig baseline_train_config() const {
    TrainConfig c = train;
    c.seed = seed;
    c.adversarial_ratio = 0.0;
    return c;
  }

  TrainConfig robust_train_config() const {
    TrainConfig c = train;
    c.seed = seed;
    return c;
  }

  AttackSpec attack_spec(double eps, bool for_training) const {
    AttackSpec s;
    s.kind = attack_kind;
    s.epsilon = eps;
    if (attack_kind == AttackKind::FG) {
      s.step_size = eps;
      s.num_steps = 1;
      s.random_start = false;
    } else {
      s.step_size = pgd_step_size ? *pgd_step_size : eps / 4.0;
      s.num_steps = pgd_steps;
      s.random_start = for_training ? train_random_start : eval_random_start;
    }
    return s;
  }

  TrackerOptions tracker_options() const {
    TrackerOptions o;
    o.sample_interval_s = sample_interval_s;
    o.probe = utilization == "constant" ? constant_probe(1.0) : process_cpu_probe();
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out{};
  const auto t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out{};
  const auto t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline double positive(const std::string& key, double v) {
  if (!(v > 0.0)) throw ConfigError(key + ": must be positive");
  return v;
}

inline double grid_epsilon(const std::string& key, double v) {
  if (!(v >= 0.0 && v <= kMaxGridEpsilon))
    throw ConfigError(key + ": epsilon " + trim(std::to_string(v)) + " outside [0, 0.5]");
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double host_ram_gb() {
  const long pages = sysconf(_SC_PHYS_PAGES);
  const long page = sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page <= 0) return 8.0;
  return static_cast<double>(pages) * static_cast<double>(page) / (1024.0 * 1024.0 * 1024.0);
}

}  // namespace detail

struct ConfigKey {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  using C = RunConfig;
  using S = const std::string&;
  static const std::vector<ConfigKey> keys = {
      {"data.train_images", "training images IDX file (.gz ok)", [](C& c, S v) { c.train_images = trim(v); },
       [](const C& c) { return c.train_images; }},
      {"data.train_labels", "training labels IDX file", [](C& c, S v) { c.train_labels = trim(v); },
       [](const C& c) { return c.train_labels; }},
      {"data.test_images", "test images IDX file", [](C& c, S v) { c.test_images = trim(v); },
       [](const C& c) { return c.test_images; }},
      {"data.test_labels", "test labels IDX file", [](C& c, S v) { c.test_labels = trim(v); },
       [](const C& c) { return c.test_labels; }},
      {"data.train_size", "training subset size (clamped to the file)",
       [](C& c, S v) { c.train_size = parse_uint("data.train_size", v); },
       [](const C& c) { return std::to_string(c.train_size); }},
      {"data.test_size", "test subset size (clamped to the file)",
       [](C& c, S v) { c.test_size = parse_uint("data.test_size", v); },
       [](const C& c) { return std::to_string(c.test_size); }},
      {"model.architecture", "mlp | cnn-small",
       [](C& c, S v) {
         const auto a = trim(v);
         const auto& presets = architecture_presets();
         if (std::find(presets.begin(), presets.end(), a) == presets.end())
           throw ConfigError("model.architecture: unknown preset '" + a + "'");
         c.train.architecture = a;
       },
       [](const C& c) { return c.train.architecture; }},
      {"train.epochs", "training epochs", [](C& c, S v) { c.train.epochs = static_cast<int>(parse_uint("train.epochs", v)); },
       [](const C& c) { return std::to_string(c.train.epochs); }},
      {"train.batch_size", "SGD batch size",
       [](C& c, S v) {
         c.train.batch_size = parse_uint("train.batch_size", v);
         if (c.train.batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
       },
       [](const C& c) { return std::to_string(c.train.batch_size); }},
      {"train.learning_rate", "SGD learning rate",
       [](C& c, S v) { c.train.learning_rate = positive("train.learning_rate", parse_double("train.learning_rate", v)); },
       [](const C& c) { return format_number(c.train.learning_rate); }},
      {"train.adversarial_ratio", "fraction of each robust-training batch replaced by attack outputs",
       [](C& c, S v) {
         const double r = parse_double("train.adversarial_ratio", v);
         if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("train.adversarial_ratio: must lie in [0,1]");
         c.train.adversarial_ratio = r;
       },
       [](const C& c) { return format_number(c.train.adversarial_ratio); }},
      {"attack.kind", "FG | PGD",
       [](C& c, S v) {
         try {
           c.attack_kind = parse_attack_kind(trim(v));
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("attack.kind: ") + e.what());
         }
       },
       [](const C& c) { return to_string(c.attack_kind); }},
      {"attack.epsilon_grid", "ascending comma list in [0, 0.5]",
       [](C& c, S v) {
         std::vector<double> grid;
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ','))
           grid.push_back(grid_epsilon("attack.epsilon_grid", parse_double("attack.epsilon_grid", item)));
         if (grid.empty()) throw ConfigError("attack.epsilon_grid: empty");
         for (std::size_t i = 1; i < grid.size(); ++i)
           if (!(grid[i] > grid[i - 1])) throw ConfigError("attack.epsilon_grid: must be strictly ascending");
         c.epsilon_grid = std::move(grid);
       },
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.epsilon_grid.size(); ++i) s += (i ? "," : "") + format_number(c.epsilon_grid[i]);
         return s;
       }},
      {"attack.epsilon", "epsilon for train-robust / attack-eval",
       [](C& c, S v) { c.attack_epsilon = grid_epsilon("attack.epsilon", parse_double("attack.epsilon", v)); },
       [](const C& c) { return format_number(c.attack_epsilon); }},
      {"attack.steps", "PGD iterations",
       [](C& c, S v) {
         const auto s = parse_uint("attack.steps", v);
         if (s == 0) throw ConfigError("attack.steps: must be >= 1");
         c.pgd_steps = static_cast<int>(s);
       },
       [](const C& c) { return std::to_string(c.pgd_steps); }},
      {"attack.step_size", "PGD step size, or 'auto' for epsilon/4",
       [](C& c, S v) {
         if (trim(v) == "auto") c.pgd_step_size.reset();
         else c.pgd_step_size = positive("attack.step_size", parse_double("attack.step_size", v));
       },
       [](const C& c) { return c.pgd_step_size ? format_number(*c.pgd_step_size) : std::string("auto"); }},
      {"attack.random_start", "PGD random start when evaluating",
       [](C& c, S v) { c.eval_random_start = parse_bool("attack.random_start", v); },
       [](const C& c) { return std::string(c.eval_random_start ? "true" : "false"); }},
      {"attack.train_random_start", "PGD random start during adversarial training",
       [](C& c, S v) { c.train_random_start = parse_bool("attack.train_random_start", v); },
       [](const C& c) { return std::string(c.train_random_start ? "true" : "false"); }},
      {"hardware.cpu_power_w", "CPU power at full utilisation (W)",
       [](C& c, S v) { c.hardware.cpu_power_w = positive("hardware.cpu_power_w", parse_double("hardware.cpu_power_w", v)); },
       [](const C& c) { return format_number(c.hardware.cpu_power_w); }},
      {"hardware.ram_gb", "metered RAM size (GB; default: host RAM)",
       [](C& c, S v) { c.hardware.ram_gb = positive("hardware.ram_gb", parse_double("hardware.ram_gb", v)); },
       [](const C& c) { return format_number(c.hardware.ram_gb); }},
      {"hardware.ram_w_per_gb", "RAM power per GB (W)",
       [](C& c, S v) { c.hardware.ram_w_per_gb = positive("hardware.ram_w_per_gb", parse_double("hardware.ram_w_per_gb", v)); },
       [](const C& c) { return format_number(c.hardware.ram_w_per_gb); }},
      {"hardware.carbon_intensity_g_per_kwh", "grid carbon intensity (gCO2/kWh)",
       [](C& c, S v) {
         c.hardware.carbon_intensity_g_per_kwh =
             positive("hardware.carbon_intensity_g_per_kwh", parse_double("hardware.carbon_intensity_g_per_kwh", v));
       },
       [](const C& c) { return format_number(c.hardware.carbon_intensity_g_per_kwh); }},
      {"hardware.sample_interval_ms", "utilisation sampling interval (ms)",
       [](C& c, S v) { c.sample_interval_s = positive("hardware.sample_interval_ms", parse_double("hardware.sample_interval_ms", v)) / 1000.0; },
       [](const C& c) { return format_number(c.sample_interval_s * 1000.0); }},
      {"hardware.utilization", "process | constant (1.0)",
       [](C& c, S v) {
         const auto u = trim(v);
         if (u != "process" && u != "constant") throw ConfigError("hardware.utilization: expected process or constant");
         c.utilization = u;
       },
       [](const C& c) { return c.utilization; }},
      {"rcti.critical_threshold", "RCTI above this is Eco-Critical",
       [](C& c, S v) {
         c.thresholds.critical = parse_double("rcti.critical_threshold", v);
         if (!(c.thresholds.critical > 1.0)) throw ConfigError("rcti.critical_threshold: must exceed 1");
       },
       [](const C& c) { return format_number(c.thresholds.critical); }},
      {"rcti.tolerance", "equality band for Eco-Neutral / Eco-Ideal",
       [](C& c, S v) {
         c.thresholds.tolerance = parse_double("rcti.tolerance", v);
         if (!(c.thresholds.tolerance >= 0.0 && c.thresholds.tolerance < 0.5))
           throw ConfigError("rcti.tolerance: must lie in [0, 0.5)");
       },
       [](const C& c) { return format_number(c.thresholds.tolerance); }},
      {"rcti.carbon_basis", "energy (total kWh) | emissions (g)",
       [](C& c, S v) {
         const auto b = trim(v);
         if (b == "energy") c.carbon_basis = CarbonBasis::Energy;
         else if (b == "emissions") c.carbon_basis = CarbonBasis::Emissions;
         else throw ConfigError("rcti.carbon_basis: expected energy or emissions");
       },
       [](const C& c) { return to_string(c.carbon_basis); }},
      {"run.seed", "seed for init, shuffling, subsets and attacks",
       [](C& c, S v) { c.seed = parse_uint("run.seed", v); }, [](const C& c) { return std::to_string(c.seed); }},
      {"run.output_dir", "output directory", [](C& c, S v) { c.output_dir = trim(v); },
       [](const C& c) { return c.output_dir; }},
      {"run.include_training_energy", "add training spans to each row's carbon",
       [](C& c, S v) { c.include_training_energy = parse_bool("run.include_training_energy", v); },
       [](const C& c) { return std::string(c.include_training_energy ? "true" : "false"); }},
      {"run.robust_mode", "per-epsilon (one robust model per grid point) | fixed",
       [](C& c, S v) {
         const auto m = trim(v);
         if (m == "per-epsilon") c.robust_mode = RobustMode::PerEpsilon;
         else if (m == "fixed") c.robust_mode = RobustMode::Fixed;
         else throw ConfigError("run.robust_mode: expected per-epsilon or fixed");
       },
       [](const C& c) { return std::string(c.robust_mode == RobustMode::Fixed ? "fixed" : "per-epsilon"); }},
      {"run.fixed_epsilon", "training epsilon of the single robust model in fixed mode",
       [](C& c, S v) {
         c.fixed_epsilon = grid_epsilon("run.fixed_epsilon", parse_double("run.fixed_epsilon", v));
         if (c.fixed_epsilon == 0.0) throw ConfigError("run.fixed_epsilon: must be positive");
       },
       [](const C& c) { return format_number(c.fixed_epsilon); }},
      {"run.eval_batch_size", "batch size for attack crafting and evaluation",
       [](C& c, S v) {
         c.eval_batch_size = parse_uint("run.eval_batch_size", v);
         if (c.eval_batch_size == 0) throw ConfigError("run.eval_batch_size: must be >= 1");
       },
       [](const C& c) { return std::to_string(c.eval_batch_size); }},
  };
  return keys;
}

/// Defaults, with the metered RAM size taken from the host.
inline RunConfig default_config() {
  RunConfig c;
  c.hardware.ram_gb = detail::host_ram_gb();
  return c;
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.key == key) return k.set(cfg, value);
  throw ConfigError("unknown config key '" + key + "'");
}

/// Apply "key=value" (CLI override form).
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_setting(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg = default_config();
  apply_config_text(cfg, in, path.string());
  return cfg;
}

/// Every key with its current value, in declaration order.
inline std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.key, k.get(cfg));
  return out;
}

inline std::string config_help() {
  const RunConfig defaults = default_config();
  std::ostringstream os;
  os << "Config keys (key = value; defaults shown):\n";
  for (const auto& k : config_keys())
    os << "  " << k.key << " = " << k.get(defaults) << "\n      " << k.help << "\n";
  return os.str();
}

}  // namespace rcti
