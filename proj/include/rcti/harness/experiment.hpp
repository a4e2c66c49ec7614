#pragma once

// End-to-end sweep: train the baseline once, train a robust model per
// epsilon, attack both families over the grid under metered spans, and
// score every robust row against the baseline row at the same epsilon.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcti/attacks.hpp"
#include "rcti/dataset.hpp"
#include "rcti/energy.hpp"
#include "rcti/harness/config.hpp"
#include "rcti/harness/tables.hpp"
#include "rcti/metrics.hpp"
#include "rcti/model_io.hpp"
#include "rcti/training.hpp"
#include "rcti/version.hpp"

namespace rcti {

/// Failure tagged with the pipeline stage it happened in.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::string tool_version = kVersion;
  std::string status = "running";  // running | ok | failed
  std::string failed_stage;
  std::string error;
  std::string started_at, finished_at;
  std::vector<std::string> notes;
  std::vector<EnergyReport> spans;
  std::map<std::string, std::string> models;  // name -> path
  std::map<std::string, std::string> results; // name -> path
  std::vector<StatsRow> stats;
  std::vector<ScoredRecord> rcti;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline nlohmann::json to_json(const EnergyReport& r) {
  return {{"label", r.label},
          {"duration_s", r.duration_s},
          {"cpu_kwh", r.cpu_energy_kwh},
          {"ram_kwh", r.ram_energy_kwh},
          {"total_kwh", r.total_energy_kwh},
          {"emissions_g", r.emissions_g},
          {"samples", r.samples}};
}

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["status"] = m.status;
  if (!m.failed_stage.empty()) j["failed_stage"] = m.failed_stage;
  if (!m.error.empty()) j["error"] = m.error;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["config"] = nlohmann::json::object();
  for (const auto& [k, v] : m.config) j["config"][k] = v;
  j["notes"] = m.notes;
  j["spans"] = nlohmann::json::array();
  for (const auto& s : m.spans) j["spans"].push_back(to_json(s));
  j["models"] = m.models;
  j["results"] = m.results;
  j["stats"] = nlohmann::json::array();
  for (const auto& r : m.stats)
    j["stats"].push_back({{"attack", r.attack},
                          {"model", r.model},
                          {"epsilon", r.epsilon},
                          {"accuracy", r.accuracy},
                          {"total_kwh", r.total_kwh},
                          {"emissions_g", r.emissions_g},
                          {"spans", r.spans}});
  // Ratios use the CSV tokens so inf / nochange survive JSON.
  j["rcti"] = nlohmann::json::array();
  for (const auto& s : m.rcti)
    j["rcti"].push_back({{"attack", s.attack},
                         {"epsilon", s.record.epsilon},
                         {"delta_r", format_ratio(s.record.delta_r)},
                         {"delta_c", format_double(s.record.delta_c)},
                         {"rcti", format_ratio(s.record.rcti)},
                         {"elasticity", to_string(s.record.elasticity)}});
  return j;
}

/// Parse the rcti array of a manifest back into records.
inline std::vector<ScoredRecord> manifest_rcti(const nlohmann::json& j) {
  std::vector<ScoredRecord> out;
  for (const auto& e : j.at("rcti")) {
    ScoredRecord s;
    s.attack = e.at("attack").get<std::string>();
    s.record.epsilon = e.at("epsilon").get<double>();
    s.record.delta_r = parse_ratio(e.at("delta_r").get<std::string>(), "manifest delta_r");
    s.record.delta_c = parse_number(e.at("delta_c").get<std::string>(), "manifest delta_c");
    s.record.rcti = parse_ratio(e.at("rcti").get<std::string>(), "manifest rcti");
    s.record.elasticity = parse_elasticity(e.at("elasticity").get<std::string>());
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string epsilon_tag(double eps) { return "eps=" + format_double(eps); }

inline std::string model_file_name(const std::string& family, std::optional<double> eps) {
  return eps ? family + "_eps" + format_double(*eps) + ".rnet" : family + ".rnet";
}

struct LoadedData {
  LabeledDataset train, test;
};

inline LoadedData load_run_data(const RunConfig& cfg, std::vector<std::string>* notes = nullptr) {
  auto clamp_subset = [&](const LabeledDataset& full, std::size_t want, std::uint64_t seed, const char* what) {
    std::size_t n = want;
    if (n == 0 || n > full.size()) {
      if (notes)
        notes->push_back(std::string(what) + " size " + std::to_string(want) + " clamped to " +
                         std::to_string(full.size()) + " available samples");
      n = full.size();
    }
    return subset(full, n, seed);
  };
  LoadedData d;
  d.train = clamp_subset(load_idx(cfg.train_images, cfg.train_labels), cfg.train_size,
                         derive_seed(cfg.seed, 0x7261), "train");
  d.test = clamp_subset(load_idx(cfg.test_images, cfg.test_labels), cfg.test_size,
                        derive_seed(cfg.seed, 0x7465), "test");
  return d;
}

namespace detail {

class ExperimentRunner {
 public:
  ExperimentRunner(const RunConfig& cfg, std::ostream& log)
      : cfg_(cfg), log_(log), out_(cfg.output_dir), tracker_(cfg.tracker_options()) {}

  RunManifest run() {
    manifest_.config = config_snapshot(cfg_);
    manifest_.started_at = utc_timestamp();
    std::filesystem::create_directories(out_ / "models");
    std::filesystem::create_directories(out_ / "figures");
    try {
      execute();
      manifest_.status = "ok";
    } catch (const StageError& e) {
      fail(e.stage(), e.what());
      throw;
    } catch (const std::exception& e) {
      fail(stage_, e.what());
      throw StageError(stage_, e.what());
    }
    finish();
    return manifest_;
  }

 private:
  void execute() {
    stage_ = "validate-config";
    cfg_.hardware.validate();
    cfg_.thresholds.validate();
    cfg_.train.validate();

    stage_ = "load-data";
    data_ = load_run_data(cfg_, &manifest_.notes);
    log_ << "data: " << data_.train.size() << " train / " << data_.test.size() << " test samples\n";

    stage_ = "train-baseline";
    const auto base_train = meter("train/baseline", [&] {
      baseline_ = train_baseline(data_.train, cfg_.baseline_train_config());
    });
    save("baseline", baseline_, std::nullopt);

    const std::string attack = to_string(cfg_.attack_kind);
    for (double eps : cfg_.epsilon_grid) {
      stage_ = "evaluate-baseline " + epsilon_tag(eps);
      auto row = evaluate("baseline", baseline_, eps);
      if (cfg_.include_training_energy) add_span(row, base_train);
      log_ << attack << " baseline " << epsilon_tag(eps) << " accuracy " << row.accuracy << "\n";
      manifest_.stats.push_back(std::move(row));
    }

    std::vector<double> train_eps;
    if (cfg_.robust_mode == RobustMode::Fixed) {
      train_eps.push_back(cfg_.fixed_epsilon);
    } else {
      for (double eps : cfg_.epsilon_grid)
        if (eps > 0.0) train_eps.push_back(eps);
    }
    if (train_eps.empty()) {
      manifest_.notes.push_back("no positive epsilon in the grid: robust family is empty");
      return;
    }

    std::map<double, std::pair<Network, EnergyReport>> robust;
    for (double eps : train_eps) {
      stage_ = "train-robust " + epsilon_tag(eps);
      Network net;
      const auto report = meter("train/robust/" + epsilon_tag(eps), [&] {
        net = adversarial_train(data_.train, cfg_.robust_train_config(), cfg_.attack_spec(eps, true));
      });
      save("robust", net, eps);
      robust.emplace(eps, std::make_pair(std::move(net), report));
    }

    for (double eps : cfg_.epsilon_grid) {
      // Clean row and fixed mode use the first trained robust model.
      const auto it = cfg_.robust_mode == RobustMode::PerEpsilon && eps > 0.0 ? robust.find(eps) : robust.begin();
      stage_ = "evaluate-robust " + epsilon_tag(eps);
      auto row = evaluate("robust", it->second.first, eps);
      if (cfg_.include_training_energy) add_span(row, it->second.second);
      log_ << attack << " robust " << epsilon_tag(eps) << " accuracy " << row.accuracy << "\n";
      manifest_.stats.push_back(std::move(row));
    }

    stage_ = "score";
    manifest_.rcti = score_stats(manifest_.stats, cfg_.carbon_basis, cfg_.thresholds);
  }

  template <typename F>
  EnergyReport meter(const std::string& label, F&& work) {
    auto report = tracker_.measure(label, cfg_.hardware, std::forward<F>(work));
    manifest_.spans.push_back(report);
    return report;
  }

  static void add_span(StatsRow& row, const EnergyReport& r) {
    row.spans.push_back(r.label);
    row.cpu_kwh += r.cpu_energy_kwh;
    row.ram_kwh += r.ram_energy_kwh;
    row.total_kwh += r.total_energy_kwh;
    row.duration_s += r.duration_s;
    row.emissions_g += r.emissions_g;
  }

  StatsRow evaluate(const std::string& family, const Network& net, double eps) {
    StatsRow row;
    row.attack = to_string(cfg_.attack_kind);
    row.model = family;
    row.epsilon = eps;
    const std::string tag = family + "/" + epsilon_tag(eps);
    const LabeledDataset* eval_set = &data_.test;
    LabeledDataset adversarial;
    if (eps > 0.0) {
      add_span(row, meter("attack/" + tag, [&] {
        adversarial = craft_adversarial_testset(net, data_.test, cfg_.attack_spec(eps, false), cfg_.eval_batch_size,
                                                derive_seed(cfg_.seed, 0x6576));
      }));
      eval_set = &adversarial;
    }
    add_span(row, meter("eval/" + tag, [&] { row.accuracy = evaluate_accuracy(net, *eval_set, cfg_.eval_batch_size); }));
    return row;
  }

  void save(const std::string& family, const Network& net, std::optional<double> eps) {
    const auto path = out_ / "models" / model_file_name(family, eps);
    save_model(net, path);
    manifest_.models[eps ? family + "/" + epsilon_tag(*eps) : family] = path.string();
  }

  void fail(const std::string& stage, const std::string& what) {
    manifest_.status = "failed";
    manifest_.failed_stage = stage;
    manifest_.error = what;
    try {
      finish();
    } catch (...) {
    }
  }

  void finish() {
    auto write = [&](const std::string& name, const std::filesystem::path& path, auto&& body) {
      auto os = open_out(path);
      body(os);
      manifest_.results[name] = path.string();
    };
    write("stats", out_ / "stats.csv", [&](std::ostream& os) { write_stats_csv(os, manifest_.stats); });
    write("spans", out_ / "spans.csv", [&](std::ostream& os) { write_spans_csv(os, manifest_.spans); });
    write("stats_md", out_ / "stats.md", [&](std::ostream& os) { write_stats_markdown(os, manifest_.stats); });
    if (manifest_.status == "ok") {
      write("rcti", out_ / "rcti.csv", [&](std::ostream& os) { write_rcti_csv(os, manifest_.rcti); });
      write("rcti_md", out_ / "rcti.md", [&](std::ostream& os) { write_rcti_markdown(os, manifest_.rcti); });
      for (const auto& p : write_figure_data(manifest_.rcti, out_ / "figures"))
        manifest_.results["figure/" + p.stem().string()] = p.string();
    }
    manifest_.finished_at = utc_timestamp();
    auto os = open_out(out_ / "manifest.json");
    os << to_json(manifest_).dump(2) << '\n';
  }

  const RunConfig& cfg_;
  std::ostream& log_;
  std::filesystem::path out_;
  EnergyTracker tracker_;
  RunManifest manifest_;
  std::string stage_ = "setup";
  LoadedData data_;
  Network baseline_;
};

}  // namespace detail

/// Run the full sweep and write stats.csv, spans.csv, rcti.csv, figures/,
/// markdown tables, model files and manifest.json under cfg.output_dir.
/// Throws StageError after writing a manifest marked failed.
inline RunManifest cmd_experiment(const RunConfig& cfg, std::ostream& log) {
  return detail::ExperimentRunner(cfg, log).run();
}

/// Re-score a stats CSV without retraining.
inline std::vector<ScoredRecord> cmd_rcti(const std::filesystem::path& stats_csv, const std::filesystem::path& rcti_csv,
                                          CarbonBasis basis = CarbonBasis::Energy, const RctiThresholds& t = {}) {
  auto in = detail::open_in(stats_csv);
  const auto records = score_stats(read_stats_csv(in, stats_csv.string()), basis, t);
  auto out = detail::open_out(rcti_csv);
  write_rcti_csv(out, records);
  return records;
}

inline std::vector<std::filesystem::path> cmd_figure_data(const std::filesystem::path& rcti_csv,
                                                          const std::filesystem::path& out_dir) {
  auto in = detail::open_in(rcti_csv);
  return write_figure_data(read_rcti_csv(in, rcti_csv.string()), out_dir);
}

}  // namespace rcti
