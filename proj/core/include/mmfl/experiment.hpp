#pragma once

// Experiment configuration, the scenario matrix, the seeded simulation driver
// and metrics persistence / comparison.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmfl/adversary.hpp"
#include "mmfl/data.hpp"
#include "mmfl/network.hpp"
#include "mmfl/protocol.hpp"
#include "mmfl/selector.hpp"
#include "mmfl/timing.hpp"

namespace mmfl::exp {

/// splitmix64 over (base, stream, index); independent per-purpose seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) noexcept;

enum class SelectorKind { drl, random, static_model };

std::string to_string(SelectorKind kind);

struct NetworkSection {
  std::size_t devices = 10;
  net::GridMap grid;
  std::vector<net::BaseStation> stations;
  net::ChannelParams channel;
  double mean_speed_mps = 12.5;
  double speed_spread = 0.2;
  double epoch_seconds = 1.0;
  net::TurnProbabilities turns;
  double device_cpu_min_hz = 1.9e9;
  double device_cpu_max_hz = 2.4e9;
};

struct ModelsSection {
  std::vector<nn::ModelSpec> specs;
  std::vector<std::string> slaves;
  std::string master;

  const nn::ModelSpec& spec(const std::string& id) const;
};

struct FlSection {
  std::size_t epochs = 8;
  std::size_t local_iterations = 1;
  double lr = 0.07;
  double lr_decay = 1.0;
  double t_max = 0.6;
  double alpha = 1.0;
  /// Unset: 1 / (mean recognition time of the first epoch of the run).
  std::optional<double> beta;
  std::size_t kt_passes = 1;
  bool knowledge_transfer = true;
  bool signature_check = false;
  timing::ComputeProfile timing;
};

struct DataSection {
  enum class Source { synthetic, csv } source = Source::synthetic;
  std::size_t features = 87;
  std::size_t flows_per_device = 900;
  std::size_t test_flows = 3000;
  std::size_t edge_flows = 2400;
  double class_sep = 3.0;
  double malicious_fraction = 0.5;
  std::filesystem::path csv_path;
  std::filesystem::path schema_path;
};

struct Scenario {
  std::string name;
  std::string label;  ///< legend string used in metrics files
  SelectorKind selector = SelectorKind::random;
  bool attack = false;
  bool multi_model = true;
  std::string master;
  std::string static_model;  ///< for SelectorKind::static_model; defaults to the master
};

struct ScenarioOverride {
  std::optional<SelectorKind> selector;
  std::optional<bool> attack;
  std::optional<bool> multi_model;
  std::optional<std::string> master;
  std::optional<std::string> static_model;
  std::optional<std::string> label;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t episodes = 200;
  std::size_t repetitions = 5;
  NetworkSection network;
  ModelsSection models;
  FlSection fl;
  attack::AttackConfig attack;
  /// Selector used by config-defined scenarios that do not name one.
  SelectorKind selector_kind = SelectorKind::drl;
  std::string static_model;
  select::SelectorConfig selector;
  DataSection data;
  std::map<std::string, ScenarioOverride> scenarios;
};

/// Every problem found, empty when the configuration is usable.
std::vector<std::string> validate_config(const ExperimentConfig& config);

/// Parses JSON text and validates it; throws ConfigError listing every problem.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& config);

/// Defaults mirroring the reference deployment: 10 devices, two stations,
/// GRU 28 / GRU 32 on 87 features, master GRU 32.
ExperimentConfig default_config();

std::vector<std::string> builtin_scenarios();

/// Builtin or config-defined scenario; `master_override` replaces the master id.
Scenario resolve_scenario(const ExperimentConfig& config, const std::string& name,
                          const std::optional<std::string>& master_override = std::nullopt);

/// Owns the world for one repetition: data and device CPUs are fixed per seed,
/// while mobility, the compromised set and model initialization reset per episode.
class Simulation {
 public:
  Simulation(const ExperimentConfig& config, const Scenario& scenario, std::uint64_t seed);

  void begin_episode(std::size_t episode);

  /// Runs one epoch with `plan`, then advances mobility by one epoch.
  fl::EpochMetrics step(const fl::AssignmentPlan& plan, bool with_accuracy);

  /// Outcome of one epoch with `plan` without changing any state.
  fl::EpochMetrics preview(const fl::AssignmentPlan& plan) const;

  /// Every device on the first non-master model (or the master when it is the only one).
  fl::AssignmentPlan initial_plan() const;

  std::size_t devices() const noexcept { return world_.devices.size(); }
  std::size_t epoch() const noexcept { return epoch_; }
  double t_max() const noexcept { return t_max_; }
  const fl::ModelCatalog& catalog() const noexcept { return world_.catalog; }
  const fl::WorldState& world() const noexcept { return world_; }
  const net::NetworkSnapshot& network() const noexcept { return world_.network; }
  const fl::ProtocolConfig& protocol() const noexcept { return protocol_; }
  const std::vector<net::DevicePose>& poses() const noexcept { return poses_; }
  const std::vector<data::Flow>& test_set() const noexcept { return test_; }
  std::optional<attack::CompromiseSet> compromised() const;

 private:
  fl::AdversaryHook hook();

  ExperimentConfig config_;
  Scenario scenario_;
  std::uint64_t seed_;
  double t_max_ = 1.0;
  fl::ProtocolConfig protocol_;
  fl::WorldState world_;
  std::vector<nn::ModelWeights> initial_slaves_;
  nn::ModelWeights initial_global_;
  std::vector<data::Flow> test_;
  std::vector<net::DevicePose> poses_;
  std::mt19937_64 mobility_rng_;
  std::optional<attack::Adversary> adversary_;
  std::size_t epoch_ = 0;
};

struct EpochRow {
  std::size_t epoch = 0;
  double global_loss = 0.0;
  double accuracy = 0.0;
  double mean_recognition = 0.0;
  double max_recognition = 0.0;
  double excluded = 0.0;
  double reward = 0.0;
  double master_assignments = 0.0;
};

struct MitigationRow {
  std::size_t repetition = 0;
  std::size_t episode = 0;
  std::size_t epoch = 0;
  std::size_t device = 0;
  std::string reason;
  bool poisoned = false;
};

struct AttackRow {
  std::size_t repetition = 0;
  std::size_t episode = 0;
  std::size_t device = 0;
  double lambda = 0.0;
};

struct RunRecord {
  std::string scenario;
  std::string label;
  std::uint64_t seed = 0;
  std::size_t repetitions = 0;
  /// Mean cumulative reward per training episode (one entry for non-learning selectors).
  std::vector<double> episode_reward;
  /// Evaluation episode, averaged over repetitions.
  std::vector<EpochRow> epochs;
  std::vector<MitigationRow> mitigation;
  std::vector<AttackRow> attacks;
  double alpha = 1.0;
  std::vector<double> beta;   ///< per repetition
  std::vector<double> t_ref;  ///< per repetition
  std::string config_json;
  std::string timestamp;
};

RunRecord run_scenario(const ExperimentConfig& config, const Scenario& scenario, std::uint64_t seed);

/// Writes reward.csv, accuracy.csv, timing.csv, metrics.csv, mitigation.csv,
/// attack.csv and run.json into `out_dir` (created if missing).
void emit_metrics(const RunRecord& record, const std::filesystem::path& out_dir);

/// Reads back what emit_metrics wrote (epoch-level metrics and the manifest).
RunRecord load_run(const std::filesystem::path& dir);

struct Expectation {
  std::string metric;  ///< "accuracy" or "mean_T_Int"
  std::string higher;  ///< scenario label expected to be >= ...
  std::string lower;   ///< ... this one
  std::optional<std::size_t> epoch;  ///< unset: final shared epoch
};

/// {"expect": [{"metric": ..., "higher": ..., "lower": ..., "epoch": n}]}
std::vector<Expectation> parse_expectations(const std::string& json_text);

struct Comparison {
  std::vector<std::string> scenarios;
  std::vector<std::size_t> epochs;
  /// [scenario][epoch index]
  std::vector<std::vector<double>> accuracy;
  std::vector<std::vector<double>> mean_recognition;
  std::vector<std::string> violations;

  /// Difference to the first scenario.
  double accuracy_delta(std::size_t scenario, std::size_t epoch_index) const;
  double recognition_delta(std::size_t scenario, std::size_t epoch_index) const;
};

/// Needs at least two records over identical epochs; InputError otherwise.
Comparison compare_scenarios(std::span<const RunRecord> records,
                             std::span<const Expectation> expectations = {});

void write_comparison(std::ostream& out, const Comparison& comparison);

}  // namespace mmfl::exp
