// mmfl: run scenarios, compare runs, validate configs.
//
//   mmfl run --config cfg.json --scenario mmfl-drl-attack --seed 7 --out runs/drl
//   mmfl compare --runs runs/drl runs/rnd --expect order.json
//   mmfl validate --config cfg.json

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmfl/error.hpp"
#include "mmfl/experiment.hpp"

namespace {

enum ExitCode {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kInput = 3,
  kNumeric = 4,
  kProtocol = 5,
  kIo = 6,
  kOrdering = 7,
};

int exit_code(mmfl::ErrorCategory c) {
  switch (c) {
    case mmfl::ErrorCategory::config: return kConfig;
    case mmfl::ErrorCategory::input: return kInput;
    case mmfl::ErrorCategory::numeric: return kNumeric;
    case mmfl::ErrorCategory::protocol: return kProtocol;
    case mmfl::ErrorCategory::io: return kIo;
  }
  return kUnexpected;
}

const char* category_name(mmfl::ErrorCategory c) {
  switch (c) {
    case mmfl::ErrorCategory::config: return "config";
    case mmfl::ErrorCategory::input: return "input";
    case mmfl::ErrorCategory::numeric: return "numeric";
    case mmfl::ErrorCategory::protocol: return "protocol";
    case mmfl::ErrorCategory::io: return "io";
  }
  return "unknown";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mmfl::IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-model federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, scenario, out_dir, master, expect_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes, repetitions;
  std::vector<std::string> runs;

  auto* run = app.add_subcommand("run", "Run one scenario and write its metrics");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", scenario, "Scenario name")->required();
  run->add_option("--seed", seed, "Master seed (defaults to the config seed)");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--master", master, "Override the master model id");
  run->add_option("--episodes", episodes, "Override the DRL training episode count");
  run->add_option("--repetitions", repetitions, "Override the repetition count");

  auto* compare = app.add_subcommand("compare", "Compare runs epoch by epoch");
  compare->add_option("--runs", runs, "Run directories")->required()->expected(2, -1);
  compare->add_option("--expect", expect_path, "Expected ordering file (JSON)")->check(CLI::ExistingFile);

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = mmfl::exp::load_config(config_path);
      if (episodes) config.episodes = *episodes;
      if (repetitions) config.repetitions = *repetitions;
      const auto s = mmfl::exp::resolve_scenario(
          config, scenario, master.empty() ? std::nullopt : std::optional<std::string>(master));
      const auto record = mmfl::exp::run_scenario(config, s, seed.value_or(config.seed));
      mmfl::exp::emit_metrics(record, out_dir);
      if (!record.epochs.empty()) {
        const auto& last = record.epochs.back();
        std::cout << s.label << ": final accuracy " << last.accuracy << ", mean T_Int "
                  << last.mean_recognition << " s\n";
      }
      std::cout << "wrote " << out_dir << '\n';
    } else if (*compare) {
      std::vector<mmfl::exp::RunRecord> records;
      for (const auto& dir : runs) records.push_back(mmfl::exp::load_run(dir));
      std::vector<mmfl::exp::Expectation> expectations;
      if (!expect_path.empty()) expectations = mmfl::exp::parse_expectations(read_file(expect_path));
      const auto cmp = mmfl::exp::compare_scenarios(records, expectations);
      mmfl::exp::write_comparison(std::cout, cmp);
      for (const auto& v : cmp.violations) std::cerr << "violation: " << v << '\n';
      if (!cmp.violations.empty()) return kOrdering;
    } else if (*validate) {
      const auto config = mmfl::exp::load_config(config_path);
      std::cout << "ok: " << config.network.devices << " devices, " << config.network.stations.size()
                << " stations, " << config.models.slaves.size() << " slave models, master "
                << config.models.master << '\n';
    }
  } catch (const mmfl::Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kOk;
}
