#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmfl/error.hpp"
#include "mmfl/experiment.hpp"

using namespace mmfl;
using namespace mmfl::exp;

namespace {

const char* kTiny = R"({
  "repetitions": 1, "episodes": 2,
  "fl": {"epochs": 3},
  "data": {"features": 6, "flows_per_device": 8, "test_flows": 30, "edge_flows": 10},
  "models": {
    "specs": [
      {"id": "GRU 3", "cell": "gated_recurrent", "input_dim": 6, "hidden_dim": 3, "output_dim": 1},
      {"id": "GRU 4", "cell": "gated_recurrent", "input_dim": 6, "hidden_dim": 4, "output_dim": 1}
    ],
    "slaves": ["GRU 3", "GRU 4"], "master": "GRU 4"
  }
})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmfl_unit_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("derived seeds are stable and distinct per stream") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("defaults validate and round-trip through JSON") {
  const auto c = default_config();
  CHECK(validate_config(c).empty());
  const auto back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.models.master == "GRU 32");
  CHECK(back.network.stations.size() == 2);
}

TEST_CASE("config errors are collected") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  try {
    parse_config(R"({"episodes": 0, "bogus": 1, "fl": {"t_max": 2}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"models": {"master": "nope"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"network": {"devices": 2}, "attack": {"compromised_max": 5}})"),
                  ConfigError);
}

TEST_CASE("builtin scenarios resolve") {
  const auto c = default_config();
  for (const auto& name : builtin_scenarios()) {
    const auto s = resolve_scenario(c, name);
    CHECK(s.name == name);
    CHECK_FALSE(s.label.empty());
  }
  CHECK(resolve_scenario(c, "mmfl-drl-attack").label == "MM-FL-DRL (Master: GRU 32)");
  CHECK(resolve_scenario(c, "fl-single-attack").label == "FL-GRU 32-With Attack");
  CHECK(resolve_scenario(c, "mmfl-rnd-attack", std::string("GRU 28")).master == "GRU 28");
  CHECK_THROWS_AS(resolve_scenario(c, "no-such-scenario"), ConfigError);
}

TEST_CASE("metrics files carry the documented headers") {
  const auto c = parse_config(kTiny);
  const auto rec = run_scenario(c, resolve_scenario(c, "mmfl-drl-attack"), 3);
  CHECK(rec.episode_reward.size() == 2);
  CHECK(rec.epochs.size() == 3);
  const auto dir = scratch("headers");
  emit_metrics(rec, dir);
  CHECK(first_line(dir / "reward.csv") == "episode,cumulative_reward");
  CHECK(first_line(dir / "accuracy.csv") == "epoch,scenario,accuracy");
  CHECK(first_line(dir / "timing.csv") == "epoch,scenario,mean_T_Int");
  CHECK(first_line(dir / "metrics.csv") ==
        "epoch,scenario,F,accuracy,mean_T_Int,max_T_Int,excluded,reward,master_assignments");
  CHECK(first_line(dir / "mitigation.csv") == "repetition,episode,epoch,device,reason,poisoned");
  CHECK(first_line(dir / "attack.csv") == "repetition,episode,device,lambda");
  CHECK(std::filesystem::exists(dir / "run.json"));

  const auto back = load_run(dir);
  CHECK(back.label == rec.label);
  REQUIRE(back.epochs.size() == 3);
  CHECK(back.epochs[2].accuracy == doctest::Approx(rec.epochs[2].accuracy).epsilon(1e-10));
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical seeds give identical metrics files") {
  const auto c = parse_config(kTiny);
  const auto s = resolve_scenario(c, "mmfl-rnd-attack");
  const auto a = scratch("det_a"), b = scratch("det_b");
  emit_metrics(run_scenario(c, s, 11), a);
  emit_metrics(run_scenario(c, s, 11), b);
  for (const char* f : {"reward.csv", "accuracy.csv", "timing.csv", "metrics.csv", "mitigation.csv",
                        "attack.csv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("comparison reports deltas and ordering violations") {
  RunRecord x, y;
  x.label = "A";
  y.label = "B";
  x.epochs = {{0, 0, 0.9, 1.0}, {1, 0, 0.8, 1.0}};
  y.epochs = {{0, 0, 0.5, 2.0}, {1, 0, 0.6, 3.0}};
  const std::vector<RunRecord> recs{x, y};
  const auto ok = compare_scenarios(recs, parse_expectations(
      R"({"expect": [{"metric": "accuracy", "higher": "A", "lower": "B"}]})"));
  CHECK(ok.violations.empty());
  CHECK(ok.accuracy_delta(1, 1) == doctest::Approx(-0.2));
  CHECK(ok.recognition_delta(1, 1) == doctest::Approx(2.0));

  const auto bad = compare_scenarios(recs, parse_expectations(
      R"({"expect": [{"metric": "mean_T_Int", "higher": "A", "lower": "B", "epoch": 0}]})"));
  CHECK(bad.violations.size() == 1);

  const std::vector<RunRecord> one{x};
  CHECK_THROWS_AS(compare_scenarios(one), InputError);
  RunRecord z = y;
  z.epochs.pop_back();
  const std::vector<RunRecord> mismatched{x, z};
  CHECK_THROWS_AS(compare_scenarios(mismatched), InputError);
}
