#include "mmfl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmfl/error.hpp"

namespace mmfl::exp {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kDataStream = 1,
  kCpuStream = 2,
  kModelStream = 3,
  kMobilityStream = 4,
  kAttackStream = 5,
  kSelectorStream = 6,
};

// ---------------------------------------------------------------------------
// JSON reading with error collection

class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  /// Flags keys of `obj` outside `allowed`.
  void keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
      errors_.push_back(where + ": expected an object");
      return;
    }
    for (const auto& [k, v] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        errors_.push_back(where + ": unknown key '" + k + "'");
      }
    }
  }

  template <class T>
  void get(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      const auto& v = obj.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_float() || v.get<long double>() < 0) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      errors_.push_back(where + "." + key + ": " + e.what());
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  std::vector<std::string>& errors_;
};

SelectorKind selector_from_string(const std::string& s) {
  if (s == "drl") return SelectorKind::drl;
  if (s == "random") return SelectorKind::random;
  if (s == "static") return SelectorKind::static_model;
  throw ConfigError("unknown selector '" + s + "' (expected drl, random or static)");
}

timing::BarrierMode barrier_from_string(const std::string& s) {
  if (s == "shared_max") return timing::BarrierMode::shared_max;
  if (s == "per_device") return timing::BarrierMode::per_device;
  throw ConfigError("unknown barrier '" + s + "' (expected shared_max or per_device)");
}

std::string to_string(timing::BarrierMode b) {
  return b == timing::BarrierMode::shared_max ? "shared_max" : "per_device";
}

net::Point read_point(const json& v) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw std::invalid_argument("expected [x, y]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

void read_network(const json& j, NetworkSection& n, Reader& r) {
  r.keys(j, "network", {"devices", "grid", "stations", "channel", "mobility", "device_cpu_hz"});
  r.get(j, "devices", n.devices, "network");
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    r.keys(g, "network.grid", {"cells_per_side", "cell_width"});
    r.get(g, "cells_per_side", n.grid.cells_per_side, "network.grid");
    r.get(g, "cell_width", n.grid.cell_width, "network.grid");
  }
  if (j.contains("stations")) {
    const auto& arr = j["stations"];
    if (!arr.is_array()) {
      r.errors().push_back("network.stations: expected an array");
    } else {
      n.stations.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "network.stations[" + std::to_string(i) + "]";
        const auto& s = arr[i];
        r.keys(s, where, {"id", "position", "bandwidth_hz", "coverage_radius", "tx_power_dbm", "cpu_hz"});
        net::BaseStation bs;
        bs.id = static_cast<int>(i);
        r.get(s, "id", bs.id, where);
        if (s.is_object() && s.contains("position")) {
          try {
            bs.position = read_point(s["position"]);
          } catch (const std::exception& e) {
            r.errors().push_back(where + ".position: " + e.what());
          }
        }
        r.get(s, "bandwidth_hz", bs.bandwidth_hz, where);
        r.get(s, "coverage_radius", bs.coverage_radius, where);
        r.get(s, "tx_power_dbm", bs.tx_power_dbm, where);
        r.get(s, "cpu_hz", bs.cpu_hz, where);
        n.stations.push_back(bs);
      }
    }
  }
  if (j.contains("channel")) {
    const auto& c = j["channel"];
    r.keys(c, "network.channel", {"path_loss_coeff", "path_loss_exp", "noise_power_dbm", "device_tx_power_dbm"});
    r.get(c, "path_loss_coeff", n.channel.path_loss_coeff, "network.channel");
    r.get(c, "path_loss_exp", n.channel.path_loss_exp, "network.channel");
    r.get(c, "noise_power_dbm", n.channel.noise_power_dbm, "network.channel");
    r.get(c, "device_tx_power_dbm", n.channel.device_tx_power_dbm, "network.channel");
  }
  if (j.contains("mobility")) {
    const auto& m = j["mobility"];
    r.keys(m, "network.mobility", {"mean_speed_mps", "speed_spread", "epoch_seconds", "turn"});
    r.get(m, "mean_speed_mps", n.mean_speed_mps, "network.mobility");
    r.get(m, "speed_spread", n.speed_spread, "network.mobility");
    r.get(m, "epoch_seconds", n.epoch_seconds, "network.mobility");
    if (m.is_object() && m.contains("turn")) {
      const auto& t = m["turn"];
      r.keys(t, "network.mobility.turn", {"straight", "right", "left"});
      r.get(t, "straight", n.turns.straight, "network.mobility.turn");
      r.get(t, "right", n.turns.right, "network.mobility.turn");
      r.get(t, "left", n.turns.left, "network.mobility.turn");
    }
  }
  if (j.contains("device_cpu_hz")) {
    const auto& c = j["device_cpu_hz"];
    if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
      n.device_cpu_min_hz = c[0].get<double>();
      n.device_cpu_max_hz = c[1].get<double>();
    } else {
      r.errors().push_back("network.device_cpu_hz: expected [min, max]");
    }
  }
}

void read_models(const json& j, ModelsSection& m, Reader& r) {
  r.keys(j, "models", {"specs", "slaves", "master"});
  if (j.contains("specs")) {
    const auto& arr = j["specs"];
    if (!arr.is_array()) {
      r.errors().push_back("models.specs: expected an array");
    } else {
      m.specs.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "models.specs[" + std::to_string(i) + "]";
        const auto& s = arr[i];
        r.keys(s, where, {"id", "cell", "input_dim", "hidden_dim", "output_dim"});
        nn::ModelSpec spec;
        std::string cell = "gru";
        r.get(s, "id", spec.model_id, where);
        r.get(s, "cell", cell, where);
        r.get(s, "input_dim", spec.input_dim, where);
        r.get(s, "hidden_dim", spec.hidden_dim, where);
        r.get(s, "output_dim", spec.output_dim, where);
        try {
          spec.cell = nn::cell_kind_from_string(cell);
        } catch (const std::exception& e) {
          r.errors().push_back(where + ".cell: " + e.what());
        }
        m.specs.push_back(spec);
      }
    }
  }
  if (j.contains("slaves")) {
    const auto& arr = j["slaves"];
    if (!arr.is_array() || !std::all_of(arr.begin(), arr.end(), [](const json& v) { return v.is_string(); })) {
      r.errors().push_back("models.slaves: expected an array of model ids");
    } else {
      m.slaves = arr.get<std::vector<std::string>>();
    }
  }
  r.get(j, "master", m.master, "models");
}

void read_timing(const json& j, timing::ComputeProfile& t, Reader& r) {
  const std::string w = "fl.timing";
  r.keys(j, w, {"train_cycles_per_param", "inference_cycles_per_param", "label_cycles_per_param",
                "edge_train_cycles_per_param", "aggregate_cycles_per_param", "cloud_cpu_hz",
                "cloud_rate_bps", "bytes_per_param", "barrier"});
  r.get(j, "train_cycles_per_param", t.train_cycles_per_param, w);
  r.get(j, "inference_cycles_per_param", t.inference_cycles_per_param, w);
  r.get(j, "label_cycles_per_param", t.label_cycles_per_param, w);
  r.get(j, "edge_train_cycles_per_param", t.edge_train_cycles_per_param, w);
  r.get(j, "aggregate_cycles_per_param", t.aggregate_cycles_per_param, w);
  r.get(j, "cloud_cpu_hz", t.cloud_cpu_hz, w);
  r.get(j, "cloud_rate_bps", t.cloud_rate_bps, w);
  r.get(j, "bytes_per_param", t.bytes_per_param, w);
  std::string barrier = to_string(t.barrier);
  r.get(j, "barrier", barrier, w);
  try {
    t.barrier = barrier_from_string(barrier);
  } catch (const std::exception& e) {
    r.errors().push_back(w + ".barrier: " + e.what());
  }
}

void read_fl(const json& j, FlSection& f, Reader& r) {
  r.keys(j, "fl", {"epochs", "local_iterations", "lr", "lr_decay", "t_max", "alpha", "beta",
                   "kt_passes", "knowledge_transfer", "signature_check", "timing"});
  r.get(j, "epochs", f.epochs, "fl");
  r.get(j, "local_iterations", f.local_iterations, "fl");
  r.get(j, "lr", f.lr, "fl");
  r.get(j, "lr_decay", f.lr_decay, "fl");
  r.get(j, "t_max", f.t_max, "fl");
  r.get(j, "alpha", f.alpha, "fl");
  if (j.is_object() && j.contains("beta") && !j["beta"].is_null()) {
    double beta = 0.0;
    r.get(j, "beta", beta, "fl");
    f.beta = beta;
  }
  r.get(j, "kt_passes", f.kt_passes, "fl");
  r.get(j, "knowledge_transfer", f.knowledge_transfer, "fl");
  r.get(j, "signature_check", f.signature_check, "fl");
  if (j.is_object() && j.contains("timing")) read_timing(j["timing"], f.timing, r);
}

void read_attack(const json& j, attack::AttackConfig& a, Reader& r) {
  r.keys(j, "attack", {"enabled", "compromised_min", "compromised_max", "lr_range", "target_scale",
                       "resample_lr_per_epoch"});
  r.get(j, "enabled", a.enabled, "attack");
  r.get(j, "compromised_min", a.compromised_min, "attack");
  r.get(j, "compromised_max", a.compromised_max, "attack");
  if (j.is_object() && j.contains("lr_range")) {
    const auto& v = j["lr_range"];
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      a.lr_low = v[0].get<double>();
      a.lr_high = v[1].get<double>();
    } else {
      r.errors().push_back("attack.lr_range: expected [low, high]");
    }
  }
  r.get(j, "target_scale", a.target_scale, "attack");
  r.get(j, "resample_lr_per_epoch", a.resample_lr_per_epoch, "attack");
}

void read_selector(const json& j, ExperimentConfig& c, Reader& r) {
  auto& s = c.selector;
  r.keys(j, "selector", {"kind", "static_model", "epsilon_start", "epsilon_end", "gamma", "policy_lr",
                         "hidden", "max_rate_bps", "infeasible_penalty_factor",
                         "standardize_reward"});
  std::string kind = to_string(c.selector_kind);
  r.get(j, "kind", kind, "selector");
  try {
    c.selector_kind = selector_from_string(kind);
  } catch (const std::exception& e) {
    r.errors().push_back(std::string("selector.kind: ") + e.what());
  }
  r.get(j, "static_model", c.static_model, "selector");
  r.get(j, "epsilon_start", s.epsilon_start, "selector");
  r.get(j, "epsilon_end", s.epsilon_end, "selector");
  r.get(j, "gamma", s.gamma, "selector");
  r.get(j, "policy_lr", s.policy_lr, "selector");
  r.get(j, "hidden", s.hidden, "selector");
  r.get(j, "max_rate_bps", s.max_rate_bps, "selector");
  r.get(j, "infeasible_penalty_factor", s.infeasible_penalty_factor, "selector");
  r.get(j, "standardize_reward", s.standardize_reward, "selector");
}

void read_data(const json& j, DataSection& d, Reader& r) {
  r.keys(j, "data", {"source", "features", "flows_per_device", "test_flows", "edge_flows",
                     "class_sep", "malicious_fraction", "csv", "schema"});
  std::string source = d.source == DataSection::Source::synthetic ? "synthetic" : "csv";
  r.get(j, "source", source, "data");
  if (source == "synthetic") {
    d.source = DataSection::Source::synthetic;
  } else if (source == "csv") {
    d.source = DataSection::Source::csv;
  } else {
    r.errors().push_back("data.source: expected synthetic or csv");
  }
  r.get(j, "features", d.features, "data");
  r.get(j, "flows_per_device", d.flows_per_device, "data");
  r.get(j, "test_flows", d.test_flows, "data");
  r.get(j, "edge_flows", d.edge_flows, "data");
  r.get(j, "class_sep", d.class_sep, "data");
  r.get(j, "malicious_fraction", d.malicious_fraction, "data");
  std::string csv = d.csv_path.string();
  std::string schema = d.schema_path.string();
  r.get(j, "csv", csv, "data");
  r.get(j, "schema", schema, "data");
  d.csv_path = csv;
  d.schema_path = schema;
}

void read_scenarios(const json& j, std::map<std::string, ScenarioOverride>& out, Reader& r) {
  if (!j.is_object()) {
    r.errors().push_back("scenarios: expected an object");
    return;
  }
  for (const auto& [name, v] : j.items()) {
    const std::string where = "scenarios." + name;
    r.keys(v, where, {"selector", "attack", "multi_model", "master", "static_model", "label"});
    ScenarioOverride o;
    if (v.is_object()) {
      if (v.contains("selector")) {
        std::string s;
        r.get(v, "selector", s, where);
        try {
          o.selector = selector_from_string(s);
        } catch (const std::exception& e) {
          r.errors().push_back(where + ".selector: " + e.what());
        }
      }
      auto opt = [&](const char* key, auto& field) {
        if (!v.contains(key)) return;
        typename std::remove_reference_t<decltype(field)>::value_type value{};
        r.get(v, key, value, where);
        field = value;
      };
      opt("attack", o.attack);
      opt("multi_model", o.multi_model);
      opt("master", o.master);
      opt("static_model", o.static_model);
      opt("label", o.label);
    }
    out[name] = o;
  }
}

json spec_json(const nn::ModelSpec& s) {
  return {{"id", s.model_id},
          {"cell", nn::to_string(s.cell)},
          {"input_dim", s.input_dim},
          {"hidden_dim", s.hidden_dim},
          {"output_dim", s.output_dim}};
}

json config_json(const ExperimentConfig& c) {
  json stations = json::array();
  for (const auto& bs : c.network.stations) {
    stations.push_back({{"id", bs.id},
                        {"position", {bs.position.x, bs.position.y}},
                        {"bandwidth_hz", bs.bandwidth_hz},
                        {"coverage_radius", bs.coverage_radius},
                        {"tx_power_dbm", bs.tx_power_dbm},
                        {"cpu_hz", bs.cpu_hz}});
  }
  json specs = json::array();
  for (const auto& s : c.models.specs) specs.push_back(spec_json(s));
  const auto& t = c.fl.timing;
  json scenarios = json::object();
  for (const auto& [name, o] : c.scenarios) {
    json v = json::object();
    if (o.selector) v["selector"] = *o.selector == SelectorKind::static_model ? "static" : to_string(*o.selector);
    if (o.attack) v["attack"] = *o.attack;
    if (o.multi_model) v["multi_model"] = *o.multi_model;
    if (o.master) v["master"] = *o.master;
    if (o.static_model) v["static_model"] = *o.static_model;
    if (o.label) v["label"] = *o.label;
    scenarios[name] = v;
  }
  const auto& n = c.network;
  const auto& d = c.data;
  return {
      {"seed", c.seed},
      {"episodes", c.episodes},
      {"repetitions", c.repetitions},
      {"network",
       {{"devices", n.devices},
        {"grid", {{"cells_per_side", n.grid.cells_per_side}, {"cell_width", n.grid.cell_width}}},
        {"stations", stations},
        {"channel",
         {{"path_loss_coeff", n.channel.path_loss_coeff},
          {"path_loss_exp", n.channel.path_loss_exp},
          {"noise_power_dbm", n.channel.noise_power_dbm},
          {"device_tx_power_dbm", n.channel.device_tx_power_dbm}}},
        {"mobility",
         {{"mean_speed_mps", n.mean_speed_mps},
          {"speed_spread", n.speed_spread},
          {"epoch_seconds", n.epoch_seconds},
          {"turn", {{"straight", n.turns.straight}, {"right", n.turns.right}, {"left", n.turns.left}}}}},
        {"device_cpu_hz", {n.device_cpu_min_hz, n.device_cpu_max_hz}}}},
      {"models", {{"specs", specs}, {"slaves", c.models.slaves}, {"master", c.models.master}}},
      {"fl",
       {{"epochs", c.fl.epochs},
        {"local_iterations", c.fl.local_iterations},
        {"lr", c.fl.lr},
        {"lr_decay", c.fl.lr_decay},
        {"t_max", c.fl.t_max},
        {"alpha", c.fl.alpha},
        {"beta", c.fl.beta ? json(*c.fl.beta) : json(nullptr)},
        {"kt_passes", c.fl.kt_passes},
        {"knowledge_transfer", c.fl.knowledge_transfer},
        {"signature_check", c.fl.signature_check},
        {"timing",
         {{"train_cycles_per_param", t.train_cycles_per_param},
          {"inference_cycles_per_param", t.inference_cycles_per_param},
          {"label_cycles_per_param", t.label_cycles_per_param},
          {"edge_train_cycles_per_param", t.edge_train_cycles_per_param},
          {"aggregate_cycles_per_param", t.aggregate_cycles_per_param},
          {"cloud_cpu_hz", t.cloud_cpu_hz},
          {"cloud_rate_bps", t.cloud_rate_bps},
          {"bytes_per_param", t.bytes_per_param},
          {"barrier", to_string(t.barrier)}}}}},
      {"attack",
       {{"enabled", c.attack.enabled},
        {"compromised_min", c.attack.compromised_min},
        {"compromised_max", c.attack.compromised_max},
        {"lr_range", {c.attack.lr_low, c.attack.lr_high}},
        {"target_scale", c.attack.target_scale},
        {"resample_lr_per_epoch", c.attack.resample_lr_per_epoch}}},
      {"selector",
       {{"kind", c.selector_kind == SelectorKind::static_model ? "static" : to_string(c.selector_kind)},
        {"static_model", c.static_model},
        {"epsilon_start", c.selector.epsilon_start},
        {"epsilon_end", c.selector.epsilon_end},
        {"gamma", c.selector.gamma},
        {"policy_lr", c.selector.policy_lr},
        {"hidden", c.selector.hidden},
        {"max_rate_bps", c.selector.max_rate_bps},
        {"infeasible_penalty_factor", c.selector.infeasible_penalty_factor},
        {"standardize_reward", c.selector.standardize_reward}}},
      {"data",
       {{"source", d.source == DataSection::Source::synthetic ? "synthetic" : "csv"},
        {"features", d.features},
        {"flows_per_device", d.flows_per_device},
        {"test_flows", d.test_flows},
        {"edge_flows", d.edge_flows},
        {"class_sep", d.class_sep},
        {"malicious_fraction", d.malicious_fraction},
        {"csv", d.csv_path.string()},
        {"schema", d.schema_path.string()}}},
      {"scenarios", scenarios},
  };
}

bool has_spec(const ModelsSection& m, const std::string& id) {
  return std::any_of(m.specs.begin(), m.specs.end(), [&](const auto& s) { return s.model_id == id; });
}

// ---------------------------------------------------------------------------
// CSV helpers

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

std::string to_string(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::drl: return "drl";
    case SelectorKind::random: return "random";
    case SelectorKind::static_model: return "static";
  }
  return "?";
}

const nn::ModelSpec& ModelsSection::spec(const std::string& id) const {
  for (const auto& s : specs) {
    if (s.model_id == id) return s;
  }
  throw ConfigError("unknown model id '" + id + "'");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.network.stations = {
      {0, {50.0, 50.0}, 28e6, 300.0, 34.0, 3.2e9},
      {1, {350.0, 350.0}, 30e6, 300.0, 34.0, 3.2e9},
  };
  c.models.specs = {
      {"GRU 28", 87, nn::CellKind::gated_recurrent, 28, 1},
      {"GRU 32", 87, nn::CellKind::gated_recurrent, 32, 1},
  };
  c.models.slaves = {"GRU 28", "GRU 32"};
  c.models.master = "GRU 32";
  return c;
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  auto guarded = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  };

  check(c.repetitions >= 1, "repetitions must be at least 1");
  check(c.episodes >= 1, "episodes must be at least 1");

  const auto& n = c.network;
  check(n.devices >= 1, "network.devices must be at least 1");
  check(n.grid.cells_per_side >= 1, "network.grid.cells_per_side must be at least 1");
  check(n.grid.cell_width > 0.0, "network.grid.cell_width must be positive");
  check(!n.stations.empty(), "network.stations must list at least one base station");
  std::set<int> ids;
  for (std::size_t i = 0; i < n.stations.size(); ++i) {
    const auto& bs = n.stations[i];
    const std::string w = "network.stations[" + std::to_string(i) + "]";
    check(ids.insert(bs.id).second, w + ": duplicate id " + std::to_string(bs.id));
    check(bs.bandwidth_hz > 0.0, w + ": bandwidth_hz must be positive");
    check(bs.coverage_radius > 0.0, w + ": coverage_radius must be positive");
    check(bs.cpu_hz > 0.0, w + ": cpu_hz must be positive");
  }
  check(n.channel.path_loss_coeff > 0.0, "network.channel.path_loss_coeff must be positive");
  check(n.channel.path_loss_exp > 0.0, "network.channel.path_loss_exp must be positive");
  check(n.mean_speed_mps >= 0.0, "network.mobility.mean_speed_mps must be non-negative");
  check(n.speed_spread >= 0.0 && n.speed_spread < 1.0, "network.mobility.speed_spread must lie in [0, 1)");
  check(n.epoch_seconds > 0.0, "network.mobility.epoch_seconds must be positive");
  check(n.turns.straight >= 0.0 && n.turns.right >= 0.0 && n.turns.left >= 0.0 &&
            n.turns.straight + n.turns.right + n.turns.left > 0.0,
        "network.mobility.turn probabilities must be non-negative with a positive sum");
  check(n.device_cpu_min_hz > 0.0 && n.device_cpu_min_hz <= n.device_cpu_max_hz,
        "network.device_cpu_hz must be [min, max] with 0 < min <= max");

  const auto& m = c.models;
  check(!m.specs.empty(), "models.specs must list at least one model");
  std::set<std::string> spec_ids;
  for (const auto& s : m.specs) {
    check(spec_ids.insert(s.model_id).second, "models.specs: duplicate id '" + s.model_id + "'");
    guarded([&] { s.validate(); });
  }
  check(!m.slaves.empty(), "models.slaves must list at least one model id");
  std::set<std::string> slave_ids;
  for (const auto& id : m.slaves) {
    check(has_spec(m, id), "models.slaves: unknown model id '" + id + "'");
    check(slave_ids.insert(id).second, "models.slaves: '" + id + "' listed twice");
  }
  check(has_spec(m, m.master), "models.master: unknown model id '" + m.master + "'");

  std::size_t features = c.data.features;
  if (c.data.source == DataSection::Source::csv) {
    check(!c.data.csv_path.empty(), "data.csv: a CSV path is required when data.source is csv");
    if (!c.data.schema_path.empty()) {
      guarded([&] { features = data::CsvSchema::load(c.data.schema_path).feature_columns.size(); });
    }
  } else {
    check(c.data.features >= 2, "data.features must be at least 2");
    check(c.data.class_sep >= 0.0, "data.class_sep must be non-negative");
    check(c.data.malicious_fraction >= 0.0 && c.data.malicious_fraction <= 1.0,
          "data.malicious_fraction must lie in [0, 1]");
    check(c.data.test_flows >= 1, "data.test_flows must be at least 1");
  }
  for (const auto& s : m.specs) {
    check(s.input_dim == features || c.data.source == DataSection::Source::csv,
          "models.specs: '" + s.model_id + "' expects " + std::to_string(s.input_dim) +
              " inputs but the data has " + std::to_string(features) + " features");
    check(s.output_dim == 1, "models.specs: '" + s.model_id + "' must have one output");
  }
  check(c.data.edge_flows <= n.devices * c.data.flows_per_device,
        "data.edge_flows exceeds the device training pool");

  const auto& f = c.fl;
  check(f.epochs >= 1, "fl.epochs must be at least 1");
  check(f.local_iterations >= 1, "fl.local_iterations must be at least 1");
  check(f.lr > 0.0 && std::isfinite(f.lr), "fl.lr must be positive");
  check(f.lr_decay > 0.0 && f.lr_decay <= 1.0, "fl.lr_decay must lie in (0, 1]");
  check(f.t_max >= 0.0 && f.t_max <= 1.0, "fl.t_max must lie in [0, 1]");
  check(f.alpha >= 0.0, "fl.alpha must be non-negative");
  check(!f.beta || *f.beta >= 0.0, "fl.beta must be non-negative");
  check(f.timing.cloud_cpu_hz > 0.0, "fl.timing.cloud_cpu_hz must be positive");
  check(f.timing.cloud_rate_bps > 0.0, "fl.timing.cloud_rate_bps must be positive");
  check(f.timing.bytes_per_param > 0.0, "fl.timing.bytes_per_param must be positive");
  check(f.timing.train_cycles_per_param >= 0.0 && f.timing.inference_cycles_per_param >= 0.0 &&
            f.timing.label_cycles_per_param >= 0.0 && f.timing.edge_train_cycles_per_param >= 0.0 &&
            f.timing.aggregate_cycles_per_param >= 0.0,
        "fl.timing cycle constants must be non-negative");

  guarded([&] { c.attack.validate(n.devices); });
  guarded([&] {
    auto s = c.selector;
    s.alpha = f.alpha;
    s.beta = f.beta.value_or(1.0);
    s.t_max = f.t_max;
    s.validate();
  });
  check(c.selector.hidden >= 1, "selector.hidden must be at least 1");
  if (c.selector_kind == SelectorKind::static_model && !c.static_model.empty()) {
    check(slave_ids.count(c.static_model) > 0,
          "selector.static_model: '" + c.static_model + "' is not a slave model");
  }

  if (errors.empty()) {
    for (const auto& [name, o] : c.scenarios) {
      guarded([&] { resolve_scenario(c, name); });
    }
  }
  return errors;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = default_config();
  std::vector<std::string> errors;
  Reader r(errors);
  r.keys(j, "config", {"seed", "episodes", "repetitions", "network", "models", "fl", "attack",
                       "selector", "data", "scenarios"});
  if (j.is_object()) {
    r.get(j, "seed", c.seed, "config");
    r.get(j, "episodes", c.episodes, "config");
    r.get(j, "repetitions", c.repetitions, "config");
    if (j.contains("network")) read_network(j["network"], c.network, r);
    if (j.contains("models")) read_models(j["models"], c.models, r);
    if (j.contains("fl")) read_fl(j["fl"], c.fl, r);
    if (j.contains("attack")) read_attack(j["attack"], c.attack, r);
    if (j.contains("selector")) read_selector(j["selector"], c, r);
    if (j.contains("data")) read_data(j["data"], c.data, r);
    if (j.contains("scenarios")) read_scenarios(j["scenarios"], c.scenarios, r);
  }
  if (errors.empty()) errors = validate_config(c);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  // Relative data paths resolve against the config file's directory.
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("data") && j["data"].is_object()) {
    for (const char* key : {"csv", "schema"}) {
      auto& d = j["data"];
      if (d.contains(key) && d[key].is_string()) {
        std::filesystem::path p = d[key].get<std::string>();
        if (!p.empty() && p.is_relative()) d[key] = (path.parent_path() / p).lexically_normal().string();
      }
    }
  }
  return parse_config(j.dump());
}

std::string to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

std::vector<std::string> builtin_scenarios() {
  return {"fl-single-noattack", "fl-single-attack", "mmfl-drl-attack", "mmfl-drl-noattack",
          "mmfl-rnd-attack",    "mmfl-rnd-noattack", "mmfl-static-attack"};
}

Scenario resolve_scenario(const ExperimentConfig& config, const std::string& name,
                          const std::optional<std::string>& master_override) {
  Scenario s;
  s.name = name;
  s.master = master_override.value_or(config.models.master);
  std::optional<std::string> label;
  if (const auto it = config.scenarios.find(name); it != config.scenarios.end()) {
    const auto& o = it->second;
    s.selector = o.selector.value_or(config.selector_kind);
    s.attack = o.attack.value_or(config.attack.enabled);
    s.multi_model = o.multi_model.value_or(true);
    if (o.master && !master_override) s.master = *o.master;
    s.static_model = o.static_model.value_or(config.static_model);
    label = o.label;
  } else if (name == "fl-single-noattack" || name == "fl-single-attack") {
    s.selector = SelectorKind::static_model;
    s.multi_model = false;
    s.attack = name == "fl-single-attack";
  } else if (name.rfind("mmfl-", 0) == 0) {
    const auto rest = name.substr(5);
    const auto dash = rest.find('-');
    const auto kind = rest.substr(0, dash);
    const auto tail = dash == std::string::npos ? std::string() : rest.substr(dash + 1);
    if ((kind != "drl" && kind != "rnd" && kind != "static") || (tail != "attack" && tail != "noattack")) {
      throw ConfigError("unknown scenario '" + name + "'");
    }
    s.selector = kind == "drl" ? SelectorKind::drl
                 : kind == "rnd" ? SelectorKind::random
                                 : SelectorKind::static_model;
    s.attack = tail == "attack";
    s.multi_model = true;
    s.static_model = config.static_model;
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  if (s.static_model.empty() && s.multi_model) {
    // Multi-model static runs pin every device to the first non-master slave.
    for (const auto& id : config.models.slaves) {
      if (id != s.master) {
        s.static_model = id;
        break;
      }
    }
  }
  if (s.static_model.empty()) s.static_model = s.master;
  if (!has_spec(config.models, s.master)) {
    throw ConfigError("scenario '" + name + "': unknown master '" + s.master + "'");
  }
  if (s.multi_model) {
    const auto& slaves = config.models.slaves;
    if (s.selector == SelectorKind::static_model &&
        std::find(slaves.begin(), slaves.end(), s.static_model) == slaves.end()) {
      throw ConfigError("scenario '" + name + "': static model '" + s.static_model + "' is not a slave");
    }
    const bool master_is_slave = std::find(slaves.begin(), slaves.end(), s.master) != slaves.end();
    const std::size_t cap = fl::master_cap(config.network.devices, config.fl.t_max);
    if (master_is_slave && slaves.size() == 1 && cap < config.network.devices) {
      throw ConfigError("scenario '" + name + "': the only slave is the master and t_max < 1");
    }
    if (s.selector == SelectorKind::static_model && s.static_model == s.master && master_is_slave &&
        cap < config.network.devices) {
      throw ConfigError("scenario '" + name + "': assigning the master to every device needs t_max = 1");
    }
  }
  if (label) {
    s.label = *label;
  } else if (!s.multi_model) {
    s.label = "FL-" + s.master + (s.attack ? "-With Attack" : "");
  } else {
    const std::string kind = s.selector == SelectorKind::drl      ? "DRL"
                             : s.selector == SelectorKind::random ? "RND"
                                                                  : "STATIC";
    s.label = "MM-FL-" + kind + " (Master: " + s.master + ")" + (s.attack ? "" : "-No Attack");
  }
  return s;
}

// ---------------------------------------------------------------------------

Simulation::Simulation(const ExperimentConfig& config, const Scenario& scenario, std::uint64_t seed)
    : config_(config), scenario_(scenario), seed_(seed) {
  const auto& net = config_.network;
  const std::size_t n = net.devices;

  // models
  std::vector<nn::ModelSpec> slaves;
  if (scenario_.multi_model) {
    for (const auto& id : config_.models.slaves) slaves.push_back(config_.models.spec(id));
  } else {
    slaves.push_back(config_.models.spec(scenario_.master));
  }
  world_.catalog = fl::ModelCatalog::make(std::move(slaves), config_.models.spec(scenario_.master));
  t_max_ = scenario_.multi_model ? config_.fl.t_max : 1.0;

  protocol_.lr = config_.fl.lr;
  protocol_.lr_decay = config_.fl.lr_decay;
  protocol_.local_iterations = config_.fl.local_iterations;
  protocol_.kt_passes = config_.fl.kt_passes;
  protocol_.knowledge_transfer = scenario_.multi_model && config_.fl.knowledge_transfer;
  protocol_.signature_check = config_.fl.signature_check;
  protocol_.timing = config_.fl.timing;

  // data: fixed per seed so every scenario sees identical shards
  std::mt19937_64 data_rng(derive_seed(seed_, kDataStream));
  std::vector<data::Flow> flows;
  const auto& d = config_.data;
  if (d.source == DataSection::Source::synthetic) {
    flows = data::generate_synthetic(data_rng, d.features, n * d.flows_per_device + d.test_flows,
                                     d.class_sep, d.malicious_fraction);
  } else {
    const auto schema = d.schema_path.empty() ? data::CsvSchema::synthetic(world_.catalog.master.input_dim)
                                              : data::CsvSchema::load(d.schema_path);
    flows = data::load_csv(d.csv_path, schema);
  }
  const std::vector<std::size_t> sizes(n, d.flows_per_device);
  auto split = data::partition(flows, sizes, net.stations.size(), d.edge_flows, data_rng);
  test_ = std::move(split.test);

  std::mt19937_64 cpu_rng(derive_seed(seed_, kCpuStream));
  std::uniform_real_distribution<double> cpu(net.device_cpu_min_hz, net.device_cpu_max_hz);
  world_.devices.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    world_.devices[u].data = data::to_batch(split.devices[u]);
    world_.devices[u].cpu_hz = cpu(cpu_rng);
  }
  world_.stations = net.stations;
  world_.edges.resize(net.stations.size());
  for (std::size_t i = 0; i < net.stations.size(); ++i) {
    world_.edges[i].bs_id = net.stations[i].id;
    world_.edges[i].edge_data = std::move(split.edge[i]);
  }

  // one initialization reused by every episode
  std::mt19937_64 model_rng(derive_seed(seed_, kModelStream));
  for (const auto& s : world_.catalog.slaves) initial_slaves_.push_back(nn::init_model(s, model_rng));
  initial_global_ = world_.catalog.master_slot ? initial_slaves_[*world_.catalog.master_slot]
                                               : nn::init_model(world_.catalog.master, model_rng);

  if (scenario_.attack) {
    auto attack = config_.attack;
    attack.enabled = true;
    adversary_.emplace(attack, derive_seed(seed_, kAttackStream));
  }
  begin_episode(0);
}

void Simulation::begin_episode(std::size_t episode) {
  const auto& net = config_.network;
  mobility_rng_.seed(derive_seed(seed_, kMobilityStream, episode));
  poses_.clear();
  for (std::size_t u = 0; u < net.devices; ++u) {
    poses_.push_back(net::random_pose(net.grid, mobility_rng_, net.mean_speed_mps, net.speed_spread));
  }
  world_.network = net::snapshot(poses_, world_.stations, net.channel, 0);
  world_.global = initial_global_;
  for (auto& edge : world_.edges) {
    edge.slaves = initial_slaves_;
    edge.master = initial_global_;
  }
  for (auto& dev : world_.devices) dev.held = initial_global_;
  world_.lr = config_.fl.lr;
  if (adversary_) {
    adversary_.emplace(adversary_->config(), derive_seed(seed_, kAttackStream, episode));
    adversary_->begin_episode(episode, net.devices);
  }
  epoch_ = 0;
}

fl::AdversaryHook Simulation::hook() {
  if (!adversary_) return {};
  return [this](std::vector<fl::Upload>& uploads, const nn::ModelWeights& global) {
    adversary_->attack(uploads, global);
  };
}

fl::EpochMetrics Simulation::step(const fl::AssignmentPlan& plan, bool with_accuracy) {
  const std::span<const data::Flow> test = with_accuracy ? std::span<const data::Flow>(test_)
                                                         : std::span<const data::Flow>();
  auto metrics = fl::run_epoch(world_, plan, hook(), protocol_, test);
  const auto& net = config_.network;
  poses_ = net::step_mobility(std::move(poses_), net.grid, mobility_rng_, net.epoch_seconds, net.turns);
  ++epoch_;
  world_.network = net::snapshot(poses_, world_.stations, net.channel, epoch_);
  return metrics;
}

fl::EpochMetrics Simulation::preview(const fl::AssignmentPlan& plan) const {
  fl::WorldState world = world_;
  std::optional<attack::Adversary> adversary = adversary_;
  fl::AdversaryHook h;
  if (adversary) {
    h = [&adversary](std::vector<fl::Upload>& uploads, const nn::ModelWeights& global) {
      adversary->attack(uploads, global);
    };
  }
  return fl::run_epoch(world, plan, h, protocol_);
}

fl::AssignmentPlan Simulation::initial_plan() const {
  const auto& catalog = world_.catalog;
  std::size_t model = 0;
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    if (!catalog.is_master(j)) {
      model = j;
      break;
    }
  }
  const std::vector<std::size_t> models(devices(), model);
  return fl::AssignmentPlan::from_indices(0, models, catalog);
}

std::optional<attack::CompromiseSet> Simulation::compromised() const {
  if (!adversary_) return std::nullopt;
  return adversary_->compromised();
}

// ---------------------------------------------------------------------------

namespace {

struct RepetitionResult {
  std::vector<double> episode_reward;
  std::vector<EpochRow> epochs;
  std::vector<MitigationRow> mitigation;
  std::vector<AttackRow> attacks;
  double beta = 0.0;
  double t_ref = 0.0;
};

RepetitionResult run_repetition(const ExperimentConfig& config, const Scenario& scenario,
                                std::uint64_t seed, std::size_t repetition) {
  RepetitionResult out;
  Simulation sim(config, scenario, seed);
  const auto& catalog = sim.catalog();
  const std::size_t n = sim.devices();

  select::SelectorConfig sc = config.selector;
  sc.alpha = config.fl.alpha;
  sc.beta = config.fl.beta.value_or(1.0);
  sc.t_max = sim.t_max();
  const bool auto_beta = !config.fl.beta.has_value();
  bool beta_set = !auto_beta;

  std::optional<select::DrlAgent> agent;
  if (scenario.selector == SelectorKind::drl) {
    agent.emplace(n, config.network.stations.size(), catalog, sc, derive_seed(seed, kSelectorStream, 0));
  }
  std::mt19937_64 select_rng(derive_seed(seed, kSelectorStream, 1));
  std::size_t static_slot = 0;
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    if (catalog.slaves[j].model_id == scenario.static_model) static_slot = j;
  }
  double penalty_scale = 1.0;

  auto run_episode = [&](std::size_t episode, double epsilon, bool learn, bool evaluate) {
    sim.begin_episode(episode);
    if (const auto set = sim.compromised(); set && evaluate) {
      for (std::size_t k = 0; k < set->devices.size(); ++k) {
        out.attacks.push_back({repetition, episode, set->devices[k], set->lambdas[k]});
      }
    }
    fl::AssignmentPlan previous = sim.initial_plan();
    double cumulative = 0.0;
    for (std::size_t epoch = 0; epoch < config.fl.epochs; ++epoch) {
      select::StateFeatures state;
      fl::AssignmentPlan plan;
      switch (scenario.selector) {
        case SelectorKind::drl:
          state = agent->observe(sim.network(), previous);
          plan = agent->choose(state, epsilon, epoch);
          break;
        case SelectorKind::random:
          plan = select::random_selector(select_rng, n, catalog, sim.t_max(), epoch);
          break;
        case SelectorKind::static_model:
          plan = select::static_selector(static_slot, n, catalog, sim.t_max(), epoch);
          break;
      }
      const bool feasible = fl::validate_plan(plan, catalog, n, sim.t_max()).empty();
      const auto covered = sim.network().association;
      const auto m = sim.step(plan, evaluate);

      if (!beta_set) {
        out.t_ref = m.timing.mean_recognition();
        sc.beta = out.t_ref > 0.0 ? 1.0 / out.t_ref : 1.0;
        beta_set = true;
      }
      std::vector<double> losses, times;
      for (std::size_t u = 0; u < n; ++u) {
        if (!covered[u]) continue;
        losses.push_back(m.device_loss[u]);
        times.push_back(m.timing.recognition[u]);
      }
      double objective = 0.0;
      for (std::size_t k = 0; k < losses.size(); ++k) objective += sc.alpha * losses[k] + sc.beta * times[k];
      penalty_scale = std::max(penalty_scale, objective);
      const double r = select::reward(losses, times, sc, feasible, penalty_scale);
      cumulative += r;

      if (learn && agent) {
        select::Transition t{state, plan, r, agent->observe(sim.network(), plan)};
        agent->learn(t);
      }
      if (evaluate) {
        for (const auto& ex : m.mitigation.excluded) {
          out.mitigation.push_back({repetition, episode, epoch, ex.device, ex.reason, ex.poisoned});
        }
        EpochRow row;
        row.epoch = epoch;
        row.global_loss = m.global_loss;
        row.accuracy = m.accuracy.value_or(0.0);
        row.mean_recognition = m.timing.mean_recognition();
        row.max_recognition = m.timing.max_recognition();
        row.excluded = static_cast<double>(m.mitigation.excluded.size());
        row.reward = r;
        row.master_assignments = static_cast<double>(m.master_assignments);
        out.epochs.push_back(row);
      }
      previous = plan;
    }
    return cumulative;
  };

  if (agent) {
    for (std::size_t e = 0; e < config.episodes; ++e) {
      const double eps =
          select::exploration_rate(e, config.episodes, sc.epsilon_start, sc.epsilon_end);
      out.episode_reward.push_back(run_episode(e, eps, true, false));
    }
    run_episode(config.episodes, 0.0, false, true);
  } else {
    out.episode_reward.push_back(run_episode(0, 0.0, false, true));
  }
  out.beta = sc.beta;
  return out;
}

}  // namespace

RunRecord run_scenario(const ExperimentConfig& config, const Scenario& scenario, std::uint64_t seed) {
  if (const auto errors = validate_config(config); !errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  RunRecord rec;
  rec.scenario = scenario.name;
  rec.label = scenario.label;
  rec.seed = seed;
  rec.repetitions = config.repetitions;
  rec.alpha = config.fl.alpha;
  rec.config_json = to_json(config);
  rec.timestamp = now_iso8601();

  const double reps = static_cast<double>(config.repetitions);
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    auto res = run_repetition(config, scenario, seed + r, r);
    if (rec.episode_reward.empty()) rec.episode_reward.assign(res.episode_reward.size(), 0.0);
    for (std::size_t e = 0; e < res.episode_reward.size(); ++e) {
      rec.episode_reward[e] += res.episode_reward[e] / reps;
    }
    if (rec.epochs.empty()) {
      rec.epochs.resize(res.epochs.size());
      for (std::size_t k = 0; k < res.epochs.size(); ++k) rec.epochs[k].epoch = res.epochs[k].epoch;
    }
    for (std::size_t k = 0; k < res.epochs.size(); ++k) {
      auto& a = rec.epochs[k];
      const auto& b = res.epochs[k];
      a.global_loss += b.global_loss / reps;
      a.accuracy += b.accuracy / reps;
      a.mean_recognition += b.mean_recognition / reps;
      a.max_recognition += b.max_recognition / reps;
      a.excluded += b.excluded / reps;
      a.reward += b.reward / reps;
      a.master_assignments += b.master_assignments / reps;
    }
    rec.mitigation.insert(rec.mitigation.end(), res.mitigation.begin(), res.mitigation.end());
    rec.attacks.insert(rec.attacks.end(), res.attacks.begin(), res.attacks.end());
    rec.beta.push_back(res.beta);
    rec.t_ref.push_back(res.t_ref);
  }
  return rec;
}

void emit_metrics(const RunRecord& rec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
  const std::string label = csv_field(rec.label);
  {
    auto out = open_out(dir / "reward.csv");
    out << "episode,cumulative_reward\n";
    for (std::size_t e = 0; e < rec.episode_reward.size(); ++e) {
      out << e << ',' << fmt(rec.episode_reward[e]) << '\n';
    }
  }
  {
    auto out = open_out(dir / "accuracy.csv");
    out << "epoch,scenario,accuracy\n";
    for (const auto& r : rec.epochs) out << r.epoch << ',' << label << ',' << fmt(r.accuracy) << '\n';
  }
  {
    auto out = open_out(dir / "timing.csv");
    out << "epoch,scenario,mean_T_Int\n";
    for (const auto& r : rec.epochs) out << r.epoch << ',' << label << ',' << fmt(r.mean_recognition) << '\n';
  }
  {
    auto out = open_out(dir / "metrics.csv");
    out << "epoch,scenario,F,accuracy,mean_T_Int,max_T_Int,excluded,reward,master_assignments\n";
    for (const auto& r : rec.epochs) {
      out << r.epoch << ',' << label << ',' << fmt(r.global_loss) << ',' << fmt(r.accuracy) << ','
          << fmt(r.mean_recognition) << ',' << fmt(r.max_recognition) << ',' << fmt(r.excluded) << ','
          << fmt(r.reward) << ',' << fmt(r.master_assignments) << '\n';
    }
  }
  {
    auto out = open_out(dir / "mitigation.csv");
    out << "repetition,episode,epoch,device,reason,poisoned\n";
    for (const auto& m : rec.mitigation) {
      out << m.repetition << ',' << m.episode << ',' << m.epoch << ',' << m.device << ','
          << csv_field(m.reason) << ',' << (m.poisoned ? 1 : 0) << '\n';
    }
  }
  {
    auto out = open_out(dir / "attack.csv");
    out << "repetition,episode,device,lambda\n";
    for (const auto& a : rec.attacks) {
      out << a.repetition << ',' << a.episode << ',' << a.device << ',' << fmt(a.lambda) << '\n';
    }
  }
  {
    json manifest = {
        {"scenario", rec.scenario},
        {"label", rec.label},
        {"seed", rec.seed},
        {"repetitions", rec.repetitions},
        {"repetition_seeds", json::array()},
        {"alpha", rec.alpha},
        {"beta", rec.beta},
        {"t_ref", rec.t_ref},
        {"timestamp", rec.timestamp},
        {"config", rec.config_json.empty() ? json::object() : json::parse(rec.config_json)},
    };
    for (std::size_t r = 0; r < rec.repetitions; ++r) manifest["repetition_seeds"].push_back(rec.seed + r);
    auto out = open_out(dir / "run.json");
    out << manifest.dump(2) << '\n';
  }
}

RunRecord load_run(const std::filesystem::path& dir) {
  RunRecord rec;
  {
    std::ifstream in(dir / "run.json");
    if (!in) throw IoError("cannot read " + (dir / "run.json").string());
    json j;
    try {
      j = json::parse(in);
      rec.scenario = j.at("scenario").get<std::string>();
      rec.label = j.at("label").get<std::string>();
      rec.seed = j.at("seed").get<std::uint64_t>();
      rec.repetitions = j.at("repetitions").get<std::size_t>();
      rec.alpha = j.value("alpha", 1.0);
      rec.beta = j.value("beta", std::vector<double>{});
      rec.t_ref = j.value("t_ref", std::vector<double>{});
      rec.timestamp = j.value("timestamp", std::string());
      if (j.contains("config")) rec.config_json = j["config"].dump(2);
    } catch (const json::exception& e) {
      throw InputError((dir / "run.json").string() + ": " + e.what());
    }
  }
  auto read_rows = [&](const char* name, std::size_t columns, auto&& fn) {
    const auto path = dir / name;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != columns) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(columns) + " columns");
      }
      try {
        fn(cells);
      } catch (const std::logic_error&) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
      }
    }
  };
  read_rows("metrics.csv", 9, [&](const std::vector<std::string>& c) {
    EpochRow r;
    r.epoch = std::stoull(c[0]);
    r.global_loss = std::stod(c[2]);
    r.accuracy = std::stod(c[3]);
    r.mean_recognition = std::stod(c[4]);
    r.max_recognition = std::stod(c[5]);
    r.excluded = std::stod(c[6]);
    r.reward = std::stod(c[7]);
    r.master_assignments = std::stod(c[8]);
    rec.epochs.push_back(r);
  });
  read_rows("reward.csv", 2, [&](const std::vector<std::string>& c) {
    rec.episode_reward.push_back(std::stod(c[1]));
  });
  return rec;
}

std::vector<Expectation> parse_expectations(const std::string& text) {
  std::vector<Expectation> out;
  try {
    const auto j = json::parse(text);
    for (const auto& e : j.at("expect")) {
      Expectation x;
      x.metric = e.at("metric").get<std::string>();
      x.higher = e.at("higher").get<std::string>();
      x.lower = e.at("lower").get<std::string>();
      if (e.contains("epoch")) x.epoch = e["epoch"].get<std::size_t>();
      if (x.metric != "accuracy" && x.metric != "mean_T_Int") {
        throw ConfigError("expectation metric must be accuracy or mean_T_Int, got '" + x.metric + "'");
      }
      out.push_back(std::move(x));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid ordering file: ") + e.what());
  }
  return out;
}

double Comparison::accuracy_delta(std::size_t s, std::size_t k) const {
  return accuracy.at(s).at(k) - accuracy.at(0).at(k);
}

double Comparison::recognition_delta(std::size_t s, std::size_t k) const {
  return mean_recognition.at(s).at(k) - mean_recognition.at(0).at(k);
}

Comparison compare_scenarios(std::span<const RunRecord> records, std::span<const Expectation> expectations) {
  if (records.size() < 2) throw InputError("compare needs at least two runs");
  Comparison c;
  for (const auto& r : records.front().epochs) c.epochs.push_back(r.epoch);
  for (const auto& rec : records) {
    std::vector<std::size_t> epochs;
    for (const auto& r : rec.epochs) epochs.push_back(r.epoch);
    if (epochs != c.epochs) {
      throw InputError("runs '" + records.front().label + "' and '" + rec.label + "' cover different epochs");
    }
    c.scenarios.push_back(rec.label);
    c.accuracy.emplace_back();
    c.mean_recognition.emplace_back();
    for (const auto& r : rec.epochs) {
      c.accuracy.back().push_back(r.accuracy);
      c.mean_recognition.back().push_back(r.mean_recognition);
    }
  }
  if (c.epochs.empty()) throw InputError("runs share no epochs");

  auto index_of = [&](const std::string& label) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < c.scenarios.size(); ++i) {
      if (c.scenarios[i] == label) return i;
    }
    return std::nullopt;
  };
  for (const auto& e : expectations) {
    const auto hi = index_of(e.higher);
    const auto lo = index_of(e.lower);
    if (!hi || !lo) {
      c.violations.push_back("expectation names a scenario that is not among the runs: '" +
                             (hi ? e.lower : e.higher) + "'");
      continue;
    }
    std::size_t k = c.epochs.size() - 1;
    if (e.epoch) {
      const auto it = std::find(c.epochs.begin(), c.epochs.end(), *e.epoch);
      if (it == c.epochs.end()) {
        c.violations.push_back("expectation epoch " + std::to_string(*e.epoch) + " is not in the runs");
        continue;
      }
      k = static_cast<std::size_t>(it - c.epochs.begin());
    }
    const auto& table = e.metric == "accuracy" ? c.accuracy : c.mean_recognition;
    if (table[*hi][k] < table[*lo][k]) {
      c.violations.push_back(e.metric + " at epoch " + std::to_string(c.epochs[k]) + ": '" + e.higher +
                             "' (" + fmt(table[*hi][k]) + ") is below '" + e.lower + "' (" +
                             fmt(table[*lo][k]) + ")");
    }
  }
  return c;
}

void write_comparison(std::ostream& out, const Comparison& c) {
  out << "epoch,scenario,accuracy,accuracy_delta,mean_T_Int,mean_T_Int_delta\n";
  for (std::size_t k = 0; k < c.epochs.size(); ++k) {
    for (std::size_t s = 0; s < c.scenarios.size(); ++s) {
      out << c.epochs[k] << ',' << csv_field(c.scenarios[s]) << ',' << fmt(c.accuracy[s][k]) << ','
          << fmt(c.accuracy_delta(s, k)) << ',' << fmt(c.mean_recognition[s][k]) << ','
          << fmt(c.recognition_delta(s, k)) << '\n';
    }
  }
}

}  // namespace mmfl::exp
