// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   mmfl_acceptance [config.json]
//
// The config (default: configs/acceptance.json) drives the end-to-end
// criteria; the property suites build their own inputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mmfl/adversary.hpp"
#include "mmfl/error.hpp"
#include "mmfl/experiment.hpp"
#include "mmfl/protocol.hpp"
#include "mmfl/selector.hpp"
#include "mmfl/tensor_nn.hpp"
#include "mmfl/timing.hpp"

#ifndef MMFL_CONFIG_DIR
#define MMFL_CONFIG_DIR "configs"
#endif

using namespace mmfl;
using nn::CellKind;
using nn::ModelSpec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

nn::Sequence random_seq(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Sequence s(rows, cols);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  return s;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> in_dim(1, 5), hid(1, 6), dense_hid(0, 8);
  double worst = 0.0;
  std::size_t nets = 0, max_params = 0;
  for (int k = 0; k < 24; ++k) {
    const bool recurrent = k % 2 == 0;
    const ModelSpec spec{"net", in_dim(rng), recurrent ? CellKind::gated_recurrent : CellKind::dense,
                         recurrent ? hid(rng) : dense_hid(rng), 1};
    const auto w = nn::init_model(spec, rng, 5.0);
    max_params = std::max(max_params, w.size());
    nn::LabeledBatch batch;
    for (int i = 0; i < 4; ++i) {
      batch.inputs.push_back(random_seq(rng, recurrent ? 5 : 1, static_cast<Eigen::Index>(spec.input_dim)));
      batch.labels.push_back(i % 2);
    }
    const auto analytic = nn::loss_gradient(w, batch);
    auto probe = w;
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
      probe.params[i] = w.params[i] + h;
      const double up = nn::loss(probe, batch);
      probe.params[i] = w.params[i] - h;
      const double down = nn::loss(probe, batch);
      probe.params[i] = w.params[i];
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    ++nets;
  }
  return {worst < 1e-4 && max_params <= 500,
          std::to_string(nets) + " nets (<= " + std::to_string(max_params) +
              " params), max rel err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 2

Outcome mitigation(const exp::ExperimentConfig& base) {
  auto config = base;
  const auto scenario = exp::resolve_scenario(config, "mmfl-rnd-attack");
  exp::Simulation sim(config, scenario, config.seed);
  const auto& catalog = sim.catalog();
  std::size_t slave = 0;
  while (catalog.is_master(slave)) ++slave;

  std::mt19937_64 rng(202);
  std::size_t epochs = 0, poisoned = 0, poisoned_in = 0, benign = 0, benign_out = 0;
  for (std::size_t episode = 0; epochs < 50; ++episode) {
    sim.begin_episode(episode);
    const auto set = *sim.compromised();
    for (std::size_t e = 0; e < 10 && epochs < 50; ++e, ++epochs) {
      auto models = select::random_selector(rng, sim.devices(), catalog, sim.t_max(), e).indices();
      for (std::size_t u : set.devices) models[u] = slave;
      const auto plan = fl::AssignmentPlan::from_indices(e, models, catalog);
      const auto m = sim.step(plan, false);
      poisoned += m.poisoned_uploads;
      poisoned_in += m.poisoned_accepted;
      benign += m.uploads - m.poisoned_uploads;
      for (const auto& ex : m.mitigation.excluded) benign_out += ex.poisoned ? 0 : 1;
    }
  }
  const double caught = poisoned ? 1.0 - static_cast<double>(poisoned_in) / poisoned : 0.0;
  return {poisoned > 0 && poisoned_in == 0 && benign_out == 0,
          std::to_string(epochs) + " epochs, " + std::to_string(poisoned) + " poisoned (" +
              fmt("%.0f%%", 100.0 * caught) + " excluded), " + std::to_string(benign) + " benign (" +
              std::to_string(benign_out) + " excluded)"};
}

// ---------------------------------------------------------------- 3

Outcome constraints() {
  const ModelSpec small{"small", 4, CellKind::gated_recurrent, 2, 1};
  const ModelSpec large{"large", 4, CellKind::gated_recurrent, 3, 1};
  const auto catalog = fl::ModelCatalog::make({small, large}, large);
  const std::size_t n = 10, m = 2;
  const double t_max = 0.6;
  select::SelectorConfig sc;
  sc.t_max = t_max;
  select::DrlAgent agent(n, m, catalog, sc, 303);
  std::mt19937_64 rng(304);
  std::uniform_real_distribution<double> rate(0.0, 1.5e9);

  std::size_t bad = 0, invocations = 0, max_masters = 0;
  auto check = [&](const fl::AssignmentPlan& p) {
    ++invocations;
    bool ok = fl::validate_plan(p, catalog, n, t_max).empty() && p.devices() == n;
    for (const auto& row : p.selection) {
      ok = ok && std::accumulate(row.begin(), row.end(), 0) == 1;
    }
    max_masters = std::max(max_masters, p.master_count(catalog));
    bad += ok ? 0 : 1;
  };

  fl::AssignmentPlan previous = select::random_selector(rng, n, catalog, t_max);
  for (int i = 0; i < 500; ++i) {
    net::NetworkSnapshot snap;
    snap.uplink.resize(n, m);
    for (Eigen::Index k = 0; k < snap.uplink.size(); ++k) snap.uplink.data()[k] = rate(rng);
    snap.downlink = snap.uplink;
    snap.distance = snap.uplink;
    snap.association.assign(n, std::size_t{0});
    // Every fourth call pushes all nets toward the master to exercise repair.
    if (i % 4 == 0) {
      for (auto& net : agent.ensemble().nets) net.params[net.params.size() - 1] += 1.0;
    }
    const double eps = (i % 3) * 0.5;
    const auto plan = agent.choose(agent.observe(snap, previous), eps, static_cast<std::size_t>(i));
    check(plan);
    previous = plan;
  }
  for (int i = 0; i < 500; ++i) check(select::random_selector(rng, n, catalog, t_max));
  return {bad == 0, std::to_string(invocations) + " plans, " + std::to_string(bad) +
                        " infeasible, max masters " + std::to_string(max_masters) + " (cap " +
                        std::to_string(fl::master_cap(n, t_max)) + ")"};
}

// ---------------------------------------------------------------- 4

Outcome aggregation() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> count(1, 8), size(0, 100), dim(1, 64);
  std::normal_distribution<double> val(0.0, 3.0);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const ModelSpec spec{"v", dim(rng), CellKind::dense, 0, 1};
    const std::size_t p = nn::param_count(spec);
    const std::size_t k = count(rng);
    std::vector<fl::Upload> ups;
    std::vector<nn::ModelWeights> masters;
    for (std::size_t i = 0; i < k; ++i) {
      nn::ModelWeights w{spec, std::vector<double>(p)};
      for (double& x : w.params) x = val(rng);
      // Every tenth case carries no data sizes and must fall back to the plain mean.
      ups.push_back({i, w, c % 10 == 0 ? 0 : size(rng), false});
      masters.push_back(w);
    }
    const auto partial = fl::partial_aggregate(ups, masters[0]);
    const auto cloud = fl::cloud_aggregate(masters);
    double total = 0.0;
    for (const auto& u : ups) total += static_cast<double>(u.batch_size);
    for (std::size_t j = 0; j < p; ++j) {
      double weighted = 0.0, plain = 0.0, scale = 0.0;
      for (const auto& u : ups) {
        const double x = u.declared_weights.params[j];
        weighted += (total > 0.0 ? static_cast<double>(u.batch_size) : 1.0) * x;
        plain += x;
        scale = std::max(scale, std::abs(x));
      }
      weighted /= total > 0.0 ? total : static_cast<double>(k);
      plain /= static_cast<double>(k);
      worst = std::max(worst, std::abs(partial.params[j] - weighted) / scale);
      worst = std::max(worst, std::abs(cloud.params[j] - plain) / scale);
    }
  }
  return {worst <= 1e-12, "100 cases, max rel err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 5

struct TimingCase {
  std::vector<timing::DeviceLoad> devices;
  std::vector<timing::StationLoad> stations;
  std::vector<double> slave_params;
  double master_params = 0.0;
  std::size_t k = 1;
  bool kt = true;
  timing::ComputeProfile prof;
};

TimingCase draw_timing(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  TimingCase c;
  const std::size_t m = 1 + static_cast<std::size_t>(u(rng) * 3);
  const std::size_t n = 3 + static_cast<std::size_t>(u(rng) * 8);
  const std::size_t l = 1 + static_cast<std::size_t>(u(rng) * 3);
  for (std::size_t i = 0; i < m; ++i) {
    c.stations.push_back({in(1e9, 4e9), static_cast<std::size_t>(in(0, 3000))});
  }
  for (std::size_t j = 0; j < l; ++j) c.slave_params.push_back(std::floor(in(1e3, 2e4)));
  c.master_params = c.slave_params[static_cast<std::size_t>(u(rng) * l)];
  for (std::size_t d = 0; d < n; ++d) {
    timing::DeviceLoad dev;
    if (u(rng) > 0.15) dev.station = static_cast<std::size_t>(u(rng) * m);
    dev.slave = static_cast<std::size_t>(u(rng) * l);
    dev.planned_params = c.slave_params[dev.slave];
    dev.data_size = static_cast<std::size_t>(in(10, 1000));
    dev.cpu_hz = in(1.5e9, 2.5e9);
    dev.uplink_bps = in(1e6, 1e9);
    dev.downlink_bps = in(1e6, 1e9);
    c.devices.push_back(dev);
  }
  c.devices[0].station = 0;  // at least one participant
  c.k = 1 + static_cast<std::size_t>(u(rng) * 3);
  c.kt = u(rng) > 0.3;
  c.prof.train_cycles_per_param = in(0.5, 2.0);
  c.prof.inference_cycles_per_param = in(5.0, 20.0);
  c.prof.label_cycles_per_param = in(0.001, 0.01);
  c.prof.edge_train_cycles_per_param = in(0.005, 0.05);
  c.prof.aggregate_cycles_per_param = in(0.5, 2.0);
  c.prof.cloud_cpu_hz = in(5e9, 2e10);
  c.prof.cloud_rate_bps = in(5e7, 5e8);
  c.prof.barrier = u(rng) > 0.5 ? timing::BarrierMode::shared_max : timing::BarrierMode::per_device;
  return c;
}

// Straight transcription of the latency equations, sizes in parameters and
// rates converted from bit/s at the profile's bytes per parameter.
std::vector<double> oracle_recognition(const TimingCase& c) {
  const auto& p = c.prof;
  const double bits = 8.0 * p.bytes_per_param;
  const double wc = c.master_params;
  const double rc = p.cloud_rate_bps / bits;
  double slowest = 0.0;
  for (std::size_t m = 0; m < c.stations.size(); ++m) {
    const double f = c.stations[m].cpu_hz;
    const double de = static_cast<double>(c.stations[m].edge_set_size);
    double knw = 0.0;
    if (c.kt) {
      for (double ws : c.slave_params) {
        knw += de * (p.label_cycles_per_param * ws) / f + de * (p.edge_train_cycles_per_param * wc) / f;
      }
    }
    double upload = 0.0;
    std::vector<double> x(c.slave_params.size(), 0.0);
    for (const auto& d : c.devices) {
      if (d.station != m) continue;
      upload = std::max(upload, d.planned_params / (d.uplink_bps / bits));
      x[d.slave] += 1.0;
    }
    double agg = upload;
    for (std::size_t j = 0; j < x.size(); ++j) {
      agg += x[j] * c.slave_params[j] * p.aggregate_cycles_per_param / f;
    }
    slowest = std::max(slowest, agg + knw + wc / rc);
  }
  const double t_ag =
      slowest + static_cast<double>(c.stations.size()) * wc * p.aggregate_cycles_per_param / p.cloud_cpu_hz;

  double max_loc = 0.0;
  std::vector<double> loc(c.devices.size(), 0.0);
  for (std::size_t u = 0; u < c.devices.size(); ++u) {
    const auto& d = c.devices[u];
    if (!d.station) continue;
    loc[u] = static_cast<double>(d.data_size) * (p.train_cycles_per_param * d.planned_params) / d.cpu_hz;
    max_loc = std::max(max_loc, loc[u]);
  }
  std::vector<double> out(c.devices.size(), 0.0);
  for (std::size_t u = 0; u < c.devices.size(); ++u) {
    const auto& d = c.devices[u];
    if (!d.station) continue;
    const double down = wc / rc + d.planned_params / (d.downlink_bps / bits);
    const double train = p.barrier == timing::BarrierMode::shared_max ? max_loc : loc[u];
    out[u] = static_cast<double>(c.k) * train + t_ag + down +
             p.inference_cycles_per_param * d.planned_params / d.cpu_hz;
  }
  return out;
}

timing::EpochTiming evaluate(const TimingCase& c) {
  return timing::evaluate_epoch(c.devices, c.stations, c.slave_params, c.master_params, c.k, c.kt,
                                c.prof);
}

Outcome timing_model() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto c = draw_timing(rng);
    const auto got = evaluate(c).recognition;
    const auto want = oracle_recognition(c);
    for (std::size_t u = 0; u < want.size(); ++u) {
      worst = std::max(worst, std::abs(got[u] - want[u]) / std::max(std::abs(want[u]), 1e-300));
    }
  }

  // Perturbations that can only slow an epoch down.
  std::uniform_real_distribution<double> shrink(0.1, 0.9);
  std::size_t broken = 0;
  for (int i = 0; i < 100; ++i) {
    auto c = draw_timing(rng);
    auto slower = c;
    auto& d = slower.devices[0];
    switch (i % 5) {
      case 0: d.uplink_bps *= shrink(rng); break;
      case 1: d.downlink_bps *= shrink(rng); break;
      case 2: d.data_size *= 2; break;
      case 3: slower.stations[0].cpu_hz *= shrink(rng); break;
      case 4: slower.prof.cloud_rate_bps *= shrink(rng); break;
    }
    const auto a = evaluate(c), b = evaluate(slower);
    if (b.recognition[0] < a.recognition[0] || b.mean_recognition() < a.mean_recognition()) ++broken;
  }
  return {worst <= 1e-12 && broken == 0,
          "10 draws, max rel err " + fmt("%.2e", worst) + "; " + std::to_string(100 - broken) +
              "/100 monotone pairs"};
}

// ---------------------------------------------------------------- 6

Outcome drl_toy() {
  const ModelSpec small{"small", 2, CellKind::gated_recurrent, 1, 1};
  const ModelSpec large{"large", 2, CellKind::gated_recurrent, 2, 1};
  const auto catalog = fl::ModelCatalog::make({small, large}, large);
  const std::size_t n = 2;
  const double t_max = 0.6;
  // Model 0 has lower loss and lower time on every device.
  const double loss[2][2] = {{0.2, 0.6}, {0.3, 0.5}};
  const double time[2][2] = {{1.0, 1.8}, {1.2, 1.6}};

  select::SelectorConfig sc;
  sc.t_max = t_max;
  sc.hidden = 8;
  net::NetworkSnapshot snap;
  snap.uplink.resize(2, 1);
  snap.uplink << 4e8, 9e8;
  snap.downlink = snap.uplink;
  snap.distance = snap.uplink;
  snap.association.assign(n, std::size_t{0});

  auto outcome = [&](const fl::AssignmentPlan& p, std::vector<double>& f, std::vector<double>& t) {
    const auto m = p.indices();
    f = {loss[0][m[0]], loss[1][m[1]]};
    t = {time[0][m[0]], time[1][m[1]]};
  };
  const auto oracle = select::brute_force_selector(n, catalog, t_max, [&](const fl::AssignmentPlan& p) {
    std::vector<double> f, t;
    outcome(p, f, t);
    return sc.alpha * (f[0] + f[1]) + sc.beta * (t[0] + t[1]);
  });

  select::DrlAgent agent(n, 1, catalog, sc, 606);
  const std::size_t episodes = 200, epochs = 10;
  for (std::size_t e = 0; e < episodes; ++e) {
    const double eps = select::exploration_rate(e, episodes, sc.epsilon_start, sc.epsilon_end);
    auto previous = fl::AssignmentPlan::from_indices(0, std::vector<std::size_t>(n, 0), catalog);
    for (std::size_t k = 0; k < epochs; ++k) {
      const auto state = agent.observe(snap, previous);
      const auto plan = agent.choose(state, eps, k);
      std::vector<double> f, t;
      outcome(plan, f, t);
      const bool feasible = fl::validate_plan(plan, catalog, n, t_max).empty();
      agent.learn({state, plan, select::reward(f, t, sc, feasible), agent.observe(snap, plan)});
      previous = plan;
    }
  }
  auto previous = fl::AssignmentPlan::from_indices(0, std::vector<std::size_t>(n, 1), catalog);
  std::size_t match = 0;
  for (std::size_t k = 0; k < 50; ++k) {
    const auto plan = agent.choose(agent.observe(snap, previous), 0.0, k);
    match += plan.indices() == oracle.indices() ? 1 : 0;
    previous = plan;
  }
  return {match >= 45, std::to_string(match) + "/50 greedy plans match brute force"};
}

// ---------------------------------------------------------------- 7-10, 12

double final_accuracy(const exp::RunRecord& r) { return r.epochs.back().accuracy; }

double mean_recognition(const exp::RunRecord& r) {
  double s = 0.0;
  for (const auto& e : r.epochs) s += e.mean_recognition;
  return s / static_cast<double>(r.epochs.size());
}

exp::RunRecord run(const exp::ExperimentConfig& c, const std::string& name,
                   const std::optional<std::string>& master = std::nullopt) {
  return exp::run_scenario(c, exp::resolve_scenario(c, name, master), c.seed);
}

Outcome attack_impact(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 5;
  const double clean = final_accuracy(run(c, "fl-single-noattack"));
  const double hit = final_accuracy(run(c, "fl-single-attack"));
  const double drop = (clean - hit) / clean;
  return {drop >= 0.30, "clean " + fmt("%.3f", clean) + ", attacked " + fmt("%.3f", hit) +
                            ", relative drop " + fmt("%.1f%%", 100.0 * drop)};
}

Outcome defense_ordering(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 5;
  const double drl = final_accuracy(run(c, "mmfl-drl-attack"));
  const double rnd = final_accuracy(run(c, "mmfl-rnd-attack"));
  const double fl = final_accuracy(run(c, "fl-single-attack"));
  const double clean = final_accuracy(run(c, "fl-single-noattack"));
  const bool ok = drl >= rnd && rnd >= fl && drl >= clean - 0.05;
  return {ok, "DRL " + fmt("%.3f", drl) + ", RND " + fmt("%.3f", rnd) + ", FL attacked " +
                  fmt("%.3f", fl) + ", FL clean " + fmt("%.3f", clean)};
}

Outcome recognition_ordering(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 5;
  const auto& slaves = c.models.slaves;
  const std::string large = c.models.master;
  const std::string small = slaves[0] == large ? slaves[1] : slaves[0];
  const double mm_large = mean_recognition(run(c, "mmfl-rnd-noattack", large));
  const double fl_large = mean_recognition(run(c, "fl-single-noattack", large));
  const double mm_small = mean_recognition(run(c, "mmfl-rnd-noattack", small));
  const double fl_small = mean_recognition(run(c, "fl-single-noattack", small));
  return {mm_large < fl_large && mm_small > fl_small,
          "master " + large + ": MM " + fmt("%.4f", mm_large) + " s vs FL " + fmt("%.4f", fl_large) +
              " s; master " + small + ": MM " + fmt("%.4f", mm_small) + " s vs FL " +
              fmt("%.4f", fl_small) + " s"};
}

Outcome reward_curve(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 1;
  c.episodes = 200;
  const auto r = run(c, "mmfl-drl-attack").episode_reward;
  const double first = std::accumulate(r.begin(), r.begin() + 20, 0.0) / 20.0;
  const double last = std::accumulate(r.end() - 20, r.end(), 0.0) / 20.0;
  return {last > first, "first-20 mean " + fmt("%.2f", first) + ", last-20 mean " + fmt("%.2f", last)};
}

// ---------------------------------------------------------------- 11

Outcome fedavg(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 1;
  c.attack.enabled = false;
  c.fl.knowledge_transfer = false;
  c.models.slaves = {c.models.master};
  // One station at the grid centre reaches every road position, so the
  // hierarchy collapses to a single weighted mean.
  const double mid = c.network.grid.extent() / 2.0;
  auto bs = c.network.stations.front();
  bs.position = {mid, mid};
  bs.coverage_radius = mid * std::sqrt(2.0) + 1.0;
  c.network.stations = {bs};
  const auto scenario = exp::resolve_scenario(c, "fl-single-noattack");
  exp::Simulation sim(c, scenario, c.seed);

  nn::ModelWeights ref = sim.world().global;
  double lr = c.fl.lr;
  double worst = 0.0;
  const auto plan = select::static_selector(0, sim.devices(), sim.catalog(), 1.0);
  for (std::size_t e = 0; e < c.fl.epochs; ++e) {
    std::vector<double> sum(ref.size(), 0.0);
    double total = 0.0;
    for (const auto& d : sim.world().devices) {
      const auto local = nn::train_local(ref, d.data, lr, c.fl.local_iterations);
      const double n = static_cast<double>(d.data.size());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += n * local.params[i];
      total += n;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) ref.params[i] = sum[i] / total;
    lr *= c.fl.lr_decay;

    sim.step(plan, false);
    const auto& got = sim.world().global.params;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref.params[i]));
  }
  return {worst <= 1e-9, std::to_string(c.fl.epochs) + " epochs, max |global - FedAvg| " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 12

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const exp::ExperimentConfig& base) {
  auto c = base;
  c.repetitions = 2;
  c.episodes = 5;
  const auto root = std::filesystem::temp_directory_path() / "mmfl_acceptance_det";
  std::filesystem::remove_all(root);
  std::size_t files = 0, differ = 0;
  for (const char* name : {"mmfl-drl-attack", "mmfl-rnd-attack", "fl-single-attack"}) {
    const auto a = root / (std::string(name) + "_a"), b = root / (std::string(name) + "_b");
    exp::emit_metrics(run(c, name), a);
    exp::emit_metrics(run(c, name), b);
    for (const char* f : {"reward.csv", "accuracy.csv", "timing.csv", "metrics.csv", "mitigation.csv",
                          "attack.csv"}) {
      ++files;
      differ += slurp(a / f) == slurp(b / f) ? 0 : 1;
    }
  }
  std::filesystem::remove_all(root);
  return {differ == 0, std::to_string(files - differ) + "/" + std::to_string(files) +
                           " metrics files byte-identical across reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path config_path =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::path(MMFL_CONFIG_DIR) / "acceptance.json";
  exp::ExperimentConfig config;
  try {
    config = exp::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot load " << config_path << ": " << e.what() << "\n";
    return 2;
  }

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 30, gradients},
      {2, "mitigation soundness/completeness", 60, [&] { return mitigation(config); }},
      {3, "constraint enforcement", 60, constraints},
      {4, "aggregation oracle equivalence", 10, aggregation},
      {5, "timing-model equivalence", 10, timing_model},
      {6, "DRL sanity vs brute force", 300, drl_toy},
      {7, "attack impact", 600, [&] { return attack_impact(config); }},
      {8, "defense ordering", 900, [&] { return defense_ordering(config); }},
      {9, "recognition-time ordering", 300, [&] { return recognition_ordering(config); }},
      {10, "reward curve", 600, [&] { return reward_curve(config); }},
      {11, "degenerate FedAvg equivalence", 60, [&] { return fedavg(config); }},
      {12, "determinism", 600, [&] { return determinism(config); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << " ["
              << fmt("%.1f", secs) << " s / " << fmt("%.0f", c.limit_s) << " s"
              << (in_time ? "" : ", over time") << "]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
