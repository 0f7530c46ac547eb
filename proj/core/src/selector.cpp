#include "mmfl/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmfl/error.hpp"

namespace mmfl::select {

namespace {

std::size_t argmax_lowest(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::size_t plan_space(std::size_t devices, std::size_t models) {
  std::size_t total = 1;
  for (std::size_t u = 0; u < devices; ++u) {
    if (total > kBruteForceLimit / std::max<std::size_t>(models, 1)) return kBruteForceLimit + 1;
    total *= models;
  }
  return total;
}

}  // namespace

void SelectorConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
    throw ConfigError("selector: alpha and beta must be non-negative and not both zero");
  }
  if (t_max < 0.0 || t_max > 1.0) throw ConfigError("selector: t_max must lie in [0, 1]");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("selector: gamma must lie in [0, 1)");
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0) {
    throw ConfigError("selector: exploration rates must lie in [0, 1]");
  }
  if (!(policy_lr >= 0.0)) throw ConfigError("selector: policy_lr must be non-negative");
  if (!(max_rate_bps > 0.0)) throw ConfigError("selector: max_rate_bps must be positive");
}

nn::Sequence StateFeatures::as_input() const {
  nn::Sequence row(1, values.size());
  row.row(0) = values.transpose();
  return row;
}

StateFeatures encode_state(const net::NetworkSnapshot& snapshot,
                           const fl::AssignmentPlan& previous, std::size_t models,
                           double max_rate_bps) {
  StateFeatures s;
  s.devices = snapshot.devices();
  s.stations = snapshot.stations();
  s.models = models;
  s.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.devices * s.stations + models * s.devices));
  Eigen::Index k = 0;
  for (std::size_t u = 0; u < s.devices; ++u) {
    for (std::size_t i = 0; i < s.stations; ++i) {
      const double r = snapshot.uplink(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i));
      s.values(k++) = std::clamp(r / max_rate_bps, 0.0, 1.0);
    }
  }
  for (std::size_t u = 0; u < s.devices; ++u) {
    for (std::size_t j = 0; j < models; ++j) {
      const bool on = u < previous.devices() && j < previous.selection[u].size() &&
                      previous.selection[u][j] != 0;
      s.values(k++) = on ? 1.0 : 0.0;
    }
  }
  return s;
}

PolicyEnsemble PolicyEnsemble::create(std::size_t devices, std::size_t input_dim,
                                      std::size_t hidden, std::size_t models,
                                      std::mt19937_64& rng) {
  PolicyEnsemble e;
  e.nets.reserve(devices);
  for (std::size_t u = 0; u < devices; ++u) {
    nn::ModelSpec spec{"policy-" + std::to_string(u), input_dim, nn::CellKind::dense, hidden,
                       models};
    e.nets.push_back(nn::init_model(spec, rng));
  }
  return e;
}

Eigen::VectorXd PolicyEnsemble::action_values(std::size_t device, const StateFeatures& state) const {
  return nn::logits(nets.at(device), state.as_input());
}

Eigen::VectorXd PolicyEnsemble::probabilities(std::size_t device, const StateFeatures& state) const {
  return nn::softmax(action_values(device, state));
}

double exploration_rate(std::size_t episode, std::size_t episodes, double start, double end) {
  if (episodes <= 1) return end;
  const double t = std::min(1.0, static_cast<double>(episode) / static_cast<double>(episodes - 1));
  return start + (end - start) * t;
}

std::vector<std::size_t> repair_plan(std::vector<std::size_t> models,
                                     const std::vector<Eigen::VectorXd>& probabilities,
                                     const fl::ModelCatalog& catalog, double t_max) {
  if (!catalog.master_slot) return models;
  const std::size_t slot = *catalog.master_slot;
  const std::size_t cap = fl::master_cap(models.size(), t_max);
  auto count = static_cast<std::size_t>(std::count(models.begin(), models.end(), slot));
  if (count > cap && catalog.size() < 2) {
    throw ConfigError("no feasible plan: the master is the only model and the bound is below N");
  }
  while (count > cap) {
    std::size_t victim = models.size();
    for (std::size_t u = 0; u < models.size(); ++u) {
      if (models[u] != slot) continue;
      if (victim == models.size() ||
          probabilities[u](static_cast<Eigen::Index>(slot)) <
              probabilities[victim](static_cast<Eigen::Index>(slot))) {
        victim = u;
      }
    }
    Eigen::VectorXd p = probabilities[victim];
    p(static_cast<Eigen::Index>(slot)) = -std::numeric_limits<double>::infinity();
    models[victim] = argmax_lowest(p);
    --count;
  }
  return models;
}

fl::AssignmentPlan select_action(const PolicyEnsemble& ensemble, const StateFeatures& state,
                                 double epsilon, std::mt19937_64& rng,
                                 const fl::ModelCatalog& catalog, double t_max, std::size_t epoch) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double draw = coin(rng);
  if (draw < epsilon) return random_selector(rng, ensemble.nets.size(), catalog, t_max, epoch);
  std::vector<Eigen::VectorXd> probs;
  std::vector<std::size_t> models;
  probs.reserve(ensemble.nets.size());
  for (std::size_t u = 0; u < ensemble.nets.size(); ++u) {
    probs.push_back(ensemble.probabilities(u, state));
    models.push_back(argmax_lowest(probs.back()));
  }
  models = repair_plan(std::move(models), probs, catalog, t_max);
  return fl::AssignmentPlan::from_indices(epoch, models, catalog);
}

double reward(std::span<const double> device_loss, std::span<const double> recognition,
              const SelectorConfig& config, bool feasible, double penalty_scale) {
  if (device_loss.size() != recognition.size()) {
    throw InputError("reward: loss and time vectors differ in length");
  }
  double objective = 0.0;
  for (std::size_t u = 0; u < device_loss.size(); ++u) {
    objective += config.alpha * device_loss[u] + config.beta * recognition[u];
  }
  if (feasible) return -objective;
  return -config.infeasible_penalty_factor * std::max({penalty_scale, std::abs(objective), 1.0});
}

void update(PolicyEnsemble& ensemble, const Transition& t, double gamma, double lr) {
  if (!std::isfinite(t.reward)) throw NumericError("reward", "update: non-finite reward");
  const auto chosen = t.action.indices();
  if (chosen.size() != ensemble.nets.size()) {
    throw InputError("update: action covers a different number of devices");
  }
  const nn::Sequence next_input = t.next_state.as_input();
  const nn::Sequence input = t.state.as_input();
  for (std::size_t u = 0; u < ensemble.nets.size(); ++u) {
    auto& net = ensemble.nets[u];
    const double target = t.reward + gamma * nn::logits(net, next_input).maxCoeff();
    if (!std::isfinite(target)) {
      throw NumericError("W_out", "update: non-finite Bellman target for device " + std::to_string(u));
    }
    const Eigen::VectorXd q = nn::logits(net, input);
    std::vector<double> dq(net.spec.output_dim, 0.0);
    dq[chosen[u]] = 2.0 * (q(static_cast<Eigen::Index>(chosen[u])) - target);
    std::vector<double> grad(net.params.size(), 0.0);
    nn::accumulate_gradient(net, input, dq, grad);
    net = nn::apply_gradient(net, grad, lr);
  }
}

fl::AssignmentPlan random_selector(std::mt19937_64& rng, std::size_t devices,
                                   const fl::ModelCatalog& catalog, double t_max,
                                   std::size_t epoch) {
  const std::size_t l = catalog.size();
  const std::size_t cap = fl::master_cap(devices, t_max);
  if (catalog.master_slot && l == 1 && cap < devices) {
    throw ConfigError("random selector: no feasible plan exists");
  }
  std::uniform_int_distribution<std::size_t> pick(0, l - 1);
  std::vector<std::size_t> models(devices);
  for (;;) {
    for (auto& m : models) m = pick(rng);
    const auto masters = catalog.master_slot
                             ? static_cast<std::size_t>(std::count(models.begin(), models.end(),
                                                                   *catalog.master_slot))
                             : 0;
    if (masters <= cap) break;
  }
  return fl::AssignmentPlan::from_indices(epoch, models, catalog);
}

fl::AssignmentPlan static_selector(std::size_t model, std::size_t devices,
                                   const fl::ModelCatalog& catalog, double t_max,
                                   std::size_t epoch) {
  if (model >= catalog.size()) throw ConfigError("static selector: model index out of range");
  if (catalog.is_master(model) && devices > fl::master_cap(devices, t_max)) {
    throw ConfigError("static selector: assigning the master to every device needs t_max = 1");
  }
  const std::vector<std::size_t> models(devices, model);
  return fl::AssignmentPlan::from_indices(epoch, models, catalog);
}

fl::AssignmentPlan brute_force_selector(std::size_t devices, const fl::ModelCatalog& catalog,
                                        double t_max, const PlanEvaluator& evaluate,
                                        std::size_t epoch) {
  const std::size_t l = catalog.size();
  const std::size_t total = plan_space(devices, l);
  if (total > kBruteForceLimit) {
    throw ConfigError("brute force: instance has more than " + std::to_string(kBruteForceLimit) +
                      " plans");
  }
  const std::size_t cap = fl::master_cap(devices, t_max);
  std::vector<std::size_t> models(devices, 0);
  std::optional<fl::AssignmentPlan> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t code = 0; code < total; ++code) {
    // Device 0 is the most significant digit: lexicographic order.
    std::size_t rest = code;
    for (std::size_t u = devices; u-- > 0;) {
      models[u] = rest % l;
      rest /= l;
    }
    if (catalog.master_slot &&
        static_cast<std::size_t>(std::count(models.begin(), models.end(), *catalog.master_slot)) > cap) {
      continue;
    }
    auto plan = fl::AssignmentPlan::from_indices(epoch, models, catalog);
    const double value = evaluate(plan);
    if (value < best_value) {
      best_value = value;
      best = std::move(plan);
    }
  }
  if (!best) throw ConfigError("brute force: no feasible plan");
  return *best;
}

DrlAgent::DrlAgent(std::size_t devices, std::size_t stations, fl::ModelCatalog catalog,
                   SelectorConfig config, std::uint64_t seed)
    : catalog_(std::move(catalog)), config_(config), rng_(seed) {
  config_.validate();
  const std::size_t input = devices * stations + catalog_.size() * devices;
  ensemble_ = PolicyEnsemble::create(devices, input, config_.hidden, catalog_.size(), rng_);
}

fl::AssignmentPlan DrlAgent::choose(const StateFeatures& state, double epsilon, std::size_t epoch) {
  return select_action(ensemble_, state, epsilon, rng_, catalog_, config_.t_max, epoch);
}

void DrlAgent::Running::add(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

double DrlAgent::Running::sd() const {
  return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0;
}

double DrlAgent::standardize(double reward, std::size_t epoch) {
  if (epoch >= per_epoch_.size()) per_epoch_.resize(epoch + 1);
  per_epoch_[epoch].add(reward);
  const double centered = reward - per_epoch_[epoch].mean;
  centered_.add(centered);
  const double sd = centered_.sd();
  return centered / (sd > 1e-12 ? sd : 1.0);
}

void DrlAgent::learn(const Transition& transition) {
  if (!config_.standardize_reward) {
    update(ensemble_, transition, config_.gamma, config_.policy_lr);
    return;
  }
  if (!std::isfinite(transition.reward)) throw NumericError("reward", "learn: non-finite reward");
  Transition scaled = transition;
  scaled.reward = standardize(transition.reward, transition.action.epoch);
  update(ensemble_, scaled, config_.gamma, config_.policy_lr);
}

StateFeatures DrlAgent::observe(const net::NetworkSnapshot& snapshot,
                                const fl::AssignmentPlan& previous) const {
  return encode_state(snapshot, previous, catalog_.size(), config_.max_rate_bps);
}

}  // namespace mmfl::select
