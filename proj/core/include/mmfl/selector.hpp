#pragma once

// Per-epoch model assignment: a per-device ensemble of policy networks trained
// with epsilon-greedy exploration and one-step Bellman regression, plus random,
// static and exhaustive baselines. Every selector emits plans that satisfy the
// one-model and master-ratio constraints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mmfl/network.hpp"
#include "mmfl/protocol.hpp"
#include "mmfl/tensor_nn.hpp"

namespace mmfl::select {

struct SelectorConfig {
  double alpha = 1.0;  ///< loss weight
  double beta = 1.0;   ///< recognition-time weight
  double t_max = 0.6;
  double epsilon_start = 1.0;
  double epsilon_end = 0.02;
  double gamma = 0.1;
  double policy_lr = 0.01;
  std::size_t hidden = 32;
  /// Rates are divided by this before entering the state vector.
  double max_rate_bps = 1.5e9;
  double infeasible_penalty_factor = 10.0;
  /// Regress on rewards centered by the running mean of their epoch index and
  /// scaled by the running deviation of the centered values.
  bool standardize_reward = true;

  void validate() const;
};

/// Rate matrix (row-major, normalized to [0,1]) followed by one-hot model rows.
struct StateFeatures {
  Eigen::VectorXd values;
  std::size_t devices = 0;
  std::size_t stations = 0;
  std::size_t models = 0;

  nn::Sequence as_input() const;
};

StateFeatures encode_state(const net::NetworkSnapshot& snapshot,
                           const fl::AssignmentPlan& previous, std::size_t models,
                           double max_rate_bps);

/// One dense net per device: state -> hidden (tanh) -> l outputs.
/// Raw outputs are the action-value estimates; their softmax is the
/// assignment probability.
struct PolicyEnsemble {
  std::vector<nn::ModelWeights> nets;

  static PolicyEnsemble create(std::size_t devices, std::size_t input_dim, std::size_t hidden,
                               std::size_t models, std::mt19937_64& rng);

  Eigen::VectorXd action_values(std::size_t device, const StateFeatures& state) const;
  Eigen::VectorXd probabilities(std::size_t device, const StateFeatures& state) const;
};

/// Linear decay from `start` at episode 0 to `end` at the final episode.
double exploration_rate(std::size_t episode, std::size_t episodes, double start, double end);

/// Demotes master-assigned devices with the lowest master probability to
/// their next-best model until the master bound holds.
std::vector<std::size_t> repair_plan(std::vector<std::size_t> models,
                                     const std::vector<Eigen::VectorXd>& probabilities,
                                     const fl::ModelCatalog& catalog, double t_max);

fl::AssignmentPlan select_action(const PolicyEnsemble& ensemble, const StateFeatures& state,
                                 double epsilon, std::mt19937_64& rng,
                                 const fl::ModelCatalog& catalog, double t_max,
                                 std::size_t epoch = 0);

/// Negated weighted objective for feasible plans; a dominated penalty of
/// -factor * max(scale, objective) otherwise.
double reward(std::span<const double> device_loss, std::span<const double> recognition,
              const SelectorConfig& config, bool feasible, double penalty_scale = 1.0);

struct Transition {
  StateFeatures state;
  fl::AssignmentPlan action;
  double reward = 0.0;
  StateFeatures next_state;
};

/// One gradient step per device on (Q_u(s, a_u) - (r + gamma * max_a Q_u(s', a)))^2.
void update(PolicyEnsemble& ensemble, const Transition& transition, double gamma, double lr);

fl::AssignmentPlan random_selector(std::mt19937_64& rng, std::size_t devices,
                                   const fl::ModelCatalog& catalog, double t_max,
                                   std::size_t epoch = 0);

/// Everyone on model `model`; ConfigError when that breaks the master bound.
fl::AssignmentPlan static_selector(std::size_t model, std::size_t devices,
                                   const fl::ModelCatalog& catalog, double t_max,
                                   std::size_t epoch = 0);

/// Objective to minimize for a candidate plan.
using PlanEvaluator = std::function<double(const fl::AssignmentPlan&)>;

inline constexpr std::size_t kBruteForceLimit = 4096;

/// Exhaustive minimizer over feasible plans in lexicographic order (first
/// minimum wins). Refuses instances with more than 4096 plans.
fl::AssignmentPlan brute_force_selector(std::size_t devices, const fl::ModelCatalog& catalog,
                                        double t_max, const PlanEvaluator& evaluate,
                                        std::size_t epoch = 0);

/// Policy ensemble plus its exploration stream.
class DrlAgent {
 public:
  DrlAgent(std::size_t devices, std::size_t stations, fl::ModelCatalog catalog,
           SelectorConfig config, std::uint64_t seed);

  fl::AssignmentPlan choose(const StateFeatures& state, double epsilon, std::size_t epoch);
  void learn(const Transition& transition);

  StateFeatures observe(const net::NetworkSnapshot& snapshot,
                        const fl::AssignmentPlan& previous) const;

  const PolicyEnsemble& ensemble() const noexcept { return ensemble_; }
  PolicyEnsemble& ensemble() noexcept { return ensemble_; }
  const SelectorConfig& config() const noexcept { return config_; }

 private:
  fl::ModelCatalog catalog_;
  SelectorConfig config_;
  std::mt19937_64 rng_;
  PolicyEnsemble ensemble_;
  struct Running {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x);
    double sd() const;
  };
  double standardize(double reward, std::size_t epoch);

  std::vector<Running> per_epoch_;
  Running centered_;
};

}  // namespace mmfl::select
