#pragma once

// Model-poisoning attacker: compromises a random subset of devices for an
// episode and replaces their uploads with master-structured weights pulled
// from the global model toward a random malicious target.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mmfl/protocol.hpp"
#include "mmfl/tensor_nn.hpp"

namespace mmfl::attack {

struct AttackConfig {
  bool enabled = true;
  std::size_t compromised_min = 3;
  std::size_t compromised_max = 5;
  double lr_low = 0.25;
  double lr_high = 0.35;
  /// Targets are drawn from the init distribution scaled by this factor.
  double target_scale = 10.0;
  bool resample_lr_per_epoch = false;

  /// Throws ConfigError.
  void validate(std::size_t devices) const;
};

struct CompromiseSet {
  std::size_t episode = 0;
  std::vector<std::size_t> devices;  ///< ascending
  std::vector<double> lambdas;       ///< crafting rate per entry of `devices`

  bool empty() const noexcept { return devices.empty(); }
  bool contains(std::size_t device) const;
  double lambda_for(std::size_t device) const;
};

CompromiseSet select_compromised(std::mt19937_64& rng, std::size_t devices,
                                 const AttackConfig& config, std::size_t episode = 0);

/// global + lambda * (target - global). Throws InputError on a structural mismatch.
nn::ModelWeights craft_poisoned(const nn::ModelWeights& global, const nn::ModelWeights& target,
                                double lambda);

/// Replaces each compromised device's upload with a freshly crafted one.
std::vector<fl::Upload> inject(std::vector<fl::Upload> uploads, const CompromiseSet& compromised,
                               const nn::ModelWeights& global, std::mt19937_64& rng,
                               const AttackConfig& config);

/// Stateful attacker owning its random stream; one compromise set per episode.
class Adversary {
 public:
  Adversary(AttackConfig config, std::uint64_t seed);

  void begin_episode(std::size_t episode, std::size_t devices);
  void attack(std::vector<fl::Upload>& uploads, const nn::ModelWeights& global);

  const CompromiseSet& compromised() const noexcept { return current_; }
  const AttackConfig& config() const noexcept { return config_; }

 private:
  AttackConfig config_;
  std::mt19937_64 rng_;
  CompromiseSet current_;
};

}  // namespace mmfl::attack
