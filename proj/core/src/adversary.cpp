#include "mmfl/adversary.hpp"

#include <algorithm>
#include <numeric>

#include "mmfl/error.hpp"

namespace mmfl::attack {

void AttackConfig::validate(std::size_t devices) const {
  if (compromised_min > compromised_max) {
    throw ConfigError("attack: compromised_min exceeds compromised_max");
  }
  if (enabled && compromised_max > devices) {
    throw ConfigError("attack: compromised_max " + std::to_string(compromised_max) +
                      " exceeds the device count " + std::to_string(devices));
  }
  if (!(lr_low > 0.0) || !(lr_high <= 1.0) || !(lr_low <= lr_high)) {
    throw ConfigError("attack: crafting rate range must lie in (0, 1]");
  }
  if (!(target_scale > 0.0)) throw ConfigError("attack: target_scale must be positive");
}

bool CompromiseSet::contains(std::size_t device) const {
  return std::binary_search(devices.begin(), devices.end(), device);
}

double CompromiseSet::lambda_for(std::size_t device) const {
  const auto it = std::lower_bound(devices.begin(), devices.end(), device);
  if (it == devices.end() || *it != device) {
    throw InputError("device " + std::to_string(device) + " is not compromised");
  }
  return lambdas[static_cast<std::size_t>(it - devices.begin())];
}

CompromiseSet select_compromised(std::mt19937_64& rng, std::size_t devices,
                                 const AttackConfig& config, std::size_t episode) {
  CompromiseSet set;
  set.episode = episode;
  if (!config.enabled || devices == 0) return set;
  config.validate(devices);
  std::uniform_int_distribution<std::size_t> size(config.compromised_min, config.compromised_max);
  const std::size_t k = size(rng);
  std::vector<std::size_t> ids(devices);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  std::uniform_real_distribution<double> rate(config.lr_low, config.lr_high);
  set.devices = std::move(ids);
  for (std::size_t i = 0; i < k; ++i) set.lambdas.push_back(rate(rng));
  return set;
}

nn::ModelWeights craft_poisoned(const nn::ModelWeights& global, const nn::ModelWeights& target,
                                double lambda) {
  if (!global.spec.structurally_equal(target.spec) || global.params.size() != target.params.size()) {
    throw InputError("craft_poisoned: target does not match the global model structure");
  }
  nn::ModelWeights out = global;
  for (std::size_t i = 0; i < out.params.size(); ++i) {
    out.params[i] = global.params[i] + lambda * (target.params[i] - global.params[i]);
  }
  return out;
}

std::vector<fl::Upload> inject(std::vector<fl::Upload> uploads, const CompromiseSet& compromised,
                               const nn::ModelWeights& global, std::mt19937_64& rng,
                               const AttackConfig& config) {
  if (compromised.empty()) return uploads;
  std::uniform_real_distribution<double> rate(config.lr_low, config.lr_high);
  for (auto& up : uploads) {
    if (!compromised.contains(up.device_id)) continue;
    const nn::ModelWeights target = nn::init_model(global.spec, rng, config.target_scale);
    const double lambda =
        config.resample_lr_per_epoch ? rate(rng) : compromised.lambda_for(up.device_id);
    up.declared_weights = craft_poisoned(global, target, lambda);
    up.poisoned = true;
  }
  return uploads;
}

Adversary::Adversary(AttackConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed) {}

void Adversary::begin_episode(std::size_t episode, std::size_t devices) {
  current_ = select_compromised(rng_, devices, config_, episode);
}

void Adversary::attack(std::vector<fl::Upload>& uploads, const nn::ModelWeights& global) {
  uploads = inject(std::move(uploads), current_, global, rng_, config_);
}

}  // namespace mmfl::attack
