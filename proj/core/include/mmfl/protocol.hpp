#pragma once

// Multi-model federated learning epoch: plan checks, local training,
// structural mismatch mitigation, per-model partial aggregation at the edge,
// knowledge transfer into the master, cloud averaging and selective broadcast.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmfl/data.hpp"
#include "mmfl/network.hpp"
#include "mmfl/tensor_nn.hpp"
#include "mmfl/timing.hpp"

namespace mmfl::fl {

/// Slave architectures M_s and the master M_c. When the master is one of the
/// slaves, `master_slot` is its index.
struct ModelCatalog {
  std::vector<nn::ModelSpec> slaves;
  nn::ModelSpec master;
  std::optional<std::size_t> master_slot;

  /// Locates the master among the slaves by model_id.
  static ModelCatalog make(std::vector<nn::ModelSpec> slaves, nn::ModelSpec master);

  std::size_t size() const noexcept { return slaves.size(); }
  bool is_master(std::size_t slot) const noexcept { return master_slot && *master_slot == slot; }
};

/// Device -> model assignment for one epoch, stored as one-hot rows.
struct AssignmentPlan {
  std::size_t epoch = 0;
  std::vector<std::vector<std::uint8_t>> selection;  ///< N x l
  std::vector<nn::ModelSpec> planned_spec;           ///< per device; empty spec if unassigned

  static AssignmentPlan from_indices(std::size_t epoch, std::span<const std::size_t> models,
                                     const ModelCatalog& catalog);

  std::size_t devices() const noexcept { return selection.size(); }
  /// The single selected model, or nullopt when the row is not one-hot.
  std::optional<std::size_t> model_of(std::size_t device) const;
  std::vector<std::size_t> indices() const;
  std::size_t master_count(const ModelCatalog& catalog) const;
  bool operator==(const AssignmentPlan&) const = default;
};

/// floor(N * T_max) with a small tolerance for binary fractions such as 0.6.
std::size_t master_cap(std::size_t devices, double t_max) noexcept;

enum class ViolationKind { not_one_hot, master_ratio, size_mismatch };

struct PlanViolation {
  ViolationKind kind;
  std::optional<std::size_t> device;
  std::string message;
};

/// Empty result means the plan is valid. Never repairs.
std::vector<PlanViolation> validate_plan(const AssignmentPlan& plan, const ModelCatalog& catalog,
                                         std::size_t devices, double t_max);

struct Upload {
  std::size_t device_id = 0;
  nn::ModelWeights declared_weights;
  std::size_t batch_size = 0;
  /// Ground truth for auditing only; the aggregator never reads it.
  bool poisoned = false;
};

struct Exclusion {
  std::size_t device = 0;
  std::string reason;
  bool poisoned = false;
};

struct MitigationReport {
  std::size_t epoch = 0;
  std::vector<Exclusion> excluded;
  std::vector<std::size_t> included_per_slave;  ///< X_s^j summed over stations
};

inline constexpr const char* kStructureMismatch = "structure mismatch";
inline constexpr const char* kUnplannedDevice = "unplanned device";

/// Keeps an upload iff its parameter count equals the planned model's count.
/// With `signature_check`, the full architecture must also match.
std::pair<std::vector<Upload>, MitigationReport> mitigate(std::span<const Upload> uploads,
                                                          const AssignmentPlan& plan,
                                                          bool signature_check = false);

/// Data-size weighted mean of the uploads; `previous` when there are none.
nn::ModelWeights partial_aggregate(std::span<const Upload> uploads,
                                   const nn::ModelWeights& previous);

struct EdgeState {
  int bs_id = 0;
  std::vector<nn::ModelWeights> slaves;
  nn::ModelWeights master;
  std::vector<nn::Sequence> edge_data;
};

/// Labels the edge set with each slave in index order (threshold 0.5) and
/// trains the master on each labeling for `passes` gradient steps.
nn::ModelWeights knowledge_transfer(const EdgeState& edge, double lr, std::size_t passes);

/// Unweighted mean of the station masters; ProtocolError on a structural mismatch.
nn::ModelWeights cloud_aggregate(std::span<const nn::ModelWeights> masters);

/// Weights each device ends the epoch with. Out-of-coverage devices keep `held`.
std::vector<nn::ModelWeights> broadcast(const AssignmentPlan& plan, const ModelCatalog& catalog,
                                        std::span<const EdgeState> edges,
                                        const nn::ModelWeights& global,
                                        const net::NetworkSnapshot& network,
                                        std::span<const nn::ModelWeights> held);

struct ProtocolConfig {
  double lr = 0.07;
  double lr_decay = 1.0;  ///< multiplicative, applied after every epoch
  std::size_t local_iterations = 1;
  std::size_t kt_passes = 1;
  bool knowledge_transfer = true;
  bool signature_check = false;
  timing::ComputeProfile timing;
};

struct DeviceState {
  nn::LabeledBatch data;
  double cpu_hz = 2e9;
  nn::ModelWeights held;  ///< last weights received by broadcast
};

struct WorldState {
  ModelCatalog catalog;
  std::vector<net::BaseStation> stations;
  net::NetworkSnapshot network;
  std::vector<DeviceState> devices;
  std::vector<EdgeState> edges;
  nn::ModelWeights global;
  double lr = 0.07;
};

/// Rewrites the upload list in place, given the current global model.
using AdversaryHook = std::function<void(std::vector<Upload>&, const nn::ModelWeights&)>;

struct EpochMetrics {
  std::size_t epoch = 0;
  double global_loss = 0.0;           ///< F: mean of per-device mean loss of M_c
  std::optional<double> accuracy;     ///< of M_c on the test flows
  std::vector<double> device_loss;    ///< F_u of the post-broadcast model
  timing::EpochTiming timing;
  MitigationReport mitigation;
  std::size_t uploads = 0;
  std::size_t poisoned_uploads = 0;
  std::size_t poisoned_accepted = 0;
  std::size_t master_assignments = 0;
};

/// Runs one full epoch on `world`. `test` may be empty to skip accuracy.
EpochMetrics run_epoch(WorldState& world, const AssignmentPlan& plan, const AdversaryHook& adversary,
                       const ProtocolConfig& config, std::span<const data::Flow> test = {});

}  // namespace mmfl::fl
