#include "mmfl/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmfl/error.hpp"

namespace mmfl::fl {

ModelCatalog ModelCatalog::make(std::vector<nn::ModelSpec> slaves, nn::ModelSpec master) {
  if (slaves.empty()) throw ConfigError("model catalog needs at least one slave model");
  master.validate();
  ModelCatalog catalog{std::move(slaves), std::move(master), std::nullopt};
  for (std::size_t j = 0; j < catalog.slaves.size(); ++j) {
    catalog.slaves[j].validate();
    if (catalog.slaves[j].model_id == catalog.master.model_id) {
      if (!catalog.slaves[j].structurally_equal(catalog.master)) {
        throw ConfigError("slave '" + catalog.master.model_id +
                          "' shares the master id but not its structure");
      }
      catalog.master_slot = j;
    }
  }
  return catalog;
}

AssignmentPlan AssignmentPlan::from_indices(std::size_t epoch, std::span<const std::size_t> models,
                                            const ModelCatalog& catalog) {
  AssignmentPlan plan;
  plan.epoch = epoch;
  plan.selection.assign(models.size(), std::vector<std::uint8_t>(catalog.size(), 0));
  plan.planned_spec.reserve(models.size());
  for (std::size_t u = 0; u < models.size(); ++u) {
    if (models[u] >= catalog.size()) {
      throw InputError("plan: model index " + std::to_string(models[u]) + " out of range");
    }
    plan.selection[u][models[u]] = 1;
    plan.planned_spec.push_back(catalog.slaves[models[u]]);
  }
  return plan;
}

std::optional<std::size_t> AssignmentPlan::model_of(std::size_t device) const {
  if (device >= selection.size()) return std::nullopt;
  std::optional<std::size_t> found;
  for (std::size_t j = 0; j < selection[device].size(); ++j) {
    if (selection[device][j] == 0) continue;
    if (selection[device][j] != 1 || found) return std::nullopt;
    found = j;
  }
  return found;
}

std::vector<std::size_t> AssignmentPlan::indices() const {
  std::vector<std::size_t> out(selection.size());
  for (std::size_t u = 0; u < selection.size(); ++u) {
    const auto j = model_of(u);
    if (!j) throw ProtocolError("plan row " + std::to_string(u) + " is not one-hot");
    out[u] = *j;
  }
  return out;
}

std::size_t AssignmentPlan::master_count(const ModelCatalog& catalog) const {
  if (!catalog.master_slot) return 0;
  std::size_t n = 0;
  for (std::size_t u = 0; u < selection.size(); ++u) {
    if (model_of(u) == catalog.master_slot) ++n;
  }
  return n;
}

std::size_t master_cap(std::size_t devices, double t_max) noexcept {
  return static_cast<std::size_t>(std::floor(static_cast<double>(devices) * t_max + 1e-9));
}

std::vector<PlanViolation> validate_plan(const AssignmentPlan& plan, const ModelCatalog& catalog,
                                         std::size_t devices, double t_max) {
  std::vector<PlanViolation> out;
  if (plan.devices() != devices) {
    out.push_back({ViolationKind::size_mismatch, std::nullopt,
                   "plan covers " + std::to_string(plan.devices()) + " devices, expected " +
                       std::to_string(devices)});
  }
  for (std::size_t u = 0; u < plan.devices(); ++u) {
    const auto& row = plan.selection[u];
    const auto sum = std::accumulate(row.begin(), row.end(), 0);
    if (row.size() != catalog.size() || sum != 1 || !plan.model_of(u)) {
      out.push_back({ViolationKind::not_one_hot, u,
                     "device " + std::to_string(u) + " has " + std::to_string(sum) +
                         " models assigned (one-model constraint)"});
    }
  }
  const auto masters = plan.master_count(catalog);
  const auto cap = master_cap(devices, t_max);
  if (masters > cap) {
    out.push_back({ViolationKind::master_ratio, std::nullopt,
                   std::to_string(masters) + " master assignments exceed the bound of " +
                       std::to_string(cap)});
  }
  return out;
}

std::pair<std::vector<Upload>, MitigationReport> mitigate(std::span<const Upload> uploads,
                                                          const AssignmentPlan& plan,
                                                          bool signature_check) {
  MitigationReport report;
  report.epoch = plan.epoch;
  const std::size_t l = plan.selection.empty() ? 0 : plan.selection.front().size();
  report.included_per_slave.assign(l, 0);
  std::vector<Upload> accepted;
  for (const auto& up : uploads) {
    const auto j = plan.model_of(up.device_id);
    if (!j) {
      report.excluded.push_back({up.device_id, kUnplannedDevice, up.poisoned});
      continue;
    }
    const auto& planned = plan.planned_spec[up.device_id];
    const bool count_ok = up.declared_weights.params.size() == nn::param_count(planned);
    const bool structure_ok = !signature_check || up.declared_weights.spec.structurally_equal(planned);
    if (!count_ok || !structure_ok) {
      report.excluded.push_back({up.device_id, kStructureMismatch, up.poisoned});
      continue;
    }
    ++report.included_per_slave[*j];
    accepted.push_back(up);
  }
  return {std::move(accepted), std::move(report)};
}

nn::ModelWeights partial_aggregate(std::span<const Upload> uploads,
                                   const nn::ModelWeights& previous) {
  if (uploads.empty()) return previous;
  const auto& spec = uploads.front().declared_weights.spec;
  const auto n = uploads.front().declared_weights.params.size();
  double total = 0.0;
  for (const auto& up : uploads) {
    if (!up.declared_weights.spec.structurally_equal(spec) || up.declared_weights.params.size() != n) {
      throw ProtocolError("partial aggregation over differently shaped uploads");
    }
    total += static_cast<double>(up.batch_size);
  }
  nn::ModelWeights out{previous.spec.structurally_equal(spec) ? previous.spec : spec,
                       std::vector<double>(n, 0.0)};
  for (const auto& up : uploads) {
    // Groups without data fall back to a plain mean.
    const double weight = total > 0.0 ? static_cast<double>(up.batch_size) / total
                                      : 1.0 / static_cast<double>(uploads.size());
    const auto& p = up.declared_weights.params;
    for (std::size_t i = 0; i < n; ++i) out.params[i] += weight * p[i];
  }
  return out;
}

nn::ModelWeights knowledge_transfer(const EdgeState& edge, double lr, std::size_t passes) {
  if (edge.edge_data.empty() || passes == 0) return edge.master;
  nn::ModelWeights master = edge.master;
  nn::LabeledBatch batch;
  batch.inputs = edge.edge_data;
  batch.labels.resize(edge.edge_data.size());
  for (const auto& slave : edge.slaves) {
    const auto probs = nn::forward_batch(slave, edge.edge_data);
    for (std::size_t i = 0; i < probs.size(); ++i) batch.labels[i] = probs[i] > 0.5 ? 1 : 0;
    master = nn::train_local(std::move(master), batch, lr, passes);
  }
  return master;
}

nn::ModelWeights cloud_aggregate(std::span<const nn::ModelWeights> masters) {
  if (masters.empty()) throw ProtocolError("cloud aggregation with no station masters");
  const auto& first = masters.front();
  nn::ModelWeights out{first.spec, std::vector<double>(first.params.size(), 0.0)};
  for (const auto& m : masters) {
    if (!m.spec.structurally_equal(first.spec) || m.params.size() != first.params.size()) {
      throw ProtocolError("cloud aggregation: station masters differ in structure");
    }
    for (std::size_t i = 0; i < out.params.size(); ++i) out.params[i] += m.params[i];
  }
  const double inv = 1.0 / static_cast<double>(masters.size());
  for (auto& v : out.params) v *= inv;
  return out;
}

std::vector<nn::ModelWeights> broadcast(const AssignmentPlan& plan, const ModelCatalog& catalog,
                                        std::span<const EdgeState> edges,
                                        const nn::ModelWeights& global,
                                        const net::NetworkSnapshot& network,
                                        std::span<const nn::ModelWeights> held) {
  std::vector<nn::ModelWeights> out(held.begin(), held.end());
  for (std::size_t u = 0; u < out.size(); ++u) {
    if (!network.covered(u)) continue;
    const auto j = plan.model_of(u);
    if (!j) continue;
    if (catalog.is_master(*j)) {
      out[u] = global;
    } else {
      out[u] = edges[*network.association[u]].slaves[*j];
    }
  }
  return out;
}

EpochMetrics run_epoch(WorldState& world, const AssignmentPlan& plan, const AdversaryHook& adversary,
                       const ProtocolConfig& config, std::span<const data::Flow> test) {
  const auto& catalog = world.catalog;
  const std::size_t n = world.devices.size();
  const std::size_t l = catalog.size();
  const std::size_t m = world.edges.size();
  if (plan.devices() != n) throw ProtocolError("plan does not cover every device");
  const auto models = plan.indices();

  EpochMetrics metrics;
  metrics.epoch = plan.epoch;
  metrics.master_assignments = plan.master_count(catalog);

  // 1. local training on the planned model
  std::vector<Upload> uploads;
  for (std::size_t u = 0; u < n; ++u) {
    if (!world.network.covered(u)) continue;
    const auto& dev = world.devices[u];
    const std::size_t bs = *world.network.association[u];
    const std::size_t j = models[u];
    const nn::ModelWeights& start = catalog.is_master(j) ? world.global : world.edges[bs].slaves[j];
    Upload up{u, start, dev.data.size(), false};
    if (!dev.data.empty()) {
      up.declared_weights = nn::train_local(start, dev.data, world.lr, config.local_iterations);
    }
    uploads.push_back(std::move(up));
  }

  // 2. adversary, then structural mitigation
  if (adversary) adversary(uploads, world.global);
  metrics.uploads = uploads.size();
  metrics.poisoned_uploads = static_cast<std::size_t>(
      std::count_if(uploads.begin(), uploads.end(), [](const Upload& u) { return u.poisoned; }));
  auto [accepted, report] = mitigate(uploads, plan, config.signature_check);
  metrics.poisoned_accepted = static_cast<std::size_t>(
      std::count_if(accepted.begin(), accepted.end(), [](const Upload& u) { return u.poisoned; }));
  metrics.mitigation = std::move(report);

  // 3. partial aggregation per (station, model)
  std::vector<std::vector<bool>> had_uploads(m, std::vector<bool>(l, false));
  for (std::size_t bs = 0; bs < m; ++bs) {
    for (std::size_t j = 0; j < l; ++j) {
      std::vector<Upload> group;
      for (const auto& up : accepted) {
        if (world.network.association[up.device_id] == bs && models[up.device_id] == j) {
          group.push_back(up);
        }
      }
      had_uploads[bs][j] = !group.empty();
      world.edges[bs].slaves[j] = partial_aggregate(group, world.edges[bs].slaves[j]);
    }
  }

  // 4. knowledge transfer into each station master
  std::vector<nn::ModelWeights> masters;
  masters.reserve(m);
  for (std::size_t bs = 0; bs < m; ++bs) {
    auto& edge = world.edges[bs];
    const auto slot = catalog.master_slot;
    edge.master = (slot && had_uploads[bs][*slot]) ? edge.slaves[*slot] : world.global;
    if (config.knowledge_transfer) {
      // Only slaves refreshed by uploads this epoch act as labelers.
      EdgeState current{edge.bs_id, {}, edge.master, {}};
      for (std::size_t j = 0; j < l; ++j) {
        if (had_uploads[bs][j]) current.slaves.push_back(edge.slaves[j]);
      }
      if (!current.slaves.empty()) {
        current.edge_data = edge.edge_data;
        edge.master = knowledge_transfer(current, world.lr, config.kt_passes);
      }
    }
    masters.push_back(edge.master);
  }

  // 5-6. cloud aggregation; stations adopt the new global master
  world.global = cloud_aggregate(masters);
  if (catalog.master_slot) {
    for (auto& edge : world.edges) edge.slaves[*catalog.master_slot] = world.global;
  }

  // 7. selective broadcast
  std::vector<nn::ModelWeights> held;
  held.reserve(n);
  for (const auto& d : world.devices) held.push_back(d.held);
  auto delivered = broadcast(plan, catalog, world.edges, world.global, world.network, held);
  for (std::size_t u = 0; u < n; ++u) world.devices[u].held = std::move(delivered[u]);

  // timing is evaluated from the plan
  std::vector<double> slave_params;
  for (const auto& s : catalog.slaves) slave_params.push_back(static_cast<double>(nn::param_count(s)));
  std::vector<timing::DeviceLoad> loads(n);
  for (std::size_t u = 0; u < n; ++u) {
    auto& load = loads[u];
    load.station = world.network.association[u];
    load.slave = models[u];
    load.planned_params = slave_params[models[u]];
    load.data_size = world.devices[u].data.size();
    load.cpu_hz = world.devices[u].cpu_hz;
    if (load.station) {
      load.uplink_bps = world.network.uplink(static_cast<Eigen::Index>(u),
                                             static_cast<Eigen::Index>(*load.station));
      load.downlink_bps = world.network.downlink(static_cast<Eigen::Index>(u),
                                                 static_cast<Eigen::Index>(*load.station));
    }
  }
  std::vector<timing::StationLoad> stations(m);
  for (std::size_t bs = 0; bs < m; ++bs) {
    stations[bs] = {world.stations[bs].cpu_hz, world.edges[bs].edge_data.size()};
  }
  metrics.timing = timing::evaluate_epoch(loads, stations, slave_params,
                                          static_cast<double>(nn::param_count(catalog.master)),
                                          config.local_iterations, config.knowledge_transfer,
                                          config.timing);

  // losses and accuracy
  double loss_sum = 0.0;
  std::size_t loss_devices = 0;
  metrics.device_loss.assign(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    const auto& dev = world.devices[u];
    if (dev.data.empty()) continue;
    const double global_loss = nn::loss(world.global, dev.data);
    loss_sum += global_loss;
    ++loss_devices;
    const bool holds_global = dev.held.params == world.global.params;
    metrics.device_loss[u] = holds_global ? global_loss : nn::loss(dev.held, dev.data);
  }
  metrics.global_loss = loss_devices ? loss_sum / static_cast<double>(loss_devices) : 0.0;
  if (!test.empty()) metrics.accuracy = data::evaluate_accuracy(world.global, test);

  world.lr *= config.lr_decay;
  return metrics;
}

}  // namespace mmfl::fl
