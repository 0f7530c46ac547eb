#include "mmfl/timing.hpp"

#include <algorithm>
#include <string>

#include "mmfl/error.hpp"

namespace mmfl::timing {

double t_knowledge(std::size_t edge_set_size, std::span<const double> label_cycles_per_slave,
                   double master_train_cycles, double bs_cpu_hz) {
  const auto d = static_cast<double>(edge_set_size);
  double total = 0.0;
  for (double label_cycles : label_cycles_per_slave) {
    total += d * label_cycles / bs_cpu_hz + d * master_train_cycles / bs_cpu_hz;
  }
  return total;
}

double t_partial_agg(std::span<const UploadLink> uploads, std::span<const double> slave_params,
                     double aggregate_cycles, double bs_cpu_hz) {
  double transfer = 0.0;
  std::vector<std::size_t> uploaded(slave_params.size(), 0);
  for (const auto& up : uploads) {
    if (!(up.rate > 0.0)) {
      throw ProtocolError("partial aggregation: upload with non-positive rate");
    }
    if (up.slave >= slave_params.size()) {
      throw ProtocolError("partial aggregation: slave index " + std::to_string(up.slave) +
                          " out of range");
    }
    transfer = std::max(transfer, up.params / up.rate);
    ++uploaded[up.slave];
  }
  double compute = 0.0;
  for (std::size_t j = 0; j < slave_params.size(); ++j) {
    compute += static_cast<double>(uploaded[j]) * slave_params[j] * aggregate_cycles / bs_cpu_hz;
  }
  return transfer + compute;
}

double t_global_agg(std::span<const EdgeTimes> edges, double master_params,
                    double aggregate_cycles, double cloud_cpu_hz) {
  if (edges.empty()) throw ProtocolError("global aggregation needs at least one station");
  double slowest = 0.0;
  for (const auto& e : edges) {
    slowest = std::max(slowest, e.partial_agg + e.knowledge + master_params / e.cloud_rate);
  }
  return slowest +
         static_cast<double>(edges.size()) * master_params * aggregate_cycles / cloud_cpu_hz;
}

double t_downlink(double master_params, double cloud_rate, double planned_params,
                  double device_rate) {
  if (!(device_rate > 0.0)) throw ProtocolError("downlink: device out of coverage");
  return master_params / cloud_rate + planned_params / device_rate;
}

double t_local(std::size_t data_size, double train_cycles_per_sample, double device_cpu_hz) {
  return static_cast<double>(data_size) * train_cycles_per_sample / device_cpu_hz;
}

std::vector<double> t_recognition(std::size_t iterations, std::span<const double> local,
                                  double global_agg, std::span<const double> downlink,
                                  std::span<const double> inference_cycles,
                                  std::span<const double> device_cpu_hz, BarrierMode barrier) {
  if (iterations == 0) throw InputError("recognition time: K must be >= 1");
  const auto n = local.size();
  if (downlink.size() != n || inference_cycles.size() != n || device_cpu_hz.size() != n) {
    throw InputError("recognition time: per-device inputs differ in length");
  }
  const double k = static_cast<double>(iterations);
  const double slowest = local.empty() ? 0.0 : *std::max_element(local.begin(), local.end());
  std::vector<double> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    const double training = barrier == BarrierMode::shared_max ? k * slowest : k * local[u];
    out[u] = training + global_agg + downlink[u] + inference_cycles[u] / device_cpu_hz[u];
  }
  return out;
}

double EpochTiming::mean_recognition() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t u = 0; u < recognition.size(); ++u) {
    if (!participating[u]) continue;
    sum += recognition[u];
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double EpochTiming::max_recognition() const {
  double best = 0.0;
  for (std::size_t u = 0; u < recognition.size(); ++u) {
    if (participating[u]) best = std::max(best, recognition[u]);
  }
  return best;
}

EpochTiming evaluate_epoch(std::span<const DeviceLoad> devices,
                           std::span<const StationLoad> stations,
                           std::span<const double> slave_params, double master_params,
                           std::size_t iterations, bool knowledge_transfer,
                           const ComputeProfile& profile) {
  EpochTiming out;
  const auto n = devices.size();
  const auto m = stations.size();
  const double cloud_rate = profile.param_rate(profile.cloud_rate_bps);

  std::vector<double> label_cycles;
  label_cycles.reserve(slave_params.size());
  for (double p : slave_params) label_cycles.push_back(profile.label_cycles_per_param * p);
  const double master_train = profile.edge_train_cycles_per_param * master_params;

  std::vector<std::vector<UploadLink>> per_station(m);
  for (const auto& d : devices) {
    if (!d.station) continue;
    per_station.at(*d.station).push_back(
        {d.planned_params, profile.param_rate(d.uplink_bps), d.slave});
  }

  std::vector<EdgeTimes> edges(m);
  out.knowledge.resize(m);
  out.partial_agg.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.knowledge[i] = knowledge_transfer ? t_knowledge(stations[i].edge_set_size, label_cycles,
                                                        master_train, stations[i].cpu_hz)
                                          : 0.0;
    out.partial_agg[i] = t_partial_agg(per_station[i], slave_params,
                                       profile.aggregate_cycles_per_param, stations[i].cpu_hz);
    edges[i] = {out.partial_agg[i], out.knowledge[i], cloud_rate};
  }
  out.global_agg = t_global_agg(edges, master_params, profile.aggregate_cycles_per_param,
                                profile.cloud_cpu_hz);

  // Recognition is evaluated over the devices that took part this epoch.
  std::vector<double> local, down, inference, cpu;
  std::vector<std::size_t> index;
  out.downlink.assign(n, 0.0);
  out.local.assign(n, 0.0);
  out.recognition.assign(n, 0.0);
  out.participating.assign(n, false);
  for (std::size_t u = 0; u < n; ++u) {
    const auto& d = devices[u];
    if (!d.station) continue;
    out.participating[u] = true;
    out.local[u] = t_local(d.data_size, profile.train_cycles_per_param * d.planned_params, d.cpu_hz);
    out.downlink[u] = t_downlink(master_params, cloud_rate, d.planned_params,
                                 profile.param_rate(d.downlink_bps));
    local.push_back(out.local[u]);
    down.push_back(out.downlink[u]);
    inference.push_back(profile.inference_cycles_per_param * d.planned_params);
    cpu.push_back(d.cpu_hz);
    index.push_back(u);
  }
  const auto rec = t_recognition(iterations, local, out.global_agg, down, inference, cpu,
                                 profile.barrier);
  for (std::size_t k = 0; k < index.size(); ++k) out.recognition[index[k]] = rec[k];
  return out;
}

}  // namespace mmfl::timing
