#pragma once

// Closed-form epoch latency model: knowledge transfer, partial and global
// aggregation, downlink, local training and end-to-end recognition time.
//
// Parameter sizes are counts of parameters; every rate passed to these
// functions is already in parameters per second (see ComputeProfile::param_rate).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mmfl::timing {

/// How the local-training term of the recognition time is taken.
enum class BarrierMode {
  shared_max,  ///< K * max_u T_loc(u): every device waits for the slowest trainer
  per_device,  ///< K * T_loc(u) of the device itself
};

/// Cycle constants and link parameters. Per-model cycle counts scale with the
/// parameter count of the model involved.
struct ComputeProfile {
  double train_cycles_per_param = 1.0;        ///< device: cycles per sample per parameter
  double inference_cycles_per_param = 10.0;   ///< device: cycles for one recognition per parameter
  double label_cycles_per_param = 0.005;      ///< edge: cycles to label one instance per parameter
  double edge_train_cycles_per_param = 0.01;  ///< edge: cycles to train master per instance per parameter
  double aggregate_cycles_per_param = 1.0;    ///< cycles to aggregate one parameter
  double cloud_cpu_hz = 10e9;
  double cloud_rate_bps = 100e6;  ///< BS <-> cloud link, both directions
  double bytes_per_param = 4.0;
  BarrierMode barrier = BarrierMode::shared_max;

  /// Converts a bit rate into parameters per second.
  double param_rate(double bits_per_second) const noexcept {
    return bits_per_second / (8.0 * bytes_per_param);
  }
};

/// Knowledge-transfer time at one base station.
double t_knowledge(std::size_t edge_set_size, std::span<const double> label_cycles_per_slave,
                   double master_train_cycles, double bs_cpu_hz);

struct UploadLink {
  double params = 0.0;  ///< |W_u| of the planned model
  double rate = 0.0;    ///< device -> BS, parameters per second
  std::size_t slave = 0;
};

/// Partial aggregation time at one base station. Throws ProtocolError on a
/// non-positive rate.
double t_partial_agg(std::span<const UploadLink> uploads, std::span<const double> slave_params,
                     double aggregate_cycles, double bs_cpu_hz);

struct EdgeTimes {
  double partial_agg = 0.0;
  double knowledge = 0.0;
  double cloud_rate = 0.0;  ///< BS -> cloud, parameters per second
};

/// Global aggregation time at the cloud over M = edges.size() stations.
double t_global_agg(std::span<const EdgeTimes> edges, double master_params,
                    double aggregate_cycles, double cloud_cpu_hz);

/// Downlink time; throws ProtocolError when the device link rate is not positive.
double t_downlink(double master_params, double cloud_rate, double planned_params,
                  double device_rate);

double t_local(std::size_t data_size, double train_cycles_per_sample, double device_cpu_hz);

/// Recognition time for every device of the epoch.
std::vector<double> t_recognition(std::size_t iterations, std::span<const double> local,
                                  double global_agg, std::span<const double> downlink,
                                  std::span<const double> inference_cycles,
                                  std::span<const double> device_cpu_hz,
                                  BarrierMode barrier = BarrierMode::shared_max);

/// Per-device inputs for one epoch; devices out of coverage have no station.
struct DeviceLoad {
  std::optional<std::size_t> station;
  std::size_t slave = 0;
  double planned_params = 0.0;
  std::size_t data_size = 0;
  double cpu_hz = 2e9;
  double uplink_bps = 0.0;
  double downlink_bps = 0.0;
};

struct StationLoad {
  double cpu_hz = 3.2e9;
  std::size_t edge_set_size = 0;
};

struct EpochTiming {
  std::vector<double> knowledge;    ///< per BS
  std::vector<double> partial_agg;  ///< per BS
  double global_agg = 0.0;
  std::vector<double> downlink;     ///< per device, 0 when out of coverage
  std::vector<double> local;
  std::vector<double> recognition;
  std::vector<bool> participating;

  double mean_recognition() const;
  double max_recognition() const;
};

/// Evaluates every term of one epoch from the plan-level loads.
EpochTiming evaluate_epoch(std::span<const DeviceLoad> devices,
                           std::span<const StationLoad> stations,
                           std::span<const double> slave_params, double master_params,
                           std::size_t iterations, bool knowledge_transfer,
                           const ComputeProfile& profile);

}  // namespace mmfl::timing
