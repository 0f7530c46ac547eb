#pragma once

// Manhattan-grid vehicle mobility, base-station association and the
// path-loss / log-capacity rate model.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace mmfl::net {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b) noexcept;

enum class Heading { north, east, south, west };

Heading turn_right(Heading h) noexcept;
Heading turn_left(Heading h) noexcept;

struct GridMap {
  int cells_per_side = 4;
  double cell_width = 100.0;

  double extent() const noexcept { return cells_per_side * cell_width; }
  bool contains(Point p, double tol = 1e-9) const noexcept;
  /// True when `p` lies on a horizontal or vertical grid line.
  bool on_road(Point p, double tol = 1e-9) const noexcept;
  bool is_junction(Point p, double tol = 1e-9) const noexcept;
};

struct DevicePose {
  Point position;
  Heading heading = Heading::east;
  double speed = 12.5;  // m/s
};

struct BaseStation {
  int id = 0;
  Point position;
  double bandwidth_hz = 28e6;
  double coverage_radius = 300.0;
  double tx_power_dbm = 34.0;
  double cpu_hz = 3.2e9;
};

struct ChannelParams {
  double path_loss_coeff = 1.0;
  double path_loss_exp = 5.0;
  double noise_power_dbm = -174.0;
  double device_tx_power_dbm = 23.0;
};

struct TurnProbabilities {
  double straight = 0.5;
  double right = 0.25;
  double left = 0.25;
};

/// Uniformly random road position with an axis-aligned heading along that road.
DevicePose random_pose(const GridMap& grid, std::mt19937_64& rng, double mean_speed,
                       double speed_spread = 0.0);

/// Heading chosen at a junction; headings that would leave the grid are
/// dropped and the remaining probabilities renormalized.
Heading choose_heading(Heading current, Point junction, const GridMap& grid, std::mt19937_64& rng,
                       const TurnProbabilities& turns = {});

/// Advance every vehicle by speed * dt along the road network.
std::vector<DevicePose> step_mobility(std::vector<DevicePose> poses, const GridMap& grid,
                                      std::mt19937_64& rng, double dt,
                                      const TurnProbabilities& turns = {});

double db_to_linear(double db) noexcept;

inline constexpr double kMinDistance = 1.0;

/// C_g * d^(-exponent), with d clamped to at least 1 m.
double channel_gain(double d, const ChannelParams& params) noexcept;

/// B * ln(1 + Pt * g / eta); powers in linear mW.
double tx_rate(double bandwidth_hz, double tx_power_mw, double gain, double noise_mw) noexcept;

struct NetworkSnapshot {
  std::size_t epoch = 0;
  Eigen::MatrixXd distance;  ///< N x M metres
  Eigen::MatrixXd uplink;    ///< N x M bit/s, device -> BS
  Eigen::MatrixXd downlink;  ///< N x M bit/s, BS -> device
  /// Index into the station list, or nullopt when out of every coverage disc.
  std::vector<std::optional<std::size_t>> association;

  std::size_t devices() const noexcept { return association.size(); }
  std::size_t stations() const noexcept { return static_cast<std::size_t>(uplink.cols()); }
  bool covered(std::size_t device) const { return association.at(device).has_value(); }
};

inline constexpr double kTieTolerance = 1e-9;

NetworkSnapshot snapshot(const std::vector<DevicePose>& poses,
                         const std::vector<BaseStation>& stations, const ChannelParams& params,
                         std::size_t epoch);

/// Rows of (epoch, device, bs, distance, rate), header included when asked.
void write_snapshot_csv(std::ostream& out, const NetworkSnapshot& snap,
                        const std::vector<BaseStation>& stations, bool header = true);

}  // namespace mmfl::net
