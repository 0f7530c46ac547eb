#include "mmfl/network.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <ostream>

namespace mmfl::net {

namespace {

bool near_multiple(double v, double step, double tol) {
  const double k = std::round(v / step);
  return std::abs(v - k * step) <= tol;
}

bool horizontal(Heading h) { return h == Heading::east || h == Heading::west; }
bool positive(Heading h) { return h == Heading::east || h == Heading::north; }

// True when leaving `p` along `h` stays on the map.
bool can_leave(Point p, Heading h, const GridMap& grid, double tol = 1e-9) {
  switch (h) {
    case Heading::north: return p.y < grid.extent() - tol;
    case Heading::south: return p.y > tol;
    case Heading::east: return p.x < grid.extent() - tol;
    case Heading::west: return p.x > tol;
  }
  return false;
}

// Distance to the next junction strictly ahead; infinity if the road ends.
double distance_to_junction(Point p, Heading h, const GridMap& grid) {
  constexpr double eps = 1e-9;
  const double w = grid.cell_width;
  const double a = horizontal(h) ? p.x : p.y;
  const double next = positive(h) ? (std::floor(a / w + eps) + 1.0) * w
                                  : (std::ceil(a / w - eps) - 1.0) * w;
  if (next < -eps || next > grid.extent() + eps) return std::numeric_limits<double>::infinity();
  return std::abs(next - a);
}

Point advance(Point p, Heading h, double s) {
  switch (h) {
    case Heading::north: p.y += s; break;
    case Heading::south: p.y -= s; break;
    case Heading::east: p.x += s; break;
    case Heading::west: p.x -= s; break;
  }
  return p;
}

Point snap_to_grid(Point p, double w) {
  return {std::round(p.x / w) * w, std::round(p.y / w) * w};
}

}  // namespace

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

Heading turn_right(Heading h) noexcept {
  switch (h) {
    case Heading::north: return Heading::east;
    case Heading::east: return Heading::south;
    case Heading::south: return Heading::west;
    case Heading::west: return Heading::north;
  }
  return h;
}

Heading turn_left(Heading h) noexcept {
  return turn_right(turn_right(turn_right(h)));
}

bool GridMap::contains(Point p, double tol) const noexcept {
  return p.x >= -tol && p.y >= -tol && p.x <= extent() + tol && p.y <= extent() + tol;
}

bool GridMap::on_road(Point p, double tol) const noexcept {
  return contains(p, tol) &&
         (near_multiple(p.x, cell_width, tol) || near_multiple(p.y, cell_width, tol));
}

bool GridMap::is_junction(Point p, double tol) const noexcept {
  return contains(p, tol) && near_multiple(p.x, cell_width, tol) &&
         near_multiple(p.y, cell_width, tol);
}

DevicePose random_pose(const GridMap& grid, std::mt19937_64& rng, double mean_speed,
                       double speed_spread) {
  std::uniform_int_distribution<int> line(0, grid.cells_per_side);
  std::uniform_real_distribution<double> along(0.0, grid.extent());
  std::bernoulli_distribution coin(0.5);
  DevicePose pose;
  const bool on_horizontal = coin(rng);
  const double fixed = line(rng) * grid.cell_width;
  const double free = along(rng);
  const bool forward = coin(rng);
  if (on_horizontal) {
    pose.position = {free, fixed};
    pose.heading = forward ? Heading::east : Heading::west;
  } else {
    pose.position = {fixed, free};
    pose.heading = forward ? Heading::north : Heading::south;
  }
  if (!std::isfinite(distance_to_junction(pose.position, pose.heading, grid))) {
    pose.heading = turn_right(turn_right(pose.heading));
  }
  std::uniform_real_distribution<double> jitter(1.0 - speed_spread, 1.0 + speed_spread);
  pose.speed = speed_spread > 0.0 ? mean_speed * jitter(rng) : mean_speed;
  return pose;
}

Heading choose_heading(Heading current, Point junction, const GridMap& grid, std::mt19937_64& rng,
                       const TurnProbabilities& turns) {
  const std::array<Heading, 3> options{current, turn_right(current), turn_left(current)};
  const std::array<double, 3> base{turns.straight, turns.right, turns.left};
  std::array<double, 3> weight{};
  double total = 0.0;
  for (std::size_t i = 0; i < options.size(); ++i) {
    weight[i] = can_leave(junction, options[i], grid) ? base[i] : 0.0;
    total += weight[i];
  }
  if (total <= 0.0) return turn_right(turn_right(current));  // dead end: reverse
  std::uniform_real_distribution<double> u(0.0, total);
  double draw = u(rng);
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (weight[i] <= 0.0) continue;
    if (draw < weight[i]) return options[i];
    draw -= weight[i];
  }
  for (std::size_t i = options.size(); i-- > 0;) {
    if (weight[i] > 0.0) return options[i];
  }
  return current;
}

std::vector<DevicePose> step_mobility(std::vector<DevicePose> poses, const GridMap& grid,
                                      std::mt19937_64& rng, double dt,
                                      const TurnProbabilities& turns) {
  if (dt <= 0.0) return poses;
  for (auto& pose : poses) {
    double remaining = pose.speed * dt;
    while (remaining > 0.0) {
      const double to_junction = distance_to_junction(pose.position, pose.heading, grid);
      if (!std::isfinite(to_junction)) {
        // Sitting on a boundary junction facing outward.
        pose.heading = choose_heading(pose.heading, snap_to_grid(pose.position, grid.cell_width),
                                      grid, rng, turns);
        continue;
      }
      if (remaining < to_junction) {
        pose.position = advance(pose.position, pose.heading, remaining);
        break;
      }
      pose.position = snap_to_grid(advance(pose.position, pose.heading, to_junction),
                                   grid.cell_width);
      remaining -= to_junction;
      pose.heading = choose_heading(pose.heading, pose.position, grid, rng, turns);
    }
  }
  return poses;
}

double db_to_linear(double db) noexcept { return std::pow(10.0, db / 10.0); }

double channel_gain(double d, const ChannelParams& params) noexcept {
  const double clamped = std::max(d, kMinDistance);
  return params.path_loss_coeff * std::pow(clamped, -params.path_loss_exp);
}

double tx_rate(double bandwidth_hz, double tx_power_mw, double gain, double noise_mw) noexcept {
  return bandwidth_hz * std::log1p(tx_power_mw * gain / noise_mw);
}

NetworkSnapshot snapshot(const std::vector<DevicePose>& poses,
                         const std::vector<BaseStation>& stations, const ChannelParams& params,
                         std::size_t epoch) {
  const auto n = static_cast<Eigen::Index>(poses.size());
  const auto m = static_cast<Eigen::Index>(stations.size());
  NetworkSnapshot snap;
  snap.epoch = epoch;
  snap.distance = Eigen::MatrixXd::Zero(n, m);
  snap.uplink = Eigen::MatrixXd::Zero(n, m);
  snap.downlink = Eigen::MatrixXd::Zero(n, m);
  snap.association.assign(poses.size(), std::nullopt);

  const double noise = db_to_linear(params.noise_power_dbm);
  const double device_power = db_to_linear(params.device_tx_power_dbm);
  for (Eigen::Index u = 0; u < n; ++u) {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& bs = stations[static_cast<std::size_t>(i)];
      const double d = distance(poses[static_cast<std::size_t>(u)].position, bs.position);
      snap.distance(u, i) = d;
      if (d > bs.coverage_radius) continue;
      const double g = channel_gain(d, params);
      snap.uplink(u, i) = tx_rate(bs.bandwidth_hz, device_power, g, noise);
      snap.downlink(u, i) = tx_rate(bs.bandwidth_hz, db_to_linear(bs.tx_power_dbm), g, noise);
      const bool closer = d < best_d - kTieTolerance;
      const bool tie_lower_id = std::abs(d - best_d) <= kTieTolerance && best &&
                                bs.id < stations[*best].id;
      if (!best || closer || tie_lower_id) {
        best = static_cast<std::size_t>(i);
        best_d = std::min(best_d, d);
      }
    }
    snap.association[static_cast<std::size_t>(u)] = best;
  }
  return snap;
}

void write_snapshot_csv(std::ostream& out, const NetworkSnapshot& snap,
                        const std::vector<BaseStation>& stations, bool header) {
  if (header) out << "epoch,device,bs,distance,rate\n";
  out.precision(17);
  for (Eigen::Index u = 0; u < snap.uplink.rows(); ++u) {
    for (Eigen::Index i = 0; i < snap.uplink.cols(); ++i) {
      out << snap.epoch << ',' << u << ',' << stations[static_cast<std::size_t>(i)].id << ','
          << snap.distance(u, i) << ',' << snap.uplink(u, i) << '\n';
    }
  }
}

}  // namespace mmfl::net
