#include <doctest.h>

#include <cmath>
#include <random>

#include "mmfl/error.hpp"
#include "mmfl/protocol.hpp"

using namespace mmfl;
using nn::CellKind;
using nn::ModelSpec;

namespace {

const ModelSpec kSmall{"small", 3, CellKind::gated_recurrent, 2, 1};
const ModelSpec kLarge{"large", 3, CellKind::gated_recurrent, 4, 1};

fl::ModelCatalog catalog() { return fl::ModelCatalog::make({kSmall, kLarge}, kLarge); }

nn::ModelWeights scalar(double v) {
  return {ModelSpec{"s", 1, CellKind::dense, 0, 0}, {v}};
}

fl::Upload upload(std::size_t device, nn::ModelWeights w, std::size_t size) {
  return {device, std::move(w), size, false};
}

nn::Sequence seq(std::mt19937_64& rng, double shift) {
  std::normal_distribution<double> n(shift, 1.0);
  nn::Sequence s(3, 3);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  return s;
}

}  // namespace

TEST_CASE("catalog finds the master among the slaves") {
  const auto c = catalog();
  CHECK(c.master_slot == std::optional<std::size_t>(1));
  CHECK(c.is_master(1));
  CHECK_FALSE(c.is_master(0));
  auto clash = kLarge;
  clash.model_id = "small";
  CHECK_THROWS_AS(fl::ModelCatalog::make({kSmall}, clash), ConfigError);
  CHECK_THROWS_AS(fl::ModelCatalog::make({}, kLarge), ConfigError);
}

TEST_CASE("master cap uses a floor") {
  CHECK(fl::master_cap(10, 0.6) == 6);
  CHECK(fl::master_cap(10, 0.65) == 6);
  CHECK(fl::master_cap(10, 1.0) == 10);
  CHECK(fl::master_cap(3, 0.5) == 1);
}

TEST_CASE("plan validation") {
  const auto c = catalog();
  const std::vector<std::size_t> six{1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  CHECK(fl::validate_plan(fl::AssignmentPlan::from_indices(0, six, c), c, 10, 0.6).empty());

  const std::vector<std::size_t> seven{1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
  const auto v = fl::validate_plan(fl::AssignmentPlan::from_indices(0, seven, c), c, 10, 0.6);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == fl::ViolationKind::master_ratio);

  auto two_hot = fl::AssignmentPlan::from_indices(0, six, c);
  two_hot.selection[7][1] = 1;
  const auto w = fl::validate_plan(two_hot, c, 10, 1.0);
  REQUIRE(w.size() == 1);
  CHECK(w[0].kind == fl::ViolationKind::not_one_hot);
  CHECK(w[0].device == std::optional<std::size_t>(7));

  CHECK(fl::validate_plan(fl::AssignmentPlan::from_indices(0, six, c), c, 9, 1.0).front().kind ==
        fl::ViolationKind::size_mismatch);
}

TEST_CASE("mitigation is structural") {
  const auto c = catalog();
  std::mt19937_64 rng(1);
  const std::vector<std::size_t> models{0, 1, 0};
  const auto plan = fl::AssignmentPlan::from_indices(0, models, c);
  const auto small = nn::init_model(kSmall, rng);
  const auto large = nn::init_model(kLarge, rng);
  std::vector<fl::Upload> ups{upload(0, large, 5), upload(1, large, 5), upload(2, small, 5),
                              upload(7, small, 5)};
  ups[0].poisoned = true;
  ups[1].poisoned = true;  // planned on the master: passes
  const auto [accepted, report] = fl::mitigate(ups, plan);
  REQUIRE(accepted.size() == 2);
  CHECK(accepted[0].device_id == 1);
  CHECK(accepted[1].device_id == 2);
  REQUIRE(report.excluded.size() == 2);
  CHECK(report.excluded[0].reason == std::string(fl::kStructureMismatch));
  CHECK(report.excluded[0].poisoned);
  CHECK(report.excluded[1].reason == std::string(fl::kUnplannedDevice));
  CHECK(report.included_per_slave == std::vector<std::size_t>{1, 1});
}

TEST_CASE("signature check rejects a same-size foreign structure") {
  const ModelSpec twin{"twin", 3, CellKind::dense, 0, 1};  // 4 params
  const ModelSpec other{"other", 1, CellKind::dense, 1, 1};  // 4 params
  REQUIRE(nn::param_count(twin) == nn::param_count(other));
  const auto c = fl::ModelCatalog::make({twin}, twin);
  const std::vector<std::size_t> models{0};
  const auto plan = fl::AssignmentPlan::from_indices(0, models, c);
  const std::vector<fl::Upload> ups{upload(0, nn::ModelWeights::zeros(other), 1)};
  CHECK(fl::mitigate(ups, plan, false).first.size() == 1);
  CHECK(fl::mitigate(ups, plan, true).first.empty());
}

TEST_CASE("partial aggregation is the data-weighted mean") {
  const std::vector<fl::Upload> ups{upload(0, scalar(0.0), 1), upload(1, scalar(4.0), 3)};
  CHECK(fl::partial_aggregate(ups, scalar(9.0)).params[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(fl::partial_aggregate({}, scalar(9.0)).params[0] == 9.0);

  const std::vector<fl::Upload> empty_data{upload(0, scalar(2.0), 0), upload(1, scalar(4.0), 0)};
  CHECK(fl::partial_aggregate(empty_data, scalar(0.0)).params[0] == doctest::Approx(3.0));

  std::mt19937_64 rng(2);
  const std::vector<fl::Upload> mixed{upload(0, nn::init_model(kSmall, rng), 1),
                                      upload(1, nn::init_model(kLarge, rng), 1)};
  CHECK_THROWS_AS(fl::partial_aggregate(mixed, mixed[0].declared_weights), ProtocolError);
}

TEST_CASE("partial aggregate stays inside the coordinate envelope") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::vector<fl::Upload> ups;
  for (std::size_t u = 0; u < 5; ++u) ups.push_back(upload(u, nn::init_model(kSmall, rng), size(rng)));
  const auto agg = fl::partial_aggregate(ups, ups[0].declared_weights);
  for (std::size_t i = 0; i < agg.size(); ++i) {
    double lo = 1e9, hi = -1e9;
    for (const auto& up : ups) {
      lo = std::min(lo, up.declared_weights.params[i]);
      hi = std::max(hi, up.declared_weights.params[i]);
    }
    CHECK(agg.params[i] >= lo - 1e-15);
    CHECK(agg.params[i] <= hi + 1e-15);
  }
}

TEST_CASE("cloud aggregation is the unweighted mean") {
  const std::vector<nn::ModelWeights> ms{scalar(1.0), scalar(3.0)};
  CHECK(fl::cloud_aggregate(ms).params[0] == 2.0);
  const std::vector<nn::ModelWeights> same{scalar(5.0), scalar(5.0)};
  CHECK(fl::cloud_aggregate(same).params[0] == 5.0);
  CHECK_THROWS_AS(fl::cloud_aggregate({}), ProtocolError);
  std::mt19937_64 rng(4);
  const std::vector<nn::ModelWeights> bad{nn::init_model(kSmall, rng), nn::init_model(kLarge, rng)};
  CHECK_THROWS_AS(fl::cloud_aggregate(bad), ProtocolError);
}

TEST_CASE("knowledge transfer pulls the master toward the slave labels") {
  std::mt19937_64 rng(5);
  // A slave whose output bias saturates at 1.
  auto slave = nn::init_model(kSmall, rng);
  slave.params.back() = 20.0;
  fl::EdgeState edge;
  edge.master = nn::init_model(kLarge, rng);
  edge.slaves = {slave};
  for (int i = 0; i < 20; ++i) edge.edge_data.push_back(seq(rng, 0.0));
  const auto mean_output = [&](const nn::ModelWeights& w) {
    double s = 0.0;
    for (double p : nn::forward_batch(w, edge.edge_data)) s += p;
    return s / static_cast<double>(edge.edge_data.size());
  };
  const auto trained = fl::knowledge_transfer(edge, 0.5, 5);
  CHECK(mean_output(trained) > mean_output(edge.master));
  CHECK(fl::knowledge_transfer(edge, 0.5, 0).params == edge.master.params);
}

TEST_CASE("broadcast delivers the planned structure") {
  const auto c = catalog();
  std::mt19937_64 rng(6);
  fl::EdgeState edge;
  edge.slaves = {nn::init_model(kSmall, rng), nn::init_model(kLarge, rng)};
  const auto global = nn::init_model(kLarge, rng);
  net::NetworkSnapshot net;
  net.association = {0, 0, std::nullopt};
  const std::vector<std::size_t> models{0, 1, 0};
  const auto plan = fl::AssignmentPlan::from_indices(0, models, c);
  const std::vector<nn::ModelWeights> held(3, nn::init_model(kSmall, rng));
  const std::vector<fl::EdgeState> edges{edge};
  const auto out = fl::broadcast(plan, c, edges, global, net, held);
  CHECK(out[0].params == edge.slaves[0].params);
  CHECK(out[1].params == global.params);
  CHECK(out[2].params == held[2].params);
}

TEST_CASE("an epoch with every device excluded leaves the slaves untouched") {
  const auto c = catalog();
  std::mt19937_64 rng(7);
  fl::WorldState w;
  w.catalog = c;
  w.stations = {net::BaseStation{}};
  w.network.association = {0, 0};
  w.network.uplink = Eigen::MatrixXd::Constant(2, 1, 1e8);
  w.network.downlink = Eigen::MatrixXd::Constant(2, 1, 1e8);
  w.network.distance = Eigen::MatrixXd::Constant(2, 1, 10.0);
  w.global = nn::init_model(kLarge, rng);
  fl::EdgeState e;
  e.slaves = {nn::init_model(kSmall, rng), w.global};
  w.edges = {e};
  for (int u = 0; u < 2; ++u) {
    fl::DeviceState d;
    d.data.inputs = {seq(rng, 1.0), seq(rng, -1.0)};
    d.data.labels = {1, 0};
    d.held = e.slaves[0];
    w.devices.push_back(d);
  }
  const auto before = w.edges[0].slaves[0].params;
  const auto global_before = w.global.params;
  fl::AdversaryHook everyone = [&](std::vector<fl::Upload>& ups, const nn::ModelWeights& g) {
    for (auto& up : ups) {
      up.declared_weights = g;
      up.poisoned = true;
    }
  };
  const std::vector<std::size_t> models{0, 0};
  const auto m = fl::run_epoch(w, fl::AssignmentPlan::from_indices(0, models, c), everyone, {});
  CHECK(m.poisoned_uploads == 2);
  CHECK(m.poisoned_accepted == 0);
  CHECK(m.mitigation.excluded.size() == 2);
  CHECK(w.edges[0].slaves[0].params == before);
  CHECK(w.global.params == global_before);
  CHECK(m.timing.recognition.size() == 2);
  CHECK(m.timing.recognition[0] > 0.0);
}
