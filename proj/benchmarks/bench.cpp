#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mmfl/protocol.hpp"
#include "mmfl/selector.hpp"
#include "mmfl/tensor_nn.hpp"
#include "mmfl/timing.hpp"

using namespace mmfl;

namespace {

nn::ModelSpec gru(std::size_t hidden) {
  return {"GRU " + std::to_string(hidden), 87, nn::CellKind::gated_recurrent, hidden, 1};
}

nn::LabeledBatch batch(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  nn::LabeledBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    nn::Sequence s(10, 87);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = d(rng);
    b.inputs.push_back(std::move(s));
    b.labels.push_back(static_cast<int>(i % 2));
  }
  return b;
}

void BM_Forward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto w = nn::init_model(gru(static_cast<std::size_t>(state.range(0))), rng);
  const auto b = batch(1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(w, b.inputs[0]));
}
BENCHMARK(BM_Forward)->Arg(28)->Arg(32);

void BM_LossGradient(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto w = nn::init_model(gru(32), rng);
  const auto b = batch(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::loss_gradient(w, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossGradient)->Arg(60)->Arg(900)->Unit(benchmark::kMillisecond);

void BM_PartialAggregate(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::vector<fl::Upload> ups;
  for (std::size_t u = 0; u < 10; ++u) ups.push_back({u, nn::init_model(gru(32), rng), 900, false});
  for (auto _ : state) benchmark::DoNotOptimize(fl::partial_aggregate(ups, ups[0].declared_weights));
}
BENCHMARK(BM_PartialAggregate);

void BM_EvaluateEpoch(benchmark::State& state) {
  std::vector<timing::DeviceLoad> dev(10);
  for (std::size_t u = 0; u < dev.size(); ++u) {
    dev[u].station = u % 2;
    dev[u].slave = u % 2;
    dev[u].planned_params = u % 2 ? 11553 : 9773;
    dev[u].data_size = 900;
    dev[u].uplink_bps = dev[u].downlink_bps = 1e8 + 1e7 * static_cast<double>(u);
  }
  const std::vector<timing::StationLoad> st{{3.2e9, 2400}, {3.2e9, 2400}};
  const std::vector<double> slaves{9773, 11553};
  const timing::ComputeProfile prof;
  for (auto _ : state) benchmark::DoNotOptimize(timing::evaluate_epoch(dev, st, slaves, 11553, 1, true, prof));
}
BENCHMARK(BM_EvaluateEpoch);

void BM_SelectAction(benchmark::State& state) {
  const auto catalog = fl::ModelCatalog::make({gru(28), gru(32)}, gru(32));
  select::DrlAgent agent(10, 2, catalog, {}, 4);
  net::NetworkSnapshot snap;
  snap.uplink = Eigen::MatrixXd::Constant(10, 2, 5e8);
  snap.downlink = snap.distance = snap.uplink;
  snap.association.assign(10, std::size_t{0});
  const auto prev = fl::AssignmentPlan::from_indices(0, std::vector<std::size_t>(10, 0), catalog);
  const auto s = agent.observe(snap, prev);
  for (auto _ : state) benchmark::DoNotOptimize(agent.choose(s, 0.0, 0));
}
BENCHMARK(BM_SelectAction);

}  // namespace

BENCHMARK_MAIN();
