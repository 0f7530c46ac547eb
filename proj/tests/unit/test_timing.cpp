#include <doctest.h>

#include <vector>

#include "mmfl/error.hpp"
#include "mmfl/timing.hpp"

using namespace mmfl;
using namespace mmfl::timing;

TEST_CASE("knowledge transfer time, one slave") {
  const std::vector<double> label{1e6};
  CHECK(t_knowledge(2400, label, 1e6, 3.2e9) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(t_knowledge(0, label, 1e6, 3.2e9) == 0.0);
  const std::vector<double> two{1e6, 1e6};
  CHECK(t_knowledge(2400, two, 1e6, 3.2e9) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("partial aggregation time") {
  const std::vector<UploadLink> up{{1e4, 1e6, 0}};
  const std::vector<double> params{1e4};
  CHECK(t_partial_agg(up, params, 100.0, 1e9) == doctest::Approx(0.011).epsilon(1e-12));
  CHECK(t_partial_agg({}, params, 100.0, 1e9) == 0.0);

  const std::vector<UploadLink> dead{{1e4, 0.0, 0}};
  CHECK_THROWS_AS(t_partial_agg(dead, params, 100.0, 1e9), ProtocolError);
}

TEST_CASE("global aggregation takes the slowest station plus the cloud mean") {
  const std::vector<EdgeTimes> edges{{0.5, 0.4, 1e9}, {1.0, 0.4, 1e9}};
  const double master = 1e8;  // master / cloud_rate = 0.1 s
  // brackets 0.5+0.4+0.1 = 1.0 and 1.0+0.4+0.1 = 1.5; cloud 2 * 1e8 * 0.5 / 1e9 = 0.1
  CHECK(t_global_agg(edges, master, 0.5, 1e9) == doctest::Approx(1.6).epsilon(1e-12));
  CHECK_THROWS_AS(t_global_agg({}, 1.0, 1.0, 1.0), ProtocolError);
}

TEST_CASE("downlink time") {
  CHECK(t_downlink(1e4, 1e7, 5e3, 1e6) == doctest::Approx(0.006).epsilon(1e-12));
  CHECK_THROWS_AS(t_downlink(1e4, 1e7, 5e3, 0.0), ProtocolError);
}

TEST_CASE("local training time") {
  CHECK(t_local(900, 1e6, 2e9) == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("recognition time") {
  const std::vector<double> local{0.45, 0.2};
  const std::vector<double> down{0.006, 0.006};
  const std::vector<double> inf{2e6, 2e6};
  const std::vector<double> cpu{2e9, 2e9};
  const auto shared = t_recognition(2, local, 1.6, down, inf, cpu);
  CHECK(shared[0] == doctest::Approx(2.507).epsilon(1e-12));
  CHECK(shared[1] == doctest::Approx(2.507).epsilon(1e-12));
  const auto own = t_recognition(2, local, 1.6, down, inf, cpu, BarrierMode::per_device);
  CHECK(own[1] == doctest::Approx(0.4 + 1.6 + 0.006 + 0.001).epsilon(1e-12));

  const std::vector<double> zeros{0.0};
  const std::vector<double> one_inf{1e6};
  const std::vector<double> one_cpu{2e9};
  CHECK(t_recognition(1, zeros, 0.0, zeros, one_inf, one_cpu)[0] == doctest::Approx(5e-4));
  CHECK_THROWS_AS(t_recognition(0, local, 1.6, down, inf, cpu), InputError);
}

TEST_CASE("epoch evaluation is monotone in link rate and data size") {
  ComputeProfile prof;
  const std::vector<StationLoad> st{{3.2e9, 100}};
  const std::vector<double> slaves{9773, 11553};
  auto run = [&](double rate, std::size_t data) {
    std::vector<DeviceLoad> dev(2);
    for (auto& d : dev) {
      d.station = 0;
      d.planned_params = 9773;
      d.data_size = data;
      d.uplink_bps = rate;
      d.downlink_bps = rate;
    }
    return evaluate_epoch(dev, st, slaves, 11553, 1, true, prof);
  };
  CHECK(run(1e6, 60).mean_recognition() > run(1e7, 60).mean_recognition());
  CHECK(run(1e7, 600).mean_recognition() > run(1e7, 60).mean_recognition());

  std::vector<DeviceLoad> dev(2);
  dev[0].station = 0;
  dev[0].planned_params = 9773;
  dev[0].uplink_bps = dev[0].downlink_bps = 1e7;
  const auto t = evaluate_epoch(dev, st, slaves, 11553, 1, true, prof);
  CHECK(t.participating[0]);
  CHECK_FALSE(t.participating[1]);
  CHECK(t.recognition[1] == 0.0);
  CHECK(t.mean_recognition() == t.recognition[0]);
}
