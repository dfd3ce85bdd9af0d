#include <cmath>
#include <limits>

#include <doctest.h>
#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/session.hpp"

using namespace fedsim;
using nlohmann::json;

namespace {

SessionConfig base_config(std::uint64_t seed = 1) {
  SessionConfig cfg;
  cfg.seed = seed;
  cfg.data.n = 120;
  cfg.data.noise = 0.1;
  cfg.fl.n_clients = 4;
  cfg.network.hidden_layers = {3};
  return cfg;
}

}  // namespace

TEST_CASE("session build derives everything from the seed") {
  Session a(base_config(5));
  Session b(base_config(5));
  CHECK(a.server().models == b.server().models);
  CHECK(a.dataset().train_indices == b.dataset().train_indices);
  CHECK(a.clients().size() == 4);
  CHECK(a.status() == SessionStatus::Idle);
  CHECK(a.server().round == 0);
  CHECK(a.series().empty());
}

TEST_CASE("invalid configs name the offending key") {
  SessionConfig cfg = base_config();
  cfg.data.noise = 0.9;
  try {
    Session s(cfg);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.key() == "noise");
  }

  cfg = base_config();
  cfg.fl.n_clients = 1000;  // exceeds train samples
  try {
    Session s(cfg);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.key() == "n_clients");
  }
}

TEST_CASE("step(1) repeated equals one big step") {
  Session a(base_config(7));
  Session b(base_config(7));
  std::vector<RoundReport> singles;
  for (int i = 0; i < 20; ++i) {
    auto r = a.step(1);
    singles.insert(singles.end(), r.begin(), r.end());
  }
  auto batch = b.step(20);
  REQUIRE(batch.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(singles[i] == batch[i]);
  CHECK(a.server().models == b.server().models);
  CHECK(a.series().size() == 20);
}

TEST_CASE("step rejects nonpositive counts") {
  Session s(base_config());
  CHECK_THROWS_AS(s.step(0), ArgumentError);
  CHECK_THROWS_AS(s.step(-3), ArgumentError);
}

TEST_CASE("rounds are 1-based and strictly increasing") {
  Session s(base_config());
  auto r = s.step(3);
  CHECK(r[0].round == 1);
  CHECK(r[2].round == 3);
  CHECK(s.server().round == 3);
}

TEST_CASE("hot params apply at the next round") {
  Session s(base_config(9));
  s.step(2);
  s.set_param("dropout_prob", 1.0);
  auto r = s.step(1);
  CHECK(r[0].participants.empty());
  s.set_param("dropout_prob", 0.0);
  auto r2 = s.step(1);
  CHECK(r2[0].participants.size() == 4);
}

TEST_CASE("cold params are rejected with ColdParamError") {
  Session s(base_config());
  for (const char* key : {"n_clients", "batch_size", "cluster_k", "seed",
                          "alpha_label", "hidden_layers", "beta1"}) {
    CHECK(!is_hot_param(key));
    CHECK_THROWS_AS(s.set_param(key, 3), ColdParamError);
  }
}

TEST_CASE("unknown keys and bad values are rejected without state change") {
  Session s(base_config());
  CHECK_THROWS_AS(s.set_param("warp_factor", 9), ArgumentError);
  CHECK_THROWS_AS(s.set_param("client_lr", "fast"), RangeError);
  CHECK_THROWS_AS(s.set_param("client_lr", -1.0), RangeError);
  CHECK_THROWS_AS(s.set_param("mu", 0.5), RangeError);  // needs fedprox
  CHECK(s.config().fl.client_lr == doctest::Approx(0.03));
  CHECK(s.config().fl.mu == 0.0);
}

TEST_CASE("hot param list matches the documented set") {
  for (const char* key :
       {"dropout_prob", "client_fraction", "local_epochs", "client_lr", "mu",
        "server_lr", "dp_clip", "dp_sigma", "federated_enabled", "algorithm"})
    CHECK(is_hot_param(key));
  CHECK(!is_hot_param("n"));
  CHECK(!is_hot_param(""));
}

TEST_CASE("dp_clip accepts null as infinity") {
  Session s(base_config());
  s.set_param("dp_clip", 1.5);
  CHECK(s.config().fl.dp_clip == doctest::Approx(1.5));
  s.set_param("dp_clip", nullptr);
  CHECK(std::isinf(s.config().fl.dp_clip));
}

TEST_CASE("algorithm switch zeroes moments and control variates") {
  SessionConfig cfg = base_config(11);
  cfg.fl.algorithm = Algorithm::FedAdam;
  Session s(cfg);
  s.step(5);
  bool any_moment = false;
  for (double v : s.server().adam_m[0]) any_moment |= v != 0.0;
  CHECK(any_moment);
  s.set_param("algorithm", "scaffold");
  for (double v : s.server().adam_m[0]) CHECK(v == 0.0);
  for (double v : s.server().adam_v[0]) CHECK(v == 0.0);
  s.step(3);
  bool any_control = false;
  for (const auto& c : s.clients())
    for (double v : c.control_variate) any_control |= v != 0.0;
  CHECK(any_control);
  s.set_param("algorithm", "fedavg");
  for (const auto& c : s.clients())
    for (double v : c.control_variate) CHECK(v == 0.0);
  for (double v : s.server().server_control) CHECK(v == 0.0);
}

TEST_CASE("switching to the same algorithm keeps moments") {
  SessionConfig cfg = base_config(13);
  cfg.fl.algorithm = Algorithm::FedAdam;
  Session s(cfg);
  s.step(3);
  auto before = s.server().adam_m;
  s.set_param("algorithm", "fedadam");
  CHECK(s.server().adam_m == before);
}

TEST_CASE("federated_enabled toggles the centralized path") {
  Session s(base_config(15));
  s.set_param("federated_enabled", false);
  auto r = s.step(2);
  CHECK(r[0].comms_bytes == 0);
  CHECK(r[0].participants.empty());
  s.set_param("federated_enabled", true);
  auto r2 = s.step(1);
  CHECK(r2[0].comms_bytes > 0);
}

TEST_CASE("reset replays the identical run") {
  Session s(base_config(17));
  auto first = s.step(10);
  auto models = s.server().models;
  s.reset(std::nullopt);
  CHECK(s.series().empty());
  CHECK(s.server().round == 0);
  auto second = s.step(10);
  for (int i = 0; i < 10; ++i) CHECK(first[i] == second[i]);
  CHECK(s.server().models == models);
}

TEST_CASE("reset with a new seed changes the trajectory") {
  Session s(base_config(19));
  s.step(5);
  auto models = s.server().models;
  s.reset(123u);
  CHECK(s.config().seed == 123);
  s.step(5);
  CHECK(s.server().models != models);
}

TEST_CASE("set_param survives reset via config") {
  Session s(base_config(21));
  s.set_param("client_lr", 0.07);
  s.reset(std::nullopt);
  CHECK(s.config().fl.client_lr == doctest::Approx(0.07));
}

TEST_CASE("snapshot is pure") {
  Session s(base_config(23));
  s.step(5);
  auto models = s.server().models;
  json a = s.snapshot({"metrics", "participation", "data_distribution",
                       "config", "boundary_global"});
  json b = s.snapshot({"metrics", "participation", "data_distribution",
                       "config", "boundary_global"});
  CHECK(a == b);
  CHECK(s.server().models == models);
  CHECK(s.series().size() == 5);
}

TEST_CASE("metrics snapshot mirrors the series") {
  Session s(base_config(25));
  s.step(4);
  json m = s.snapshot({"metrics"})["metrics"];
  REQUIRE(m.size() == 4);
  CHECK(m[0]["round"] == 1);
  CHECK(m[3]["round"] == 4);
  CHECK(m[0]["participants"] == 4);
  const RoundReport& r = s.series().reports()[0];
  CHECK(m[0]["global_test_loss"].get<double>() ==
        doctest::Approx(r.global_test_loss));
}

TEST_CASE("data_distribution snapshot counts every train point once") {
  Session s(base_config(27));
  json d = s.snapshot({"data_distribution"})["data_distribution"];
  REQUIRE(d.size() == 4);
  int total = 0;
  for (const auto& row : d) total += row["size"].get<int>();
  CHECK(total == static_cast<int>(s.dataset().train_indices.size()));
}

TEST_CASE("boundary snapshots have grid shape and sane values") {
  Session s(base_config(29));
  s.step(2);
  for (const char* kind : {"boundary_global", "boundary_client:0",
                           "boundary_cluster:0"}) {
    json g = s.snapshot({kind})[kind];
    REQUIRE(g.size() == 50 * 50);
    for (const auto& v : g) {
      CHECK(v.get<double>() >= -1.0);
      CHECK(v.get<double>() <= 1.0);
    }
  }
}

TEST_CASE("boundary grid is row-major with x1 fastest") {
  NetworkSpec spec;
  spec.input_features = {Feature::X1, Feature::X2};
  spec.hidden_layers = {};
  // Single linear output layer on (x1, x2): weights then bias.
  std::vector<double> w = {1.0, 0.0, 0.0};  // output = tanh(x1)
  auto grid = boundary_grid(spec, w);
  REQUIRE(grid.size() == 2500);
  CHECK(grid[0] == doctest::Approx(std::tanh(-6.0)));
  CHECK(grid[49] == doctest::Approx(std::tanh(6.0)));
  CHECK(grid[50] == doctest::Approx(grid[0]));  // next row, same x1

  std::vector<double> w2 = {0.0, 1.0, 0.0};  // output = tanh(x2)
  auto grid2 = boundary_grid(spec, w2);
  CHECK(grid2[0] == doctest::Approx(std::tanh(-6.0)));
  CHECK(grid2[49] == doctest::Approx(grid2[0]));  // same row, same x2
  CHECK(grid2[2450] == doctest::Approx(std::tanh(6.0)));
}

TEST_CASE("client boundary uses local weights after train_local") {
  Session s(base_config(31));
  s.step(1);
  json before = s.snapshot({"boundary_client:1"})["boundary_client:1"];
  json global = s.snapshot({"boundary_global"})["boundary_global"];
  s.train_local(1, 5);
  json after = s.snapshot({"boundary_client:1"})["boundary_client:1"];
  CHECK(after != global);
  CHECK(s.snapshot({"boundary_global"})["boundary_global"] == global);
  (void)before;
}

TEST_CASE("snapshot rejects bad kinds and unknown clients") {
  Session s(base_config(33));
  CHECK_THROWS_AS(s.snapshot({"weather"}), ArgumentError);
  CHECK_THROWS_AS(s.snapshot({"boundary_client:99"}), UnknownClientError);
  CHECK_THROWS_AS(s.snapshot({"boundary_client:abc"}), ArgumentError);
  CHECK_THROWS_AS(s.snapshot({"boundary_cluster:7"}), ArgumentError);
}

TEST_CASE("session config serializes and round-trips") {
  SessionConfig cfg = base_config(35);
  cfg.fl.algorithm = Algorithm::FedProx;
  cfg.fl.mu = 0.4;
  cfg.fl.dp_clip = std::numeric_limits<double>::infinity();
  cfg.data.partition = PartitionMode::UniformClassSkewedSize;
  json j = to_json(cfg);
  CHECK(j["fl"]["dp_clip"].is_null());
  SessionConfig back = session_config_from_json(json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(back.fl.mu == doctest::Approx(0.4));
  CHECK(std::isinf(back.fl.dp_clip));
  CHECK(back.data.partition == PartitionMode::UniformClassSkewedSize);
}

TEST_CASE("partial config json falls back to defaults") {
  SessionConfig cfg = session_config_from_json(json::parse(
      R"({"seed": 42, "fl": {"n_clients": 7}})"));
  CHECK(cfg.seed == 42);
  CHECK(cfg.fl.n_clients == 7);
  CHECK(cfg.fl.client_lr == doctest::Approx(0.03));
  CHECK(cfg.data.n == 200);
}

TEST_CASE("round report json round-trips") {
  RoundReport r;
  r.round = 7;
  r.participants = {0, 2};
  r.per_client_loss = {{0, 0.25}, {2, 0.5}};
  r.comms_bytes = 288;
  r.global_train_loss = 0.4;
  r.global_test_loss = 0.45;
  r.per_cluster_sizes = {3, 1};
  RoundReport back = report_from_json(json::parse(report_to_json(r).dump()));
  CHECK(back == r);
}

TEST_CASE("replay from serialized config matches the original") {
  SessionConfig cfg = base_config(37);
  Session a(cfg);
  auto ra = a.step(15);
  Session b(session_config_from_json(to_json(cfg)));
  auto rb = b.step(15);
  for (int i = 0; i < 15; ++i) CHECK(ra[i] == rb[i]);
}
