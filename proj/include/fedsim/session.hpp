#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/engine.hpp"

namespace fedsim {

struct DataConfig {
  DatasetKind kind = DatasetKind::Gauss;
  int n = 200;
  double noise = 0.1;
  double train_ratio = 0.5;
  PartitionMode partition = PartitionMode::DirichletLabel;
  double alpha_label = 0.5;
  double alpha_size = 1.0;

  void validate() const;
};

struct SessionConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  NetworkSpec network;
  FLConfig fl;

  void validate() const;
};

nlohmann::json to_json(const SessionConfig& cfg);
SessionConfig session_config_from_json(const nlohmann::json& j);

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);
nlohmann::json partition_to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const RoundReport& r);
RoundReport report_from_json(const nlohmann::json& j);

enum class SessionStatus { Idle, Running, FinishedError };

// True for parameters that may change mid-run (next round boundary);
// everything else requires a session reset.
bool is_hot_param(const std::string& key);

// Stateful façade over the engine: owns dataset, clients, server state and
// the metrics series; all commands are processed serially.
class Session {
 public:
  explicit Session(const SessionConfig& cfg);  // throws ValidationError

  std::vector<RoundReport> step(int count);

  // Hot parameters only; takes effect at the next round boundary.
  void set_param(const std::string& key, const nlohmann::json& value);

  std::vector<double> train_local(int client_id, int epochs);

  // kinds: metrics, participation, data_distribution, config,
  // boundary_global, boundary_client:<id>, boundary_cluster:<id>
  nlohmann::json snapshot(const std::vector<std::string>& kinds) const;

  void reset(std::optional<std::uint64_t> new_seed);

  const SessionConfig& config() const { return cfg_; }
  const MetricsSeries& series() const { return series_; }
  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const Dataset& dataset() const { return dataset_; }
  std::size_t param_count() const { return network_spec().param_count(); }
  const NetworkSpec& network_spec() const { return cfg_.network; }
  SessionStatus status() const { return status_; }

 private:
  void build();

  SessionConfig cfg_;
  Dataset dataset_;
  Partition partition_;
  ServerState server_;
  std::vector<ClientState> clients_;
  MetricsSeries series_;
  SessionStatus status_ = SessionStatus::Idle;
};

// 50x50 model outputs over [-6,6]^2, row-major with x1 fastest, origin
// at (-6,-6).
std::vector<double> boundary_grid(const NetworkSpec& spec,
                                  const std::vector<double>& weights);

inline constexpr int kBoundaryGridSize = 50;

}  // namespace fedsim
