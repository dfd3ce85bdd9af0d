#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/kmeans.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/nn.hpp"

namespace fedsim {

enum class Algorithm { FedAvg, FedProx, FedAdam, Scaffold };

Algorithm algorithm_from_string(const std::string& s);
std::string to_string(Algorithm a);

struct FLConfig {
  Algorithm algorithm = Algorithm::FedAvg;
  int n_clients = 5;
  double client_fraction = 1.0;
  double dropout_prob = 0.0;
  int local_epochs = 1;
  int batch_size = 10;
  double client_lr = 0.03;
  double mu = 0.0;  // FedProx proximal coefficient
  double server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 1e-3;
  double dp_clip = std::numeric_limits<double>::infinity();
  double dp_sigma = 0.0;
  int cluster_k = 1;
  ClusterMetric cluster_metric = ClusterMetric::L2;
  int cluster_warmup = 10;
  int cluster_period = 5;
  bool federated_enabled = true;

  void validate() const;  // throws ValidationError naming the field
};

struct ClientState {
  int client_id = 0;
  std::vector<int> data_indices;        // train indices owned by this client
  std::vector<double> control_variate;  // SCAFFOLD c_i
  int cluster_id = 0;
  std::vector<double> local_weights;    // last post-training weights
  bool has_trained = false;
};

struct ServerState {
  std::vector<std::vector<double>> models;  // one per cluster
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::vector<double> server_control;       // SCAFFOLD c
  int round = 0;
};

struct ClientUpdate {
  int client_id = 0;
  std::vector<double> delta;  // post-DP
  int n_samples = 0;
  double final_local_loss = 0.0;
  std::vector<double> control_delta;  // c_i+ - c_i, empty when unused
};

std::vector<int> sample_clients(int n_clients, double client_fraction,
                                double dropout_prob, std::mt19937_64& rng);

// Local SGD from global_w with FedProx / SCAFFOLD corrections per cfg.
// Updates the client's control variate and local_weights.
ClientUpdate local_train(ClientState& client, const std::vector<double>& global_w,
                         const FLConfig& cfg, const NetworkSpec& spec,
                         const Dataset& dataset,
                         const std::vector<double>& server_control,
                         std::mt19937_64& rng);

std::vector<double> apply_dp(std::vector<double> delta, double dp_clip,
                             double dp_sigma, std::mt19937_64& rng);

std::vector<double> aggregate_weighted(const std::vector<ClientUpdate>& updates);

void server_apply(ServerState& server, int model_idx,
                  const std::vector<double>& aggregated, const FLConfig& cfg);

void scaffold_server_update(ServerState& server,
                            const std::vector<ClientUpdate>& updates,
                            int n_clients);

// True at completed round r (1-based) when r >= warmup and
// (r - warmup) % period == 0.
bool recluster_due(int round, int warmup, int period);

void recluster(std::vector<ClientState>& clients, ServerState& server,
               const FLConfig& cfg, std::mt19937_64& rng);

RoundReport one_step_fl(ServerState& server, std::vector<ClientState>& clients,
                        const FLConfig& cfg, const NetworkSpec& spec,
                        const Dataset& dataset, std::uint64_t master_seed);

RoundReport one_step_centralized(ServerState& server,
                                 const std::vector<ClientState>& clients,
                                 const FLConfig& cfg, const NetworkSpec& spec,
                                 const Dataset& dataset,
                                 std::uint64_t master_seed);

// Local training for one named client only; global models untouched.
// Returns the loss on the client's data after each epoch.
std::vector<double> train_client_local(int client_id, int epochs,
                                       const ServerState& server,
                                       std::vector<ClientState>& clients,
                                       const FLConfig& cfg,
                                       const NetworkSpec& spec,
                                       const Dataset& dataset,
                                       std::uint64_t master_seed);

// Pooled-split losses; train points scored by their owner's cluster model,
// test points by cluster 0's model.
std::pair<double, double> global_losses(const ServerState& server,
                                        const std::vector<ClientState>& clients,
                                        const NetworkSpec& spec,
                                        const Dataset& dataset);

std::vector<ClientState> make_clients(const Partition& partition,
                                      std::size_t param_count);

}  // namespace fedsim
