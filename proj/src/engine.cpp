#include "fedsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "fedavg") return Algorithm::FedAvg;
  if (s == "fedprox") return Algorithm::FedProx;
  if (s == "fedadam") return Algorithm::FedAdam;
  if (s == "scaffold") return Algorithm::Scaffold;
  throw ValidationError("algorithm", "unknown algorithm: " + s);
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedProx: return "fedprox";
    case Algorithm::FedAdam: return "fedadam";
    case Algorithm::Scaffold: return "scaffold";
  }
  return "?";
}

void FLConfig::validate() const {
  if (n_clients < 1) throw ValidationError("n_clients", "n_clients must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0))
    throw ValidationError("client_fraction", "client_fraction must be in (0,1]");
  if (dropout_prob < 0.0 || dropout_prob > 1.0)
    throw ValidationError("dropout_prob", "dropout_prob must be in [0,1]");
  if (local_epochs < 1)
    throw ValidationError("local_epochs", "local_epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size", "batch_size must be >= 1");
  if (!(client_lr > 0.0))
    throw ValidationError("client_lr", "client_lr must be > 0");
  if (mu < 0.0) throw ValidationError("mu", "mu must be >= 0");
  if (mu != 0.0 && algorithm != Algorithm::FedProx)
    throw ValidationError("mu", "mu must be 0 unless algorithm is fedprox");
  if (!(server_lr > 0.0))
    throw ValidationError("server_lr", "server_lr must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0)
    throw ValidationError("beta1", "beta1 must be in [0,1)");
  if (beta2 < 0.0 || beta2 >= 1.0)
    throw ValidationError("beta2", "beta2 must be in [0,1)");
  if (!(tau > 0.0)) throw ValidationError("tau", "tau must be > 0");
  if (!(dp_clip > 0.0)) throw ValidationError("dp_clip", "dp_clip must be > 0");
  if (dp_sigma < 0.0) throw ValidationError("dp_sigma", "dp_sigma must be >= 0");
  if (cluster_k < 1) throw ValidationError("cluster_k", "cluster_k must be >= 1");
  if (cluster_k > n_clients)
    throw ValidationError("cluster_k", "cluster_k must be <= n_clients");
  if (cluster_warmup < 0)
    throw ValidationError("cluster_warmup", "cluster_warmup must be >= 0");
  if (cluster_period < 1)
    throw ValidationError("cluster_period", "cluster_period must be >= 1");
}

std::vector<int> sample_clients(int n_clients, double client_fraction,
                                double dropout_prob, std::mt19937_64& rng) {
  int m = static_cast<int>(std::ceil(client_fraction * n_clients - 1e-9));
  m = std::clamp(m, 0, n_clients);
  std::vector<int> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  if (dropout_prob > 0.0) {
    std::bernoulli_distribution drop(dropout_prob);
    std::vector<int> kept;
    for (int id : ids)
      if (!drop(rng)) kept.push_back(id);
    ids = std::move(kept);
  }
  return ids;
}

namespace {

std::vector<Point> client_points(const ClientState& client,
                                 const Dataset& dataset) {
  std::vector<Point> pts;
  pts.reserve(client.data_indices.size());
  for (int i : client.data_indices) pts.push_back(dataset.points[i]);
  return pts;
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ClientUpdate local_train(ClientState& client, const std::vector<double>& global_w,
                         const FLConfig& cfg, const NetworkSpec& spec,
                         const Dataset& dataset,
                         const std::vector<double>& server_control,
                         std::mt19937_64& rng) {
  std::vector<Point> pts = client_points(client, dataset);
  if (pts.empty()) throw ArgumentError("local_train: client has no data");

  const std::size_t P = global_w.size();
  std::vector<double> w = global_w;
  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  long long steps = 0;

  WeightVector wv;
  wv.layout = spec.layer_shapes();
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Point> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(pts[order[i]]);

      wv.values = w;
      Network net = unflatten_weights(wv, spec);
      LossGrad lg = loss_and_gradient(net, batch);
      std::vector<double>& g = lg.grad.values;
      if (cfg.algorithm == Algorithm::FedProx && cfg.mu != 0.0) {
        for (std::size_t j = 0; j < P; ++j) g[j] += cfg.mu * (w[j] - global_w[j]);
      }
      if (cfg.algorithm == Algorithm::Scaffold) {
        for (std::size_t j = 0; j < P; ++j)
          g[j] += server_control[j] - client.control_variate[j];
      }
      for (std::size_t j = 0; j < P; ++j) w[j] -= cfg.client_lr * g[j];
      ++steps;
    }
  }

  ClientUpdate upd;
  upd.client_id = client.client_id;
  upd.n_samples = static_cast<int>(pts.size());
  upd.delta.resize(P);
  for (std::size_t j = 0; j < P; ++j) upd.delta[j] = w[j] - global_w[j];

  wv.values = w;
  upd.final_local_loss = loss_and_gradient(unflatten_weights(wv, spec), pts).loss;

  if (cfg.algorithm == Algorithm::Scaffold) {
    upd.control_delta.assign(P, 0.0);
    double denom = static_cast<double>(steps) * cfg.client_lr;
    if (denom > 0.0) {
      for (std::size_t j = 0; j < P; ++j) {
        double ci_new = client.control_variate[j] - server_control[j] +
                        (global_w[j] - w[j]) / denom;
        upd.control_delta[j] = ci_new - client.control_variate[j];
        client.control_variate[j] = ci_new;
      }
    }
  }

  client.local_weights = std::move(w);
  client.has_trained = true;
  return upd;
}

std::vector<double> apply_dp(std::vector<double> delta, double dp_clip,
                             double dp_sigma, std::mt19937_64& rng) {
  if (std::isfinite(dp_clip)) {
    double norm = l2_norm(delta);
    if (norm > dp_clip) {
      double scale = dp_clip / norm;
      for (double& v : delta) v *= scale;
    }
    if (dp_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, dp_sigma * dp_clip);
      for (double& v : delta) v += noise(rng);
    }
  }
  return delta;
}

std::vector<double> aggregate_weighted(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw ArgumentError("aggregate_weighted: no updates");
  const std::size_t P = updates[0].delta.size();
  std::vector<double> agg(P, 0.0);
  double total = 0.0;
  for (const ClientUpdate& u : updates) {
    if (u.delta.size() != P)
      throw ShapeError("aggregate_weighted: delta length mismatch");
    total += u.n_samples;
    for (std::size_t j = 0; j < P; ++j) agg[j] += u.n_samples * u.delta[j];
  }
  for (double& v : agg) v /= total;
  return agg;
}

void server_apply(ServerState& server, int model_idx,
                  const std::vector<double>& aggregated, const FLConfig& cfg) {
  std::vector<double>& w = server.models[model_idx];
  if (aggregated.size() != w.size())
    throw ShapeError("server_apply: aggregated length mismatch");
  if (cfg.algorithm == Algorithm::FedAdam) {
    std::vector<double>& m = server.adam_m[model_idx];
    std::vector<double>& v = server.adam_v[model_idx];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * aggregated[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * aggregated[j] * aggregated[j];
      w[j] += cfg.server_lr * m[j] / (std::sqrt(v[j]) + cfg.tau);
    }
  } else {
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] += cfg.server_lr * aggregated[j];
  }
}

void scaffold_server_update(ServerState& server,
                            const std::vector<ClientUpdate>& updates,
                            int n_clients) {
  if (updates.empty()) return;
  const std::size_t P = server.server_control.size();
  std::vector<double> mean(P, 0.0);
  for (const ClientUpdate& u : updates)
    for (std::size_t j = 0; j < P; ++j) mean[j] += u.control_delta[j];
  double scale = static_cast<double>(updates.size()) /
                 (static_cast<double>(n_clients) * updates.size());
  for (std::size_t j = 0; j < P; ++j)
    server.server_control[j] += scale * mean[j];
}

bool recluster_due(int round, int warmup, int period) {
  return round >= warmup && (round - warmup) % period == 0;
}

void recluster(std::vector<ClientState>& clients, ServerState& server,
               const FLConfig& cfg, std::mt19937_64& rng) {
  std::vector<std::vector<double>> features;
  features.reserve(clients.size());
  for (const ClientState& c : clients)
    features.push_back(c.has_trained ? c.local_weights
                                     : server.models[c.cluster_id]);

  KMeansResult km =
      kmeans(features, cfg.cluster_k, cfg.cluster_metric, rng);

  const std::size_t P = server.models[0].size();
  std::vector<std::vector<double>> sums(cfg.cluster_k,
                                        std::vector<double>(P, 0.0));
  std::vector<int> counts(cfg.cluster_k, 0);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    int c = km.assignments[i];
    clients[i].cluster_id = c;
    ++counts[c];
    for (std::size_t j = 0; j < P; ++j) sums[c][j] += features[i][j];
  }
  for (int c = 0; c < cfg.cluster_k; ++c) {
    if (counts[c] == 0) continue;  // empty cluster keeps its previous model
    for (std::size_t j = 0; j < P; ++j)
      server.models[c][j] = sums[c][j] / counts[c];
  }
}

std::pair<double, double> global_losses(const ServerState& server,
                                        const std::vector<ClientState>& clients,
                                        const NetworkSpec& spec,
                                        const Dataset& dataset) {
  std::vector<Network> nets;
  nets.reserve(server.models.size());
  WeightVector wv;
  wv.layout = spec.layer_shapes();
  for (const auto& m : server.models) {
    wv.values = m;
    nets.push_back(unflatten_weights(wv, spec));
  }

  double train_loss = 0.0;
  std::size_t train_count = 0;
  if (clients.empty()) {
    for (int i : dataset.train_indices) {
      const Point& p = dataset.points[i];
      double d = forward(nets[0], p.x1, p.x2) - p.label;
      train_loss += 0.5 * d * d;
      ++train_count;
    }
  } else {
    for (const ClientState& c : clients) {
      const Network& net = nets[c.cluster_id];
      for (int i : c.data_indices) {
        const Point& p = dataset.points[i];
        double d = forward(net, p.x1, p.x2) - p.label;
        train_loss += 0.5 * d * d;
        ++train_count;
      }
    }
  }
  if (train_count > 0) train_loss /= static_cast<double>(train_count);

  double test_loss = 0.0;
  for (int i : dataset.test_indices) {
    const Point& p = dataset.points[i];
    double d = forward(nets[0], p.x1, p.x2) - p.label;
    test_loss += 0.5 * d * d;
  }
  if (!dataset.test_indices.empty())
    test_loss /= static_cast<double>(dataset.test_indices.size());

  return {train_loss, test_loss};
}

std::vector<ClientState> make_clients(const Partition& partition,
                                      std::size_t param_count) {
  std::vector<ClientState> clients;
  clients.reserve(partition.assignments.size());
  for (std::size_t i = 0; i < partition.assignments.size(); ++i) {
    ClientState c;
    c.client_id = static_cast<int>(i);
    c.data_indices = partition.assignments[i];
    c.control_variate.assign(param_count, 0.0);
    clients.push_back(std::move(c));
  }
  return clients;
}

RoundReport one_step_fl(ServerState& server, std::vector<ClientState>& clients,
                        const FLConfig& cfg, const NetworkSpec& spec,
                        const Dataset& dataset, std::uint64_t master_seed) {
  cfg.validate();
  const int round = server.round + 1;
  const std::size_t P = server.models[0].size();

  auto rng_sample = substream(master_seed, "sample", round);
  std::vector<int> participants = sample_clients(
      cfg.n_clients, cfg.client_fraction, cfg.dropout_prob, rng_sample);

  std::vector<ClientUpdate> updates;
  std::vector<int> update_clusters;
  for (int id : participants) {
    ClientState& client = clients[id];
    if (client.data_indices.empty()) continue;  // treated as dropout
    const std::vector<double>& global_w = server.models[client.cluster_id];
    auto rng_batch = substream(master_seed, "batch", round, id);
    ClientUpdate upd = local_train(client, global_w, cfg, spec, dataset,
                                   server.server_control, rng_batch);
    auto rng_dp = substream(master_seed, "dp", round, id);
    upd.delta = apply_dp(std::move(upd.delta), cfg.dp_clip, cfg.dp_sigma, rng_dp);
    updates.push_back(std::move(upd));
    update_clusters.push_back(client.cluster_id);
  }

  for (int c = 0; c < cfg.cluster_k; ++c) {
    std::vector<ClientUpdate> group;
    for (std::size_t i = 0; i < updates.size(); ++i)
      if (update_clusters[i] == c) group.push_back(updates[i]);
    if (group.empty()) continue;
    server_apply(server, c, aggregate_weighted(group), cfg);
  }

  if (cfg.algorithm == Algorithm::Scaffold)
    scaffold_server_update(server, updates, cfg.n_clients);

  if (cfg.cluster_k > 1 && !updates.empty() &&
      recluster_due(round, cfg.cluster_warmup, cfg.cluster_period)) {
    auto rng_km = substream(master_seed, "kmeans", round);
    recluster(clients, server, cfg, rng_km);
  }

  server.round = round;

  RoundReport report;
  report.round = round;
  for (const ClientUpdate& u : updates) {
    report.participants.push_back(u.client_id);
    report.per_client_loss[u.client_id] = u.final_local_loss;
  }
  report.comms_bytes = comms_cost(static_cast<int>(updates.size()), P);
  report.per_cluster_sizes.assign(cfg.cluster_k, 0);
  for (const ClientState& c : clients) ++report.per_cluster_sizes[c.cluster_id];
  auto [train_loss, test_loss] = global_losses(server, clients, spec, dataset);
  report.global_train_loss = train_loss;
  report.global_test_loss = test_loss;
  return report;
}

RoundReport one_step_centralized(ServerState& server,
                                 const std::vector<ClientState>& clients,
                                 const FLConfig& cfg, const NetworkSpec& spec,
                                 const Dataset& dataset,
                                 std::uint64_t master_seed) {
  const int round = server.round + 1;
  auto rng = substream(master_seed, "centralized", round);

  std::vector<Point> train = dataset.train_points();
  std::vector<Point> batch;
  if (static_cast<std::size_t>(cfg.batch_size) >= train.size()) {
    batch = train;
  } else {
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    batch.reserve(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(train[order[i]]);
  }

  WeightVector wv;
  wv.layout = spec.layer_shapes();
  wv.values = server.models[0];
  Network net = unflatten_weights(wv, spec);
  LossGrad lg = loss_and_gradient(net, batch);
  Network next = sgd_step(net, lg.grad, cfg.client_lr);
  server.models[0] = flatten_weights(next).values;
  server.round = round;

  RoundReport report;
  report.round = round;
  report.comms_bytes = 0;
  report.per_cluster_sizes.assign(cfg.cluster_k, 0);
  for (const ClientState& c : clients) ++report.per_cluster_sizes[c.cluster_id];
  auto [train_loss, test_loss] = global_losses(server, clients, spec, dataset);
  report.global_train_loss = train_loss;
  report.global_test_loss = test_loss;
  return report;
}

std::vector<double> train_client_local(int client_id, int epochs,
                                       const ServerState& server,
                                       std::vector<ClientState>& clients,
                                       const FLConfig& cfg,
                                       const NetworkSpec& spec,
                                       const Dataset& dataset,
                                       std::uint64_t master_seed) {
  if (client_id < 0 || static_cast<std::size_t>(client_id) >= clients.size())
    throw UnknownClientError("unknown client id " + std::to_string(client_id));
  if (epochs < 0) throw ArgumentError("train_client_local: epochs must be >= 0");
  if (epochs == 0) return {};

  ClientState& client = clients[client_id];
  std::vector<Point> pts = client_points(client, dataset);
  if (pts.empty()) throw ArgumentError("train_client_local: client has no data");

  const std::vector<double>& global_w = server.models[client.cluster_id];
  const std::size_t P = global_w.size();
  std::vector<double> w = global_w;
  auto rng = substream(master_seed, "manual", server.round, client_id);
  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);

  WeightVector wv;
  wv.layout = spec.layer_shapes();
  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Point> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(pts[order[i]]);
      wv.values = w;
      Network net = unflatten_weights(wv, spec);
      LossGrad lg = loss_and_gradient(net, batch);
      std::vector<double>& g = lg.grad.values;
      if (cfg.algorithm == Algorithm::FedProx && cfg.mu != 0.0)
        for (std::size_t j = 0; j < P; ++j) g[j] += cfg.mu * (w[j] - global_w[j]);
      if (cfg.algorithm == Algorithm::Scaffold)
        for (std::size_t j = 0; j < P; ++j)
          g[j] += server.server_control[j] - client.control_variate[j];
      for (std::size_t j = 0; j < P; ++j) w[j] -= cfg.client_lr * g[j];
    }
    wv.values = w;
    epoch_losses.push_back(
        loss_and_gradient(unflatten_weights(wv, spec), pts).loss);
  }

  client.local_weights = std::move(w);
  client.has_trained = true;
  return epoch_losses;
}

}  // namespace fedsim
