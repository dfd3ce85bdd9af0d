#include "fedsim/session.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

using nlohmann::json;

void DataConfig::validate() const {
  if (n < 4) throw ValidationError("n", "n must be >= 4");
  if (noise < 0.0 || noise > 0.5)
    throw ValidationError("noise", "noise must be in [0, 0.5]");
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw ValidationError("train_ratio", "train_ratio must be in (0,1)");
  if (!(alpha_label > 0.0))
    throw ValidationError("alpha_label", "alpha_label must be > 0");
  if (!(alpha_size > 0.0))
    throw ValidationError("alpha_size", "alpha_size must be > 0");
}

void SessionConfig::validate() const {
  data.validate();
  network.validate();
  fl.validate();
  int n_train = std::clamp(
      static_cast<int>(std::lround(data.n * data.train_ratio)), 1, data.n - 1);
  if (fl.n_clients > n_train)
    throw ValidationError("n_clients",
                          "n_clients exceeds number of train samples");
}

json to_json(const SessionConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["data"] = {{"kind", to_string(cfg.data.kind)},
               {"n", cfg.data.n},
               {"noise", cfg.data.noise},
               {"train_ratio", cfg.data.train_ratio},
               {"partition", to_string(cfg.data.partition)},
               {"alpha_label", cfg.data.alpha_label},
               {"alpha_size", cfg.data.alpha_size}};
  json feats = json::array();
  for (Feature f : cfg.network.input_features) feats.push_back(to_string(f));
  j["network"] = {{"input_features", feats},
                  {"hidden_layers", cfg.network.hidden_layers},
                  {"hidden_activation", to_string(cfg.network.hidden_activation)},
                  {"l2_lambda", cfg.network.l2_lambda},
                  {"init_scale", cfg.network.init_scale}};
  const FLConfig& fl = cfg.fl;
  j["fl"] = {{"algorithm", to_string(fl.algorithm)},
             {"n_clients", fl.n_clients},
             {"client_fraction", fl.client_fraction},
             {"dropout_prob", fl.dropout_prob},
             {"local_epochs", fl.local_epochs},
             {"batch_size", fl.batch_size},
             {"client_lr", fl.client_lr},
             {"mu", fl.mu},
             {"server_lr", fl.server_lr},
             {"beta1", fl.beta1},
             {"beta2", fl.beta2},
             {"tau", fl.tau},
             {"dp_clip",
              std::isfinite(fl.dp_clip) ? json(fl.dp_clip) : json(nullptr)},
             {"dp_sigma", fl.dp_sigma},
             {"cluster_k", fl.cluster_k},
             {"cluster_metric", to_string(fl.cluster_metric)},
             {"cluster_warmup", fl.cluster_warmup},
             {"cluster_period", fl.cluster_period},
             {"federated_enabled", fl.federated_enabled}};
  return j;
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SessionConfig session_config_from_json(const json& j) {
  SessionConfig cfg;
  maybe(j, "seed", cfg.seed);
  if (j.contains("data")) {
    const json& d = j.at("data");
    if (d.contains("kind"))
      cfg.data.kind = dataset_kind_from_string(d.at("kind").get<std::string>());
    maybe(d, "n", cfg.data.n);
    maybe(d, "noise", cfg.data.noise);
    maybe(d, "train_ratio", cfg.data.train_ratio);
    if (d.contains("partition"))
      cfg.data.partition =
          partition_mode_from_string(d.at("partition").get<std::string>());
    maybe(d, "alpha_label", cfg.data.alpha_label);
    maybe(d, "alpha_size", cfg.data.alpha_size);
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    if (n.contains("input_features")) {
      cfg.network.input_features.clear();
      for (const auto& f : n.at("input_features"))
        cfg.network.input_features.push_back(
            feature_from_string(f.get<std::string>()));
    }
    maybe(n, "hidden_layers", cfg.network.hidden_layers);
    if (n.contains("hidden_activation"))
      cfg.network.hidden_activation =
          activation_from_string(n.at("hidden_activation").get<std::string>());
    maybe(n, "l2_lambda", cfg.network.l2_lambda);
    maybe(n, "init_scale", cfg.network.init_scale);
  }
  if (j.contains("fl")) {
    const json& f = j.at("fl");
    if (f.contains("algorithm"))
      cfg.fl.algorithm = algorithm_from_string(f.at("algorithm").get<std::string>());
    maybe(f, "n_clients", cfg.fl.n_clients);
    maybe(f, "client_fraction", cfg.fl.client_fraction);
    maybe(f, "dropout_prob", cfg.fl.dropout_prob);
    maybe(f, "local_epochs", cfg.fl.local_epochs);
    maybe(f, "batch_size", cfg.fl.batch_size);
    maybe(f, "client_lr", cfg.fl.client_lr);
    maybe(f, "mu", cfg.fl.mu);
    maybe(f, "server_lr", cfg.fl.server_lr);
    maybe(f, "beta1", cfg.fl.beta1);
    maybe(f, "beta2", cfg.fl.beta2);
    maybe(f, "tau", cfg.fl.tau);
    if (f.contains("dp_clip")) {
      cfg.fl.dp_clip = f.at("dp_clip").is_null()
                           ? std::numeric_limits<double>::infinity()
                           : f.at("dp_clip").get<double>();
    }
    maybe(f, "dp_sigma", cfg.fl.dp_sigma);
    maybe(f, "cluster_k", cfg.fl.cluster_k);
    if (f.contains("cluster_metric"))
      cfg.fl.cluster_metric =
          cluster_metric_from_string(f.at("cluster_metric").get<std::string>());
    maybe(f, "cluster_warmup", cfg.fl.cluster_warmup);
    maybe(f, "cluster_period", cfg.fl.cluster_period);
    maybe(f, "federated_enabled", cfg.fl.federated_enabled);
  }
  return cfg;
}

json dataset_to_json(const Dataset& ds) {
  json pts = json::array();
  for (const Point& p : ds.points)
    pts.push_back({{"x1", p.x1}, {"x2", p.x2}, {"label", p.label}});
  return {{"kind", to_string(ds.kind)},
          {"noise", ds.noise},
          {"points", pts},
          {"train_indices", ds.train_indices},
          {"test_indices", ds.test_indices}};
}

Dataset dataset_from_json(const json& j) {
  Dataset ds;
  ds.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
  ds.noise = j.at("noise").get<double>();
  for (const auto& p : j.at("points")) {
    Point pt;
    pt.x1 = p.at("x1").get<double>();
    pt.x2 = p.at("x2").get<double>();
    pt.label = p.at("label").get<int>();
    ds.points.push_back(pt);
  }
  ds.train_indices = j.at("train_indices").get<std::vector<int>>();
  ds.test_indices = j.at("test_indices").get<std::vector<int>>();
  return ds;
}

json partition_to_json(const Partition& p) {
  return {{"mode", to_string(p.mode)},
          {"alpha_label", p.alpha_label},
          {"alpha_size", p.alpha_size},
          {"assignments", p.assignments}};
}

Partition partition_from_json(const json& j) {
  Partition p;
  p.mode = partition_mode_from_string(j.at("mode").get<std::string>());
  p.alpha_label = j.at("alpha_label").get<double>();
  p.alpha_size = j.at("alpha_size").get<double>();
  p.assignments = j.at("assignments").get<std::vector<std::vector<int>>>();
  return p;
}

Session::Session(const SessionConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
}

void Session::build() {
  auto rng_data = substream(cfg_.seed, "data");
  dataset_ = generate_dataset(cfg_.data.kind, cfg_.data.n, cfg_.data.noise,
                              cfg_.data.train_ratio, rng_data);

  auto rng_part = substream(cfg_.seed, "partition");
  switch (cfg_.data.partition) {
    case PartitionMode::IID:
      partition_ = partition_iid(dataset_, cfg_.fl.n_clients, rng_part);
      break;
    case PartitionMode::DirichletLabel:
      partition_ = partition_dirichlet(dataset_, cfg_.fl.n_clients,
                                       cfg_.data.alpha_label, rng_part);
      break;
    case PartitionMode::UniformClassSkewedSize:
      partition_ = partition_uniform_class_skewed_size(
          dataset_, cfg_.fl.n_clients, cfg_.data.alpha_size, rng_part);
      break;
  }

  auto rng_init = substream(cfg_.seed, "init");
  Network net = init_network(cfg_.network, rng_init);
  std::vector<double> w0 = flatten_weights(net).values;
  const std::size_t P = w0.size();

  server_ = ServerState{};
  server_.models.assign(cfg_.fl.cluster_k, w0);
  server_.adam_m.assign(cfg_.fl.cluster_k, std::vector<double>(P, 0.0));
  server_.adam_v.assign(cfg_.fl.cluster_k, std::vector<double>(P, 0.0));
  server_.server_control.assign(P, 0.0);
  server_.round = 0;

  clients_ = make_clients(partition_, P);
  series_ = MetricsSeries{};
  status_ = SessionStatus::Idle;
}

std::vector<RoundReport> Session::step(int count) {
  if (count < 1) throw ArgumentError("step: count must be >= 1");
  std::vector<RoundReport> out;
  status_ = SessionStatus::Running;
  try {
    for (int i = 0; i < count; ++i) {
      RoundReport report =
          cfg_.fl.federated_enabled
              ? one_step_fl(server_, clients_, cfg_.fl, cfg_.network, dataset_,
                            cfg_.seed)
              : one_step_centralized(server_, clients_, cfg_.fl, cfg_.network,
                                     dataset_, cfg_.seed);
      series_.append(report);
      out.push_back(std::move(report));
    }
  } catch (...) {
    status_ = SessionStatus::FinishedError;
    throw;
  }
  status_ = SessionStatus::Idle;
  return out;
}

bool is_hot_param(const std::string& key) {
  static const std::vector<std::string> kHotKeys = {
      "dropout_prob", "client_fraction", "local_epochs", "client_lr",
      "mu",           "server_lr",       "dp_clip",      "dp_sigma",
      "federated_enabled", "algorithm"};
  return std::find(kHotKeys.begin(), kHotKeys.end(), key) != kHotKeys.end();
}

void Session::set_param(const std::string& key, const json& value) {
  static const std::vector<std::string> kColdKeys = {
      "n_clients",      "alpha_label",   "alpha_size",     "kind",
      "dataset",        "n",             "noise",          "train_ratio",
      "partition",      "hidden_layers", "input_features", "hidden_activation",
      "l2_lambda",      "init_scale",    "cluster_k",      "cluster_metric",
      "cluster_warmup", "cluster_period", "batch_size",    "beta1",
      "beta2",          "tau",           "seed"};
  if (std::find(kColdKeys.begin(), kColdKeys.end(), key) != kColdKeys.end())
    throw ColdParamError(key, "parameter '" + key + "' requires a session reset");

  FLConfig candidate = cfg_.fl;
  bool algorithm_changed = false;
  try {
    if (key == "dropout_prob") candidate.dropout_prob = value.get<double>();
    else if (key == "client_fraction") candidate.client_fraction = value.get<double>();
    else if (key == "local_epochs") candidate.local_epochs = value.get<int>();
    else if (key == "client_lr") candidate.client_lr = value.get<double>();
    else if (key == "mu") candidate.mu = value.get<double>();
    else if (key == "server_lr") candidate.server_lr = value.get<double>();
    else if (key == "dp_clip") {
      candidate.dp_clip = value.is_null()
                              ? std::numeric_limits<double>::infinity()
                              : value.get<double>();
    } else if (key == "dp_sigma") candidate.dp_sigma = value.get<double>();
    else if (key == "federated_enabled") candidate.federated_enabled = value.get<bool>();
    else if (key == "algorithm") {
      Algorithm next = algorithm_from_string(value.get<std::string>());
      algorithm_changed = next != candidate.algorithm;
      candidate.algorithm = next;
    } else {
      throw ArgumentError("unknown parameter key '" + key + "'");
    }
  } catch (const json::exception&) {
    throw RangeError(key, "bad value type for parameter '" + key + "'");
  }

  try {
    candidate.validate();
  } catch (const ValidationError& e) {
    throw RangeError(e.key(), e.what());
  }

  cfg_.fl = candidate;
  if (algorithm_changed) {
    // Carrying optimizer moments or control variates across algorithms is
    // undefined; zero them on switch.
    const std::size_t P = server_.models[0].size();
    for (auto& m : server_.adam_m) std::fill(m.begin(), m.end(), 0.0);
    for (auto& v : server_.adam_v) std::fill(v.begin(), v.end(), 0.0);
    std::fill(server_.server_control.begin(), server_.server_control.end(), 0.0);
    for (ClientState& c : clients_)
      c.control_variate.assign(P, 0.0);
  }
}

std::vector<double> Session::train_local(int client_id, int epochs) {
  return train_client_local(client_id, epochs, server_, clients_, cfg_.fl,
                            cfg_.network, dataset_, cfg_.seed);
}

std::vector<double> boundary_grid(const NetworkSpec& spec,
                                  const std::vector<double>& weights) {
  WeightVector wv;
  wv.layout = spec.layer_shapes();
  wv.values = weights;
  Network net = unflatten_weights(wv, spec);
  std::vector<double> grid;
  grid.reserve(kBoundaryGridSize * kBoundaryGridSize);
  for (int iy = 0; iy < kBoundaryGridSize; ++iy) {
    double x2 = -6.0 + 12.0 * iy / (kBoundaryGridSize - 1);
    for (int ix = 0; ix < kBoundaryGridSize; ++ix) {
      double x1 = -6.0 + 12.0 * ix / (kBoundaryGridSize - 1);
      grid.push_back(forward(net, x1, x2));
    }
  }
  return grid;
}

json report_to_json(const RoundReport& r) {
  json losses = json::object();
  for (const auto& [id, loss] : r.per_client_loss)
    losses[std::to_string(id)] = loss;
  return {{"round", r.round},
          {"participants", r.participants},
          {"per_client_loss", losses},
          {"comms_bytes", r.comms_bytes},
          {"global_train_loss", r.global_train_loss},
          {"global_test_loss", r.global_test_loss},
          {"per_cluster_sizes", r.per_cluster_sizes}};
}

RoundReport report_from_json(const json& j) {
  RoundReport r;
  r.round = j.at("round").get<int>();
  r.participants = j.at("participants").get<std::vector<int>>();
  for (const auto& [key, val] : j.at("per_client_loss").items())
    r.per_client_loss[std::stoi(key)] = val.get<double>();
  r.comms_bytes = j.at("comms_bytes").get<std::int64_t>();
  r.global_train_loss = j.at("global_train_loss").get<double>();
  r.global_test_loss = j.at("global_test_loss").get<double>();
  r.per_cluster_sizes = j.at("per_cluster_sizes").get<std::vector<int>>();
  return r;
}

json Session::snapshot(const std::vector<std::string>& kinds) const {
  json payloads = json::object();
  for (const std::string& kind : kinds) {
    if (kind == "metrics") {
      json rows = json::array();
      for (const RoundReport& r : series_.reports()) {
        auto d = loss_distribution(r);
        rows.push_back({{"round", r.round},
                        {"participants", r.participants.size()},
                        {"comms_bytes", r.comms_bytes},
                        {"loss_min", d ? json(d->min) : json(nullptr)},
                        {"loss_mean", d ? json(d->mean) : json(nullptr)},
                        {"loss_max", d ? json(d->max) : json(nullptr)},
                        {"global_train_loss", r.global_train_loss},
                        {"global_test_loss", r.global_test_loss}});
      }
      payloads["metrics"] = rows;
    } else if (kind == "participation") {
      ParticipationStats stats =
          participation_histogram(series_, cfg_.fl.n_clients);
      payloads["participation"] = {{"counts", stats.counts},
                                   {"rates", stats.rates}};
    } else if (kind == "data_distribution") {
      json rows = json::array();
      auto dist = data_distribution(partition_, dataset_);
      for (std::size_t i = 0; i < dist.size(); ++i)
        rows.push_back({{"client", i},
                        {"size", dist[i].size},
                        {"count_neg", dist[i].count_neg},
                        {"count_pos", dist[i].count_pos}});
      payloads["data_distribution"] = rows;
    } else if (kind == "config") {
      payloads["config"] = to_json(cfg_);
    } else if (kind == "boundary_global") {
      payloads["boundary_global"] = boundary_grid(cfg_.network, server_.models[0]);
    } else if (kind.rfind("boundary_client:", 0) == 0) {
      int id = -1;
      try {
        id = std::stoi(kind.substr(16));
      } catch (...) {
        throw ArgumentError("bad snapshot kind '" + kind + "'");
      }
      if (id < 0 || static_cast<std::size_t>(id) >= clients_.size())
        throw UnknownClientError("unknown client id " + std::to_string(id));
      const ClientState& c = clients_[id];
      payloads[kind] = boundary_grid(
          cfg_.network,
          c.has_trained ? c.local_weights : server_.models[c.cluster_id]);
    } else if (kind.rfind("boundary_cluster:", 0) == 0) {
      int id = -1;
      try {
        id = std::stoi(kind.substr(17));
      } catch (...) {
        throw ArgumentError("bad snapshot kind '" + kind + "'");
      }
      if (id < 0 || static_cast<std::size_t>(id) >= server_.models.size())
        throw ArgumentError("unknown cluster id " + std::to_string(id));
      payloads[kind] = boundary_grid(cfg_.network, server_.models[id]);
    } else {
      throw ArgumentError("unknown snapshot kind '" + kind + "'");
    }
  }
  return payloads;
}

void Session::reset(std::optional<std::uint64_t> new_seed) {
  if (new_seed) cfg_.seed = *new_seed;
  build();
}

}  // namespace fedsim
