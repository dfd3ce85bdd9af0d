#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

Feature feature_from_string(const std::string& s) {
  if (s == "x1") return Feature::X1;
  if (s == "x2") return Feature::X2;
  if (s == "x1sq") return Feature::X1Squared;
  if (s == "x2sq") return Feature::X2Squared;
  if (s == "x1x2") return Feature::X1X2;
  if (s == "sinx1") return Feature::SinX1;
  if (s == "sinx2") return Feature::SinX2;
  throw ValidationError("input_features", "unknown feature: " + s);
}

std::string to_string(Feature f) {
  switch (f) {
    case Feature::X1: return "x1";
    case Feature::X2: return "x2";
    case Feature::X1Squared: return "x1sq";
    case Feature::X2Squared: return "x2sq";
    case Feature::X1X2: return "x1x2";
    case Feature::SinX1: return "sinx1";
    case Feature::SinX2: return "sinx2";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "linear") return Activation::Linear;
  throw ValidationError("hidden_activation", "unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "?";
}

void NetworkSpec::validate() const {
  if (input_features.empty())
    throw ValidationError("input_features", "at least one input feature required");
  if (hidden_layers.size() > 6)
    throw ValidationError("hidden_layers", "at most 6 hidden layers");
  for (int w : hidden_layers) {
    if (w < 1) throw ValidationError("hidden_layers", "layer width must be >= 1");
    if (w > 8) throw ValidationError("hidden_layers", "layer width must be <= 8");
  }
  if (l2_lambda < 0) throw ValidationError("l2_lambda", "l2_lambda must be >= 0");
  if (init_scale < 0) throw ValidationError("init_scale", "init_scale must be >= 0");
}

std::vector<std::pair<int, int>> NetworkSpec::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int fan_in = input_dim();
  for (int w : hidden_layers) {
    shapes.emplace_back(w, fan_in);
    fan_in = w;
  }
  shapes.emplace_back(1, fan_in);
  return shapes;
}

std::size_t NetworkSpec::param_count() const {
  std::size_t p = 0;
  for (auto [fo, fi] : layer_shapes()) p += static_cast<std::size_t>(fo) * fi + fo;
  return p;
}

bool Network::operator==(const Network& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].fan_out != other.layers[i].fan_out ||
        layers[i].fan_in != other.layers[i].fan_in ||
        layers[i].weights != other.layers[i].weights ||
        layers[i].biases != other.layers[i].biases)
      return false;
  }
  return true;
}

Network init_network(const NetworkSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  std::uniform_real_distribution<double> dist(-spec.init_scale, spec.init_scale);
  Network net;
  net.spec = spec;
  for (auto [fo, fi] : spec.layer_shapes()) {
    Layer layer;
    layer.fan_out = fo;
    layer.fan_in = fi;
    layer.weights.resize(static_cast<std::size_t>(fo) * fi);
    layer.biases.resize(fo);
    if (spec.init_scale > 0) {
      for (double& w : layer.weights) w = dist(rng);
      for (double& b : layer.biases) b = dist(rng);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

WeightVector flatten_weights(const Network& net) {
  WeightVector wv;
  for (const Layer& layer : net.layers) {
    wv.layout.emplace_back(layer.fan_out, layer.fan_in);
    wv.values.insert(wv.values.end(), layer.weights.begin(), layer.weights.end());
    wv.values.insert(wv.values.end(), layer.biases.begin(), layer.biases.end());
  }
  return wv;
}

Network unflatten_weights(const WeightVector& wv, const NetworkSpec& spec) {
  if (wv.values.size() != spec.param_count())
    throw ShapeError("weight vector length " + std::to_string(wv.values.size()) +
                     " does not match spec parameter count " +
                     std::to_string(spec.param_count()));
  Network net;
  net.spec = spec;
  std::size_t pos = 0;
  for (auto [fo, fi] : spec.layer_shapes()) {
    Layer layer;
    layer.fan_out = fo;
    layer.fan_in = fi;
    layer.weights.assign(wv.values.begin() + pos, wv.values.begin() + pos + fo * fi);
    pos += static_cast<std::size_t>(fo) * fi;
    layer.biases.assign(wv.values.begin() + pos, wv.values.begin() + pos + fo);
    pos += fo;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::ReLU: return z > 0 ? z : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Linear: return z;
  }
  return z;
}

// Derivative expressed through the activation output (valid for all four).
double activate_deriv(Activation a, double out) {
  switch (a) {
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::ReLU: return out > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return out * (1.0 - out);
    case Activation::Linear: return 1.0;
  }
  return 1.0;
}

std::vector<double> input_features(const NetworkSpec& spec, double x1, double x2) {
  std::vector<double> feats;
  feats.reserve(spec.input_features.size());
  for (Feature f : spec.input_features) {
    switch (f) {
      case Feature::X1: feats.push_back(x1); break;
      case Feature::X2: feats.push_back(x2); break;
      case Feature::X1Squared: feats.push_back(x1 * x1); break;
      case Feature::X2Squared: feats.push_back(x2 * x2); break;
      case Feature::X1X2: feats.push_back(x1 * x2); break;
      case Feature::SinX1: feats.push_back(std::sin(x1)); break;
      case Feature::SinX2: feats.push_back(std::sin(x2)); break;
    }
  }
  return feats;
}

// Activations per layer, index 0 is the feature vector.
std::vector<std::vector<double>> forward_pass(const Network& net, double x1,
                                              double x2) {
  std::vector<std::vector<double>> acts;
  acts.push_back(input_features(net.spec, x1, x2));
  const std::size_t n_layers = net.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = net.layers[l];
    Activation a = (l + 1 == n_layers) ? Activation::Tanh : net.spec.hidden_activation;
    std::vector<double> out(layer.fan_out);
    const std::vector<double>& in = acts.back();
    for (int i = 0; i < layer.fan_out; ++i) {
      double z = layer.biases[i];
      for (int j = 0; j < layer.fan_in; ++j)
        z += layer.weights[static_cast<std::size_t>(i) * layer.fan_in + j] * in[j];
      out[i] = activate(a, z);
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

}  // namespace

double forward(const Network& net, double x1, double x2) {
  return forward_pass(net, x1, x2).back()[0];
}

LossGrad loss_and_gradient(const Network& net, std::span<const Point> batch) {
  if (batch.empty()) throw ArgumentError("loss_and_gradient: empty batch");

  const std::size_t n_layers = net.layers.size();
  std::vector<std::vector<double>> gw(n_layers), gb(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    gw[l].assign(net.layers[l].weights.size(), 0.0);
    gb[l].assign(net.layers[l].biases.size(), 0.0);
  }

  double loss = 0.0;
  for (const Point& p : batch) {
    auto acts = forward_pass(net, p.x1, p.x2);
    const double pred = acts.back()[0];
    const double y = static_cast<double>(p.label);
    loss += 0.5 * (pred - y) * (pred - y);

    // delta = dL/dz per layer, backwards.
    std::vector<double> delta(1);
    delta[0] = (pred - y) * activate_deriv(Activation::Tanh, pred);
    for (std::size_t l = n_layers; l-- > 0;) {
      const Layer& layer = net.layers[l];
      const std::vector<double>& in = acts[l];
      for (int i = 0; i < layer.fan_out; ++i) {
        gb[l][i] += delta[i];
        for (int j = 0; j < layer.fan_in; ++j)
          gw[l][static_cast<std::size_t>(i) * layer.fan_in + j] += delta[i] * in[j];
      }
      if (l == 0) break;
      Activation a = net.spec.hidden_activation;
      std::vector<double> prev(layer.fan_in, 0.0);
      for (int j = 0; j < layer.fan_in; ++j) {
        double s = 0.0;
        for (int i = 0; i < layer.fan_out; ++i)
          s += layer.weights[static_cast<std::size_t>(i) * layer.fan_in + j] * delta[i];
        prev[j] = s * activate_deriv(a, in[j]);
      }
      delta = std::move(prev);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  loss *= inv_n;

  LossGrad out;
  out.grad.layout.reserve(n_layers);
  const double l2 = net.spec.l2_lambda;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = net.layers[l];
    out.grad.layout.emplace_back(layer.fan_out, layer.fan_in);
    for (std::size_t i = 0; i < gw[l].size(); ++i) {
      double g = gw[l][i] * inv_n;
      if (l2 > 0) {
        g += l2 * layer.weights[i];
        loss += 0.5 * l2 * layer.weights[i] * layer.weights[i];
      }
      out.grad.values.push_back(g);
    }
    for (double g : gb[l]) out.grad.values.push_back(g * inv_n);
  }
  out.loss = loss;
  return out;
}

double mean_loss(const Network& net, std::span<const Point> batch) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const Point& p : batch) {
    double d = forward(net, p.x1, p.x2) - static_cast<double>(p.label);
    loss += 0.5 * d * d;
  }
  return loss / static_cast<double>(batch.size());
}

Network sgd_step(const Network& net, const WeightVector& grad, double lr) {
  if (grad.values.size() != net.spec.param_count())
    throw ShapeError("gradient length does not match network parameter count");
  Network out = net;
  std::size_t pos = 0;
  for (Layer& layer : out.layers) {
    for (double& w : layer.weights) w -= lr * grad.values[pos++];
    for (double& b : layer.biases) b -= lr * grad.values[pos++];
  }
  return out;
}

}  // namespace fedsim
