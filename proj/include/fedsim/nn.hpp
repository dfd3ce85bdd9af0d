#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedsim {

// One labeled 2D sample. Labels are -1 or +1.
struct Point {
  double x1 = 0.0;
  double x2 = 0.0;
  int label = 1;
};

enum class Feature { X1, X2, X1Squared, X2Squared, X1X2, SinX1, SinX2 };
enum class Activation { Tanh, ReLU, Sigmoid, Linear };

Feature feature_from_string(const std::string& s);
std::string to_string(Feature f);
Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct NetworkSpec {
  std::vector<Feature> input_features{Feature::X1, Feature::X2};
  std::vector<int> hidden_layers{4, 2};
  Activation hidden_activation = Activation::Tanh;
  // Output activation is always tanh; the network emits one value in [-1, 1].
  double l2_lambda = 0.0;
  double init_scale = 0.5;

  void validate() const;  // throws ValidationError
  int input_dim() const { return static_cast<int>(input_features.size()); }
  // (fan_out, fan_in) per layer, input to output.
  std::vector<std::pair<int, int>> layer_shapes() const;
  std::size_t param_count() const;
};

struct Layer {
  int fan_out = 0;
  int fan_in = 0;
  std::vector<double> weights;  // row-major, fan_out x fan_in
  std::vector<double> biases;   // fan_out
};

struct Network {
  NetworkSpec spec;
  std::vector<Layer> layers;

  bool operator==(const Network& other) const;
};

// Flat view of all weights and biases: per layer, weights row-major then
// biases. Also the representation for deltas, control variates and moments.
struct WeightVector {
  std::vector<double> values;
  std::vector<std::pair<int, int>> layout;  // (fan_out, fan_in) per layer

  std::size_t size() const { return values.size(); }
};

struct LossGrad {
  double loss = 0.0;
  WeightVector grad;
};

Network init_network(const NetworkSpec& spec, std::mt19937_64& rng);
WeightVector flatten_weights(const Network& net);
Network unflatten_weights(const WeightVector& wv, const NetworkSpec& spec);

double forward(const Network& net, double x1, double x2);

// Mean over the batch of 0.5*(forward(x) - y)^2 plus (l2_lambda/2)*||w||^2
// where w excludes biases; grad is the exact gradient, flattened.
LossGrad loss_and_gradient(const Network& net, std::span<const Point> batch);

// Data-term loss only (no regularizer), for reporting.
double mean_loss(const Network& net, std::span<const Point> batch);

Network sgd_step(const Network& net, const WeightVector& grad, double lr);

}  // namespace fedsim
