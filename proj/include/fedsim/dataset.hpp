#pragma once

#include <random>
#include <string>
#include <vector>

#include "fedsim/nn.hpp"

namespace fedsim {

enum class DatasetKind { Circle, Xor, Gauss, Spiral };
enum class PartitionMode { IID, DirichletLabel, UniformClassSkewedSize };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind k);
PartitionMode partition_mode_from_string(const std::string& s);
std::string to_string(PartitionMode m);

struct Dataset {
  DatasetKind kind = DatasetKind::Gauss;
  std::vector<Point> points;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  double noise = 0.0;

  std::vector<Point> train_points() const;
  std::vector<Point> test_points() const;
};

struct Partition {
  std::vector<std::vector<int>> assignments;  // per client, train indices
  PartitionMode mode = PartitionMode::IID;
  double alpha_label = 0.5;
  double alpha_size = 1.0;
};

struct ClientDistribution {
  int size = 0;
  int count_neg = 0;  // label -1
  int count_pos = 0;  // label +1
};

Dataset generate_dataset(DatasetKind kind, int n, double noise,
                         double train_ratio, std::mt19937_64& rng);

Partition partition_iid(const Dataset& dataset, int n_clients,
                        std::mt19937_64& rng);
Partition partition_dirichlet(const Dataset& dataset, int n_clients,
                              double alpha_label, std::mt19937_64& rng);
Partition partition_uniform_class_skewed_size(const Dataset& dataset,
                                              int n_clients, double alpha_size,
                                              std::mt19937_64& rng);

std::vector<ClientDistribution> data_distribution(const Partition& partition,
                                                  const Dataset& dataset);

}  // namespace fedsim
