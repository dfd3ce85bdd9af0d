#include "fedsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "circle") return DatasetKind::Circle;
  if (s == "xor") return DatasetKind::Xor;
  if (s == "gauss") return DatasetKind::Gauss;
  if (s == "spiral") return DatasetKind::Spiral;
  throw ValidationError("dataset", "unknown dataset kind: " + s);
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Circle: return "circle";
    case DatasetKind::Xor: return "xor";
    case DatasetKind::Gauss: return "gauss";
    case DatasetKind::Spiral: return "spiral";
  }
  return "?";
}

PartitionMode partition_mode_from_string(const std::string& s) {
  if (s == "iid") return PartitionMode::IID;
  if (s == "dirichlet") return PartitionMode::DirichletLabel;
  if (s == "skewed") return PartitionMode::UniformClassSkewedSize;
  throw ValidationError("partition", "unknown partition mode: " + s);
}

std::string to_string(PartitionMode m) {
  switch (m) {
    case PartitionMode::IID: return "iid";
    case PartitionMode::DirichletLabel: return "dirichlet";
    case PartitionMode::UniformClassSkewedSize: return "skewed";
  }
  return "?";
}

std::vector<Point> Dataset::train_points() const {
  std::vector<Point> out;
  out.reserve(train_indices.size());
  for (int i : train_indices) out.push_back(points[i]);
  return out;
}

std::vector<Point> Dataset::test_points() const {
  std::vector<Point> out;
  out.reserve(test_indices.size());
  for (int i : test_indices) out.push_back(points[i]);
  return out;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp6(double v) { return std::clamp(v, -6.0, 6.0); }

// Classic playground geometry. Points are stored at their clean positions;
// where the label comes from a geometric rule (circle, xor) it is evaluated
// at the jittered position, which produces label noise near the boundary.
Point gen_circle(int cls, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> inner(0.0, 2.5);
  std::uniform_real_distribution<double> outer(3.5, 5.0);
  std::normal_distribution<double> jitter(0.0, 5.0 * noise);
  double r = cls > 0 ? inner(rng) : outer(rng);
  double a = angle(rng);
  Point p;
  p.x1 = r * std::cos(a);
  p.x2 = r * std::sin(a);
  double jx = noise > 0 ? jitter(rng) : 0.0;
  double jy = noise > 0 ? jitter(rng) : 0.0;
  double rj = std::hypot(p.x1 + jx, p.x2 + jy);
  p.label = rj < 2.5 ? 1 : -1;
  return p;
}

Point gen_xor(int cls, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> coord(0.3, 5.0);
  std::bernoulli_distribution flip(0.5);
  std::normal_distribution<double> jitter(0.0, 5.0 * noise);
  Point p;
  p.x1 = coord(rng);
  p.x2 = coord(rng);
  if (cls > 0) {
    // same-sign quadrant
    if (flip(rng)) { p.x1 = -p.x1; p.x2 = -p.x2; }
  } else {
    if (flip(rng)) p.x1 = -p.x1; else p.x2 = -p.x2;
  }
  double jx = noise > 0 ? jitter(rng) : 0.0;
  double jy = noise > 0 ? jitter(rng) : 0.0;
  p.label = (p.x1 + jx) * (p.x2 + jy) >= 0 ? 1 : -1;
  return p;
}

Point gen_gauss(int cls, std::mt19937_64& rng, double noise) {
  // Spread grows with the noise control instead of coordinate jitter.
  double sigma = 0.5 + 7.0 * noise;
  std::normal_distribution<double> d(0.0, sigma);
  double cx = cls > 0 ? 2.0 : -2.0;
  Point p;
  p.x1 = clamp6(cx + d(rng));
  p.x2 = clamp6(cx + d(rng));
  p.label = cls;
  return p;
}

Point gen_spiral(int cls, int idx, int per_arm, std::mt19937_64& rng,
                 double noise) {
  double t = static_cast<double>(idx) / std::max(per_arm, 1);
  double r = t * 5.0;
  double angle = 1.75 * t * 2.0 * kPi + (cls > 0 ? 0.0 : kPi);
  std::normal_distribution<double> jitter(0.0, noise);
  Point p;
  p.x1 = clamp6(r * std::sin(angle) + (noise > 0 ? jitter(rng) : 0.0));
  p.x2 = clamp6(r * std::cos(angle) + (noise > 0 ? jitter(rng) : 0.0));
  p.label = cls;
  return p;
}

}  // namespace

Dataset generate_dataset(DatasetKind kind, int n, double noise,
                         double train_ratio, std::mt19937_64& rng) {
  if (n < 4) throw ArgumentError("generate_dataset: n must be >= 4");
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw ArgumentError("generate_dataset: train_ratio must be in (0,1)");
  if (noise < 0.0 || noise > 0.5)
    throw ArgumentError("generate_dataset: noise must be in [0, 0.5]");

  Dataset ds;
  ds.kind = kind;
  ds.noise = noise;
  int n_pos = n / 2 + (n % 2);
  for (int i = 0; i < n; ++i) {
    int cls = i < n_pos ? 1 : -1;
    int idx_in_class = cls > 0 ? i : i - n_pos;
    switch (kind) {
      case DatasetKind::Circle: ds.points.push_back(gen_circle(cls, rng, noise)); break;
      case DatasetKind::Xor: ds.points.push_back(gen_xor(cls, rng, noise)); break;
      case DatasetKind::Gauss: ds.points.push_back(gen_gauss(cls, rng, noise)); break;
      case DatasetKind::Spiral:
        ds.points.push_back(
            gen_spiral(cls, idx_in_class, cls > 0 ? n_pos : n - n_pos, rng, noise));
        break;
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int n_train = static_cast<int>(std::lround(n * train_ratio));
  n_train = std::clamp(n_train, 1, n - 1);
  ds.train_indices.assign(order.begin(), order.begin() + n_train);
  ds.test_indices.assign(order.begin() + n_train, order.end());
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  return ds;
}

namespace {

void check_partition_args(const Dataset& dataset, int n_clients) {
  if (n_clients < 1) throw ArgumentError("partition: n_clients must be >= 1");
  if (static_cast<std::size_t>(n_clients) > dataset.train_indices.size())
    throw ArgumentError("partition: n_clients exceeds number of train samples");
}

// Move one sample from the largest client to each empty client, by client id.
void repair_empty_clients(std::vector<std::vector<int>>& assignments) {
  for (std::size_t c = 0; c < assignments.size(); ++c) {
    if (!assignments[c].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < assignments.size(); ++j)
      if (assignments[j].size() > assignments[largest].size()) largest = j;
    if (assignments[largest].empty()) continue;  // nothing to move
    assignments[c].push_back(assignments[largest].back());
    assignments[largest].pop_back();
  }
}

std::vector<double> dirichlet_draw(int k, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) { v = gamma(rng); sum += v; }
  if (sum <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / k);
  } else {
    for (double& v : p) v /= sum;
  }
  return p;
}

// Largest-remainder apportionment of `total` items over quotas q (sum == total),
// optionally capped per slot.
std::vector<int> largest_remainder(const std::vector<double>& q, int total,
                                   const std::vector<int>* caps = nullptr) {
  const int k = static_cast<int>(q.size());
  std::vector<int> counts(k);
  std::vector<std::pair<double, int>> rem(k);
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    counts[i] = static_cast<int>(std::floor(q[i]));
    if (caps) counts[i] = std::min(counts[i], (*caps)[i]);
    assigned += counts[i];
    rem[i] = {q[i] - counts[i], i};
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  int left = total - assigned;
  for (int pass = 0; left > 0 && pass < total; ++pass) {
    for (auto& [r, i] : rem) {
      if (left == 0) break;
      if (caps && counts[i] >= (*caps)[i]) continue;
      ++counts[i];
      --left;
    }
  }
  return counts;
}

}  // namespace

Partition partition_iid(const Dataset& dataset, int n_clients,
                        std::mt19937_64& rng) {
  check_partition_args(dataset, n_clients);
  std::vector<int> idx = dataset.train_indices;
  std::shuffle(idx.begin(), idx.end(), rng);
  Partition part;
  part.mode = PartitionMode::IID;
  part.assignments.resize(n_clients);
  for (std::size_t i = 0; i < idx.size(); ++i)
    part.assignments[i % n_clients].push_back(idx[i]);
  return part;
}

Partition partition_dirichlet(const Dataset& dataset, int n_clients,
                              double alpha_label, std::mt19937_64& rng) {
  check_partition_args(dataset, n_clients);
  if (!(alpha_label > 0.0))
    throw ArgumentError("partition_dirichlet: alpha_label must be > 0");

  Partition part;
  part.mode = PartitionMode::DirichletLabel;
  part.alpha_label = alpha_label;
  part.assignments.resize(n_clients);

  for (int cls : {-1, 1}) {
    std::vector<int> idx;
    for (int i : dataset.train_indices)
      if (dataset.points[i].label == cls) idx.push_back(i);
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> p = dirichlet_draw(n_clients, alpha_label, rng);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    for (int i : idx) part.assignments[pick(rng)].push_back(i);
  }
  repair_empty_clients(part.assignments);
  return part;
}

Partition partition_uniform_class_skewed_size(const Dataset& dataset,
                                              int n_clients, double alpha_size,
                                              std::mt19937_64& rng) {
  check_partition_args(dataset, n_clients);
  if (!(alpha_size > 0.0))
    throw ArgumentError("partition_uniform_class_skewed_size: alpha_size must be > 0");

  const int total = static_cast<int>(dataset.train_indices.size());
  std::vector<double> p = dirichlet_draw(n_clients, alpha_size, rng);
  std::vector<double> quota(n_clients);
  for (int i = 0; i < n_clients; ++i) quota[i] = p[i] * total;
  std::vector<int> sizes = largest_remainder(quota, total);
  // Every client gets at least one sample.
  for (int i = 0; i < n_clients; ++i) {
    while (sizes[i] < 1) {
      int largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[largest];
      ++sizes[i];
    }
  }

  std::vector<int> neg, pos;
  for (int i : dataset.train_indices)
    (dataset.points[i].label == -1 ? neg : pos).push_back(i);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);

  // Per-client negative counts proportional to the global class share, with
  // largest-remainder rounding capped by client size; positives fill the rest.
  const int total_neg = static_cast<int>(neg.size());
  std::vector<double> neg_quota(n_clients);
  for (int i = 0; i < n_clients; ++i)
    neg_quota[i] = static_cast<double>(sizes[i]) * total_neg / total;
  std::vector<int> neg_counts = largest_remainder(neg_quota, total_neg, &sizes);

  Partition part;
  part.mode = PartitionMode::UniformClassSkewedSize;
  part.alpha_size = alpha_size;
  part.assignments.resize(n_clients);
  std::size_t neg_pos_idx = 0, pos_pos_idx = 0;
  for (int i = 0; i < n_clients; ++i) {
    for (int j = 0; j < neg_counts[i]; ++j)
      part.assignments[i].push_back(neg[neg_pos_idx++]);
    for (int j = 0; j < sizes[i] - neg_counts[i]; ++j)
      part.assignments[i].push_back(pos[pos_pos_idx++]);
  }
  return part;
}

std::vector<ClientDistribution> data_distribution(const Partition& partition,
                                                  const Dataset& dataset) {
  std::vector<ClientDistribution> out(partition.assignments.size());
  for (std::size_t c = 0; c < partition.assignments.size(); ++c) {
    for (int i : partition.assignments[c]) {
      ++out[c].size;
      if (dataset.points[i].label == -1)
        ++out[c].count_neg;
      else
        ++out[c].count_pos;
    }
  }
  return out;
}

}  // namespace fedsim
