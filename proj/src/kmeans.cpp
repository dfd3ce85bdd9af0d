#include "fedsim/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedsim/errors.hpp"

namespace fedsim {

ClusterMetric cluster_metric_from_string(const std::string& s) {
  if (s == "l2") return ClusterMetric::L2;
  if (s == "cosine") return ClusterMetric::Cosine;
  throw ValidationError("cluster_metric", "unknown cluster metric: " + s);
}

std::string to_string(ClusterMetric m) {
  return m == ClusterMetric::L2 ? "l2" : "cosine";
}

namespace {

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::vector<double>> centroids_of(
    const std::vector<std::vector<double>>& pts, const std::vector<int>& assign,
    int k, const std::vector<std::vector<double>>& fallback) {
  const std::size_t dim = pts[0].size();
  std::vector<std::vector<double>> cents(k, std::vector<double>(dim, 0.0));
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ++counts[assign[i]];
    for (std::size_t d = 0; d < dim; ++d) cents[assign[i]][d] += pts[i][d];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      cents[c] = fallback[c];
      continue;
    }
    for (double& v : cents[c]) v /= counts[c];
  }
  return cents;
}

struct SingleRun {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  double cost;
};

SingleRun lloyd_once(const std::vector<std::vector<double>>& pts, int k,
                     std::mt19937_64& rng) {
  const int n = static_cast<int>(pts.size());

  // k-means++ seeding
  std::vector<std::vector<double>> cents;
  std::uniform_int_distribution<int> first(0, n - 1);
  cents.push_back(pts[first(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(cents.size()) < k) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : cents) best = std::min(best, sqdist(pts[i], c));
      d2[i] = best;
      sum += best;
    }
    if (sum <= 0.0) {
      cents.push_back(pts[first(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, sum);
    double r = u(rng);
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) { pick = i; break; }
    }
    cents.push_back(pts[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sqdist(pts[i], cents[0]);
      for (int c = 1; c < k; ++c) {
        double d = sqdist(pts[i], cents[c]);
        if (d < bd) { bd = d; best = c; }
      }
      if (assign[i] != best) { assign[i] = best; changed = true; }
    }
    // Reseed empty clusters with the point farthest from its centroid.
    std::vector<int> counts(k, 0);
    for (int a : assign) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = -1;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;
        double d = sqdist(pts[i], cents[assign[i]]);
        if (d > fd) { fd = d; far = i; }
      }
      if (far >= 0) {
        --counts[assign[far]];
        assign[far] = c;
        counts[c] = 1;
        changed = true;
      }
    }
    cents = centroids_of(pts, assign, k, cents);
    if (!changed && iter > 0) break;
  }

  double cost = 0.0;
  for (int i = 0; i < n; ++i) cost += sqdist(pts[i], cents[assign[i]]);
  return {std::move(assign), std::move(cents), cost};
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k,
                    ClusterMetric metric, std::mt19937_64& rng, int restarts) {
  if (k < 1) throw ArgumentError("kmeans: k must be >= 1");
  if (vectors.empty()) throw ArgumentError("kmeans: empty input");

  std::vector<std::vector<double>> pts = vectors;
  if (metric == ClusterMetric::Cosine) {
    for (auto& v : pts) {
      double norm = std::sqrt(sqdist(v, std::vector<double>(v.size(), 0.0)));
      if (norm > 0.0)
        for (double& x : v) x /= norm;
    }
  }

  const int n = static_cast<int>(pts.size());
  KMeansResult out;
  if (k >= n) {
    // Degenerate: each vector its own cluster; spare centroids duplicate
    // existing points.
    out.assignments.resize(n);
    for (int i = 0; i < n; ++i) {
      out.assignments[i] = i;
      out.centroids.push_back(pts[i]);
    }
    for (int c = n; c < k; ++c) out.centroids.push_back(pts[c % n]);
    out.cost = 0.0;
    return out;
  }

  SingleRun best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    SingleRun run = lloyd_once(pts, k, rng);
    if (run.cost < best.cost) best = std::move(run);
  }
  out.assignments = std::move(best.assignments);
  out.centroids = std::move(best.centroids);
  out.cost = best.cost;
  return out;
}

}  // namespace fedsim
