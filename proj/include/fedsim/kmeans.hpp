#pragma once

#include <random>
#include <string>
#include <vector>

namespace fedsim {

enum class ClusterMetric { L2, Cosine };

ClusterMetric cluster_metric_from_string(const std::string& s);
std::string to_string(ClusterMetric m);

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  double cost = 0.0;  // sum of squared distances in the working space
};

// k-means++ / Lloyd. Under the cosine metric the points are l2-normalized
// first (zero vectors are left as-is and assigned by plain l2 distance);
// centroids and cost are reported in that normalized space. Multiple
// restarts keep the best clustering; deterministic given the rng.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k,
                    ClusterMetric metric, std::mt19937_64& rng,
                    int restarts = 32);

}  // namespace fedsim
