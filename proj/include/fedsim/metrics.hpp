#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace fedsim {

struct RoundReport {
  int round = 0;
  std::vector<int> participants;               // ascending client ids
  std::map<int, double> per_client_loss;       // final local loss, participants only
  std::int64_t comms_bytes = 0;
  double global_train_loss = 0.0;
  double global_test_loss = 0.0;
  std::vector<int> per_cluster_sizes;

  bool operator==(const RoundReport&) const = default;
};

// Append-only; round numbers strictly increasing.
class MetricsSeries {
 public:
  void append(RoundReport report);
  const std::vector<RoundReport>& reports() const { return reports_; }
  std::size_t size() const { return reports_.size(); }
  bool empty() const { return reports_.empty(); }

 private:
  std::vector<RoundReport> reports_;
};

// Full-model exchange both directions, 8-byte reals.
std::int64_t comms_cost(int participants_count, std::size_t param_count);

struct LossDistribution {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

// Empty participant set has no distribution (rendered as a gap, never zero).
std::optional<LossDistribution> loss_distribution(const RoundReport& report);

struct ParticipationStats {
  std::vector<std::int64_t> counts;  // rounds each client appeared in
  std::vector<double> rates;         // count / rounds elapsed
};

ParticipationStats participation_histogram(const MetricsSeries& series,
                                           int n_clients);

std::vector<std::tuple<int, double, double>> convergence_series(
    const MetricsSeries& series);

// CSV export: header round,participants,comms_bytes,loss_min,loss_mean,
// loss_max,global_train_loss,global_test_loss; floats with 9 significant
// digits; rounds without participants leave the loss_* cells empty.
std::string to_csv(const MetricsSeries& series);

std::string format_double(double v);  // %.9g

}  // namespace fedsim
