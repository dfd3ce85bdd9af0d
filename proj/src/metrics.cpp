#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "fedsim/errors.hpp"

namespace fedsim {

void MetricsSeries::append(RoundReport report) {
  if (!reports_.empty() && report.round <= reports_.back().round)
    throw ArgumentError("MetricsSeries: round numbers must be strictly increasing");
  reports_.push_back(std::move(report));
}

std::int64_t comms_cost(int participants_count, std::size_t param_count) {
  return 2LL * participants_count * static_cast<std::int64_t>(param_count) * 8;
}

std::optional<LossDistribution> loss_distribution(const RoundReport& report) {
  if (report.per_client_loss.empty()) return std::nullopt;
  LossDistribution d;
  d.min = d.max = report.per_client_loss.begin()->second;
  double sum = 0.0;
  for (const auto& [id, loss] : report.per_client_loss) {
    d.min = std::min(d.min, loss);
    d.max = std::max(d.max, loss);
    sum += loss;
  }
  d.mean = sum / static_cast<double>(report.per_client_loss.size());
  return d;
}

ParticipationStats participation_histogram(const MetricsSeries& series,
                                           int n_clients) {
  ParticipationStats stats;
  stats.counts.assign(n_clients, 0);
  stats.rates.assign(n_clients, 0.0);
  for (const RoundReport& r : series.reports())
    for (int id : r.participants)
      if (id >= 0 && id < n_clients) ++stats.counts[id];
  if (!series.empty()) {
    for (int i = 0; i < n_clients; ++i)
      stats.rates[i] =
          static_cast<double>(stats.counts[i]) / static_cast<double>(series.size());
  }
  return stats;
}

std::vector<std::tuple<int, double, double>> convergence_series(
    const MetricsSeries& series) {
  std::vector<std::tuple<int, double, double>> out;
  out.reserve(series.size());
  for (const RoundReport& r : series.reports())
    out.emplace_back(r.round, r.global_train_loss, r.global_test_loss);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string to_csv(const MetricsSeries& series) {
  std::string out =
      "round,participants,comms_bytes,loss_min,loss_mean,loss_max,"
      "global_train_loss,global_test_loss\n";
  for (const RoundReport& r : series.reports()) {
    out += std::to_string(r.round);
    out += ',';
    out += std::to_string(r.participants.size());
    out += ',';
    out += std::to_string(r.comms_bytes);
    out += ',';
    if (auto d = loss_distribution(r)) {
      out += format_double(d->min);
      out += ',';
      out += format_double(d->mean);
      out += ',';
      out += format_double(d->max);
    } else {
      out += ",,";
    }
    out += ',';
    out += format_double(r.global_train_loss);
    out += ',';
    out += format_double(r.global_test_loss);
    out += '\n';
  }
  return out;
}

}  // namespace fedsim
