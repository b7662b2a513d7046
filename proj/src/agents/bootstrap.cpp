#include <cmath>
#include <string>

#include "mbps/agents.hpp"

namespace mbps {

namespace {
constexpr double kContinuity = 0.5;
}

LogMoments log_moments_of(std::span<const double> replicates) {
  if (replicates.size() < 2) throw DomainError("log_moments_of: need at least two replicates");
  double mean = 0.0;
  for (double v : replicates) mean += std::log(v + kContinuity);
  mean /= static_cast<double>(replicates.size());
  double ss = 0.0;
  for (double v : replicates) {
    const double d = std::log(v + kContinuity) - mean;
    ss += d * d;
  }
  return {mean, ss / static_cast<double>(replicates.size() - 1)};
}

LogMoments bootstrap_log_moments(Rng& rng, const std::function<double(Rng&)>& simulate, int reps) {
  if (reps < 100)
    throw ConfigError("bootstrap_log_moments: reps must be at least 100, got " +
                      std::to_string(reps));
  std::vector<double> y(static_cast<std::size_t>(reps));
  for (auto& v : y) v = simulate(rng);
  return log_moments_of(y);
}

}  // namespace mbps
