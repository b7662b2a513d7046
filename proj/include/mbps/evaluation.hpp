#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mbps {

/// Running sum of |actual - point|.
std::vector<double> cape(std::span<const double> actual, std::span<const double> point);

/// Log masses below this are treated as underflowed.
inline constexpr double kLogMassFloor = -708.0;

/// candidate - reference at each point; nullopt where either log mass is
/// non-finite or below kLogMassFloor.
std::vector<std::optional<double>> lpdr(std::span<const double> reference,
                                        std::span<const double> candidate);

/// Linear predictors are capped here before exponentiating.
inline constexpr double kLogMeanCap = 25.0;

/// Monte Carlo predictive distribution of one count. `eta` holds the log
/// Poisson mean behind each draw.
struct ForecastDistribution {
  std::vector<std::int64_t> draws;
  std::vector<double> eta;
  double mean = 0.0;
  double median = 0.0;
  std::int64_t lower = 0;  // 2.5% empirical quantile
  std::int64_t upper = 0;  // 97.5% empirical quantile

  /// Mean, median and the ceil(qD)-th order statistics of the draws.
  static ForecastDistribution from_draws(std::vector<std::int64_t> draws, std::vector<double> eta);

  /// Rao-Blackwellised log predictive mass, averaging Poisson masses over
  /// the stored linear predictors.
  double log_pmf(std::int64_t y) const;
};

struct Interval {
  std::int64_t lower = 0;
  std::int64_t upper = 0;
};

/// Fraction of cells with lower < actual < upper.
double interval_coverage(std::span<const double> actual, std::span<const Interval> intervals);
bool covers(const Interval& iv, double y) noexcept;

struct R2Result {
  std::vector<double> r2;        // per agent
  std::vector<bool> collinear;   // regressors rank-deficient (r2 forced to 1)
  Eigen::MatrixXd paired;        // squared correlations, unit diagonal
};

/// draws: L x J matrix of latent-factor draws at one (series, time).
R2Result mc_empirical_r2(const Eigen::MatrixXd& draws);

struct SeriesProfile {
  double log_mean = 0.0;
  double mean_abs_change = 0.0;
  std::size_t skipped = 0;  // changes dropped for a zero denominator
};

SeriesProfile series_profile(std::span<const double> y);

}  // namespace mbps
