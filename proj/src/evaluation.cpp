#include "mbps/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbps/error.hpp"
#include "mbps/kernels.hpp"

namespace mbps {

std::vector<double> cape(std::span<const double> actual, std::span<const double> point) {
  if (actual.size() != point.size()) throw InputError("cape: length mismatch");
  std::vector<double> out(actual.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    acc += std::abs(actual[t] - point[t]);
    out[t] = acc;
  }
  return out;
}

std::vector<std::optional<double>> lpdr(std::span<const double> reference,
                                        std::span<const double> candidate) {
  if (reference.size() != candidate.size()) throw InputError("lpdr: length mismatch");
  std::vector<std::optional<double>> out(reference.size());
  auto usable = [](double v) { return std::isfinite(v) && v >= kLogMassFloor; };
  for (std::size_t t = 0; t < reference.size(); ++t)
    if (usable(reference[t]) && usable(candidate[t])) out[t] = candidate[t] - reference[t];
  return out;
}

ForecastDistribution ForecastDistribution::from_draws(std::vector<std::int64_t> draws,
                                                      std::vector<double> eta) {
  if (draws.empty()) throw DomainError("forecast distribution: no draws");
  if (eta.size() != draws.size()) throw DomainError("forecast distribution: eta length mismatch");
  ForecastDistribution out;
  const std::size_t n = draws.size();
  std::vector<std::int64_t> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (auto v : sorted) total += static_cast<double>(v);
  out.mean = total / static_cast<double>(n);
  const std::size_t mid = n / 2;
  out.median = n % 2 ? static_cast<double>(sorted[mid])
                     : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  auto order_stat = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return sorted[std::clamp<std::size_t>(idx, 1, n) - 1];
  };
  out.lower = order_stat(0.025);
  out.upper = order_stat(0.975);
  out.draws = std::move(draws);
  out.eta = std::move(eta);
  return out;
}

double ForecastDistribution::log_pmf(std::int64_t y) const {
  if (y < 0) return -std::numeric_limits<double>::infinity();
  if (eta.empty()) throw DomainError("log_pmf: empty forecast distribution");
  const auto& kt = kernels::active();
  std::vector<double> v(eta.size());
  const double yy = static_cast<double>(y);
  kt.poisson_kernel(yy, eta.data(), v.data(), v.size());
  return kt.log_sum_exp(v.data(), v.size()) - std::lgamma(yy + 1.0) -
         std::log(static_cast<double>(eta.size()));
}

bool covers(const Interval& iv, double y) noexcept {
  return static_cast<double>(iv.lower) < y && y < static_cast<double>(iv.upper);
}

double interval_coverage(std::span<const double> actual, std::span<const Interval> intervals) {
  if (actual.size() != intervals.size()) throw InputError("interval_coverage: length mismatch");
  if (actual.empty()) throw InputError("interval_coverage: no cells");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < actual.size(); ++k) {
    if (intervals[k].lower > intervals[k].upper)
      throw InputError("interval_coverage: lower bound above upper bound");
    if (covers(intervals[k], actual[k])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(actual.size());
}

R2Result mc_empirical_r2(const Eigen::MatrixXd& draws) {
  const Eigen::Index L = draws.rows();
  const Eigen::Index J = draws.cols();
  if (L < J + 2) throw InputError("mc_empirical_r2: need at least J + 2 draws");
  R2Result out;
  out.r2.assign(J, 0.0);
  out.collinear.assign(J, false);
  out.paired = Eigen::MatrixXd::Identity(J, J);

  const Eigen::MatrixXd centred = draws.rowwise() - draws.colwise().mean();
  const Eigen::VectorXd ss = centred.colwise().squaredNorm();

  for (Eigen::Index j = 0; j < J; ++j) {
    if (J == 1) break;
    Eigen::MatrixXd X(L, J - 1);
    for (Eigen::Index a = 0, c = 0; a < J; ++a)
      if (a != j) X.col(c++) = centred.col(a);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < J - 1 || ss[j] == 0.0) {
      out.r2[j] = 1.0;
      out.collinear[j] = true;
      continue;
    }
    const Eigen::VectorXd resid = centred.col(j) - X * qr.solve(centred.col(j));
    out.r2[j] = std::clamp(1.0 - resid.squaredNorm() / ss[j], 0.0, 1.0);
  }
  for (Eigen::Index a = 0; a < J; ++a)
    for (Eigen::Index b = a + 1; b < J; ++b) {
      double v = 1.0;
      if (ss[a] > 0.0 && ss[b] > 0.0) {
        const double c = centred.col(a).dot(centred.col(b));
        v = std::clamp(c * c / (ss[a] * ss[b]), 0.0, 1.0);
      }
      out.paired(a, b) = out.paired(b, a) = v;
    }
  return out;
}

SeriesProfile series_profile(std::span<const double> y) {
  if (y.empty()) throw InputError("series_profile: empty series");
  SeriesProfile p;
  double total = 0.0;
  for (double v : y) total += v;
  p.log_mean = std::log(total / static_cast<double>(y.size()));
  double acc = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    if (y[t - 1] > 0.0)
      acc += std::abs(y[t] - y[t - 1]) / y[t - 1];
    else
      ++p.skipped;
  }
  p.mean_abs_change = y.size() > 1 ? acc / static_cast<double>(y.size() - 1) : 0.0;
  return p;
}

}  // namespace mbps
