#pragma once
// Deliberately naive reimplementations of the scoring and clustering
// summaries, written from the displayed definitions.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mbps/clustering.hpp"
#include "mbps/evaluation.hpp"

namespace oracle {

inline std::vector<double> cape(const std::vector<double>& y, const std::vector<double>& yhat) {
  std::vector<double> out;
  for (std::size_t t = 0; t < y.size(); ++t) {
    double s = 0.0;
    for (std::size_t u = 0; u <= t; ++u) s += std::abs(y[u] - yhat[u]);
    out.push_back(s);
  }
  return out;
}

inline std::vector<std::optional<double>> lpdr(const std::vector<double>& ref,
                                               const std::vector<double>& cand) {
  std::vector<std::optional<double>> out(ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const bool bad = std::isnan(ref[t]) || std::isnan(cand[t]) || std::isinf(ref[t]) ||
                     std::isinf(cand[t]) || ref[t] < -708.0 || cand[t] < -708.0;
    if (!bad) out[t] = cand[t] - ref[t];
  }
  return out;
}

inline double coverage(const std::vector<double>& y, const std::vector<mbps::Interval>& iv) {
  int hit = 0;
  for (std::size_t k = 0; k < y.size(); ++k)
    if (double(iv[k].lower) < y[k] && y[k] < double(iv[k].upper)) hit = hit + 1;
  return double(hit) / double(y.size());
}

inline std::pair<double, double> profile(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v;
  double r = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t)
    if (y[t - 1] != 0.0) r += std::abs(y[t] - y[t - 1]) / y[t - 1];
  return {std::log(s / double(y.size())), y.size() > 1 ? r / double(y.size() - 1) : 0.0};
}

inline Eigen::MatrixXd tie_matrix(const mbps::Assignment& z) {
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = z[i] == z[j] ? 1.0 : 0.0;
  return m;
}

inline Eigen::MatrixXd coclustering(const std::vector<mbps::Assignment>& draws) {
  const auto n = static_cast<Eigen::Index>(draws[0].size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (const auto& z : draws) sum += tie_matrix(z);
  return sum / double(draws.size());
}

// Full-matrix squared Frobenius distance, scaled by L^2 to stay integral.
inline std::size_t representative(const std::vector<mbps::Assignment>& draws) {
  const auto L = static_cast<long long>(draws.size());
  const std::size_t n = draws[0].size();
  std::vector<std::vector<long long>> count(n, std::vector<long long>(n, 0));
  for (const auto& z : draws)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) count[i][j] += z[i] == z[j];
  std::vector<long long> dist;
  for (const auto& z : draws) {
    long long d = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const long long e = L * (z[i] == z[j]) - count[i][j];
        d += e * e;
      }
    dist.push_back(d);
  }
  std::size_t best = 0;
  for (std::size_t l = 1; l < dist.size(); ++l)
    if (dist[l] < dist[best]) best = l;
  return best;
}

// Random instances with the awkward cases mixed in: zeros, -inf, values on
// interval bounds, few labels so that ties between draws are common.
struct MetricInstance {
  std::vector<double> y, yhat, ref, cand;
  std::vector<mbps::Interval> iv;
  std::vector<mbps::Assignment> draws;
};

inline MetricInstance random_metric_instance(std::mt19937_64& g) {
  std::uniform_int_distribution<int> len(1, 60), small(0, 30), pick(0, 9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MetricInstance m;
  const int T = len(g);
  for (int t = 0; t < T; ++t) {
    const double y = pick(g) == 0 ? 0.0 : double(small(g));
    m.y.push_back(y);
    m.yhat.push_back(y + 10.0 * u(g));
    m.ref.push_back(pick(g) == 0 ? -std::numeric_limits<double>::infinity() : -5.0 + 4.0 * u(g));
    m.cand.push_back(pick(g) == 1 ? -800.0 : -5.0 + 4.0 * u(g));
    const int lo = small(g);
    const int w = pick(g) == 0 ? 0 : small(g);
    m.iv.push_back({lo, lo + w});
  }
  std::uniform_int_distribution<int> nser(1, 9), ndraw(1, 40), lab(0, 3);
  const int n = nser(g);
  const int L = ndraw(g);
  for (int l = 0; l < L; ++l) {
    mbps::Assignment z(n);
    for (auto& v : z) v = lab(g);
    m.draws.push_back(z);
  }
  return m;
}

}  // namespace oracle
