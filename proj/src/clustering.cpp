#include "mbps/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>

#include "mbps/error.hpp"

namespace mbps {

Eigen::MatrixXd coclustering_mean(std::span<const Assignment> draws) {
  if (draws.empty()) throw DomainError("coclustering_mean: no draws");
  const std::size_t n = draws.front().size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (const auto& z : draws) {
    if (z.size() != n) throw DomainError("coclustering_mean: draws differ in length");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        if (z[i] == z[j]) m(i, j) += 1.0;
  }
  m /= static_cast<double>(draws.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

double coclustering_distance(const Assignment& z, const Eigen::MatrixXd& mean) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      const double d = (z[i] == z[j] ? 1.0 : 0.0) - mean(i, j);
      acc += d * d;
    }
  return acc;
}

// Distances are compared as L^2 * ||Z - mean||^2, which is an integer, so
// exact ties between different partitions stay ties.
std::size_t representative_draw(std::span<const Assignment> draws) {
  if (draws.empty()) throw DomainError("representative_draw: no draws");
  const std::size_t n = draws.front().size();
  const auto L = static_cast<std::int64_t>(draws.size());
  std::vector<std::int64_t> together(n * n, 0);
  for (const auto& z : draws) {
    if (z.size() != n) throw DomainError("representative_draw: draws differ in length");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (z[i] == z[j]) ++together[i * n + j];
  }
  std::size_t best = 0;
  std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
  for (std::size_t l = 0; l < draws.size(); ++l) {
    const auto& z = draws[l];
    std::int64_t d = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::int64_t e = (z[i] == z[j] ? L : 0) - together[i * n + j];
        d += e * e;
      }
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

std::size_t alive_clusters(std::span<const int> z) {
  std::vector<int> v(z.begin(), z.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

std::vector<std::size_t> alive_cluster_counts(std::span<const Assignment> draws) {
  std::vector<std::size_t> out;
  out.reserve(draws.size());
  for (const auto& z : draws) out.push_back(alive_clusters(z));
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DomainError("adjusted_rand_index: length mismatch");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t k = 0; k < a.size(); ++k) {
    nij[{a[k], b[k]}] += 1;
    ai[a[k]] += 1;
    bj[b[k]] += 1;
  }
  auto c2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double sij = 0, sa = 0, sb = 0;
  for (const auto& [key, v] : nij) sij += c2(v);
  for (const auto& [key, v] : ai) sa += c2(v);
  for (const auto& [key, v] : bj) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double maxv = 0.5 * (sa + sb);
  if (maxv == expected) return 1.0;  // both partitions trivial
  return (sij - expected) / (maxv - expected);
}

Assignment canonical_labels(std::span<const int> z) {
  std::map<int, int> seen;
  Assignment out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto it = seen.find(z[i]);
    if (it == seen.end()) it = seen.emplace(z[i], static_cast<int>(seen.size())).first;
    out[i] = it->second;
  }
  return out;
}

Assignment kmeans_partition(std::span<const std::array<double, 2>> points, std::size_t groups,
                            std::size_t max_iter) {
  const std::size_t n = points.size();
  Assignment z(n, 0);
  if (n == 0 || groups <= 1) return z;
  groups = std::min(groups, n);

  std::vector<std::array<double, 2>> x(points.begin(), points.end());
  for (int d = 0; d < 2; ++d) {
    double mu = 0, sd = 0;
    for (const auto& p : x) mu += p[d];
    mu /= n;
    for (const auto& p : x) sd += (p[d] - mu) * (p[d] - mu);
    sd = std::sqrt(sd / n);
    for (auto& p : x) p[d] = sd > 0 ? (p[d] - mu) / sd : 0.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a][0] < x[b][0]; });
  std::vector<std::array<double, 2>> centre(groups);
  for (std::size_t g = 0; g < groups; ++g) centre[g] = x[order[(2 * g + 1) * n / (2 * groups)]];

  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < groups; ++g) {
        const double dx = x[i][0] - centre[g][0], dy = x[i][1] - centre[g][1];
        const double d = dx * dx + dy * dy;
        if (d < bd) {
          bd = d;
          best = static_cast<int>(g);
        }
      }
      if (z[i] != best) {
        z[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::array<double, 2>> sum(groups, {0.0, 0.0});
    std::vector<double> cnt(groups, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[z[i]][0] += x[i][0];
      sum[z[i]][1] += x[i][1];
      cnt[z[i]] += 1;
    }
    for (std::size_t g = 0; g < groups; ++g)
      if (cnt[g] > 0) centre[g] = {sum[g][0] / cnt[g], sum[g][1] / cnt[g]};
  }
  return canonical_labels(z);
}

}  // namespace mbps
