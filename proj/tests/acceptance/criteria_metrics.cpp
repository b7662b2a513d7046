#include <algorithm>
#include <cstring>
#include <random>
#include <string>

#include "acceptance.hpp"
#include "mbps/clustering.hpp"
#include "mbps/evaluation.hpp"
#include "support/metric_oracles.hpp"

namespace acceptance {

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

Outcome metric_oracles() {
  std::mt19937_64 g(707);
  int bad_cape = 0, bad_lpdr = 0, bad_cov = 0, bad_prof = 0, bad_co = 0, bad_rep = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto m = oracle::random_metric_instance(g);

    const auto c = mbps::cape(m.y, m.yhat);
    const auto co = oracle::cape(m.y, m.yhat);
    for (std::size_t t = 0; t < c.size(); ++t)
      if (!same_bits(c[t], co[t])) {
        ++bad_cape;
        break;
      }

    const auto l = mbps::lpdr(m.ref, m.cand);
    const auto lo = oracle::lpdr(m.ref, m.cand);
    for (std::size_t t = 0; t < l.size(); ++t)
      if (l[t].has_value() != lo[t].has_value() || (l[t] && !same_bits(*l[t], *lo[t]))) {
        ++bad_lpdr;
        break;
      }

    if (!same_bits(mbps::interval_coverage(m.y, m.iv), oracle::coverage(m.y, m.iv))) ++bad_cov;

    std::vector<double> pos(m.y);
    for (auto& v : pos) v += 1.0;
    for (const std::vector<double>* series : {&m.y, static_cast<const std::vector<double>*>(&pos)}) {
      if (*std::max_element(series->begin(), series->end()) == 0.0) continue;
      const auto p = mbps::series_profile(*series);
      const auto po = oracle::profile(*series);
      if (!same_bits(p.log_mean, po.first) || !same_bits(p.mean_abs_change, po.second))
        ++bad_prof;
    }

    const Eigen::MatrixXd cm = mbps::coclustering_mean(m.draws);
    if (cm != oracle::coclustering(m.draws)) ++bad_co;
    if (mbps::representative_draw(m.draws) != oracle::representative(m.draws)) ++bad_rep;
  }
  const int total = bad_cape + bad_lpdr + bad_cov + bad_prof + bad_co + bad_rep;
  return {total == 0,
          "100 instances; mismatches cape=" + std::to_string(bad_cape) +
              " lpdr=" + std::to_string(bad_lpdr) + " coverage=" + std::to_string(bad_cov) +
              " profile=" + std::to_string(bad_prof) + " coclustering=" + std::to_string(bad_co) +
              " representative=" + std::to_string(bad_rep)};
}

}  // namespace acceptance
