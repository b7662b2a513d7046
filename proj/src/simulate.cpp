#include "mbps/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "mbps/error.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/rng.hpp"

namespace mbps {

SimulatedPanel simulate_panel(const SimulationConfig& c) {
  c.validate();
  Rng rng(c.seed);
  const std::size_t n = c.n, T = c.length, J = c.agents, K = c.clusters;

  SimulatedPanel out;
  auto& p = out.panel;
  p.frequency = c.frequency;
  const auto start = *parse_date(c.start_date);
  for (std::size_t t = 0; t < T; ++t)
    p.calendar.push_back(start + step_of(c.frequency) * static_cast<int>(t));
  p.y = Grid<std::int64_t>(n, T);
  p.infected = Grid<std::int64_t>(n, T);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "region%02zu", i + 1);
    p.labels.push_back(buf);
  }

  // level of hospital demand behind the agents
  Grid<double> log_level(n, T);
  const double Td = static_cast<double>(T);
  for (std::size_t i = 0; i < n; ++i) {
    const double peak = Td * (0.35 + 0.4 * rng.uniform());
    const double width = Td * (0.06 + 0.08 * rng.uniform());
    const double height = std::exp(std::log(300.0) + 1.5 * rng.uniform());
    const double share = 0.05 + 0.15 * rng.uniform();
    double prev = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double z = (static_cast<double>(t) - peak) / width;
      const double inf = 30.0 + height * std::exp(-0.5 * z * z);
      p.infected(i, t) = rng.poisson(inf);
      const double lagged = t ? prev : static_cast<double>(p.infected(i, t));
      log_level(i, t) = std::log(2.0 + share * lagged);
      prev = static_cast<double>(p.infected(i, t));
    }
  }

  std::vector<double> bias(J);
  for (auto& b : bias) b = c.agent_bias_sd * rng.normal();
  for (int s : c.horizons) {
    AgentPredictive ap(n, J, T, s);
    for (std::size_t j = 0; j < J; ++j) ap.agent_names[j] = "agent" + std::to_string(j + 1);
    out.moments.emplace(s, std::move(ap));
  }
  // horizon-1 moments generate the data; longer horizons share the mean and
  // carry proportionally larger variance
  Grid<double> m1(n * J, T);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t) {
        m1(i * J + j, t) = log_level(i, t) + bias[j] + c.agent_noise_sd * rng.normal();
        for (auto& [s, ap] : out.moments) {
          ap.mean(i, j, t) = m1(i * J + j, t);
          ap.var(i, j, t) = c.moment_var * s;
          ap.info_index[ap.at(i, j, t)] = static_cast<std::int64_t>(t) - s;
        }
      }

  out.clusters.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.clusters[i] = static_cast<int>(i % K);
  out.weights.assign(K, std::vector<std::vector<double>>(J + 1, std::vector<double>(T)));
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> th(J + 1, 1.0 / static_cast<double>(J));
    th[0] = (static_cast<double>(k) - 0.5 * static_cast<double>(K - 1)) * c.intercept_separation;
    for (std::size_t t = 0; t < T; ++t) {
      if (t)
        for (auto& v : th) v += c.weight_walk_sd * rng.normal();
      for (std::size_t j = 0; j <= J; ++j) out.weights[k][j][t] = th[j];
    }
  }
  out.u.assign(n * T, 0.0);
  const double sd_u = std::sqrt(c.tau2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = out.weights[static_cast<std::size_t>(out.clusters[i])];
    for (std::size_t t = 0; t < T; ++t) {
      double eta = w[0][t];
      for (std::size_t j = 0; j < J; ++j)
        eta += w[j + 1][t] * (m1(i * J + j, t) + std::sqrt(c.moment_var) * rng.normal());
      if (sd_u > 0.0) {
        out.u[i * T + t] = sd_u * rng.normal();
        eta += out.u[i * T + t];
      }
      p.y(i, t) = rng.poisson(std::exp(std::min(eta, kLogMeanCap)));
    }
  }
  return out;
}

Table truth_table(const SimulatedPanel& sim) {
  Table t;
  t.header = {"region", "cluster"};
  for (std::size_t i = 0; i < sim.panel.n(); ++i)
    t.rows.push_back({sim.panel.labels[i], std::to_string(sim.clusters[i])});
  return t;
}

Table weights_table(const SimulatedPanel& sim) {
  Table t;
  t.header = {"cluster", "coordinate", "date", "value"};
  for (std::size_t k = 0; k < sim.weights.size(); ++k)
    for (std::size_t j = 0; j < sim.weights[k].size(); ++j)
      for (std::size_t tt = 0; tt < sim.weights[k][j].size(); ++tt)
        t.rows.push_back({std::to_string(k), j ? "agent" + std::to_string(j) : "intercept",
                          format_date(sim.panel.calendar[tt]), format_double(sim.weights[k][j][tt])});
  return t;
}

}  // namespace mbps
