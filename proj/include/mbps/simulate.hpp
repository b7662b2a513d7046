#pragma once

#include <vector>

#include "mbps/clustering.hpp"
#include "mbps/config.hpp"
#include "mbps/domain.hpp"
#include "mbps/io.hpp"

namespace mbps {

/// A panel drawn from the mixture synthesis model together with the agent
/// moments that generated it and the true cluster structure.
struct SimulatedPanel {
  CountPanel panel;
  MomentTable moments;  // one entry per configured horizon
  Assignment clusters;
  /// [k][j][t]: true weights, j = 0 the intercept
  std::vector<std::vector<std::vector<double>>> weights;
  std::vector<double> u;  // n x T intercept deviations (zeros when tau2 = 0)
};

/// Infected counts follow one Gaussian-shaped wave per series; each agent's
/// log-scale mean is the lagged log level of a fixed fraction of them, plus an
/// agent bias and noise. Counts are Poisson with log mean theta_k' (1, f) + u
/// where f is drawn from the horizon-1 moments and theta_k follows a random
/// walk from (intercept_k, 1/J, ..., 1/J).
SimulatedPanel simulate_panel(const SimulationConfig& config);

Table truth_table(const SimulatedPanel& sim);
Table weights_table(const SimulatedPanel& sim);

}  // namespace mbps
