#pragma once

#include <limits>

#include "mbps/rng.hpp"

namespace mbps {

struct PgOptions {
  /// Shapes at or above this use a moment-matched normal truncated at zero.
  /// Set to +inf to force the exact path.
  double normal_threshold = 170.0;
};

double pg_mean(double b, double c);
double pg_variance(double b, double c);

/// One draw from PG(b, c). Integer parts of b are sums of exact PG(1, c)
/// draws; a fractional remainder uses a truncated gamma-series
/// representation.
double pg_sample(Rng& rng, double b, double c, const PgOptions& opt = {});

/// Exact PG(1, c) by the alternating-series rejection sampler.
double pg_sample_unit(Rng& rng, double c);

}  // namespace mbps
