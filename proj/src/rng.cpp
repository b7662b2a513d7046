#include "mbps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbps/error.hpp"

namespace mbps {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (auto tag : tags) h = splitmix64(h ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
  return h;
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw DomainError("gamma: shape and rate must be positive");
  if (shape < 1.0) return std::exp(log_gamma1(shape)) / rate;
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_) / rate;
}

double Rng::log_gamma1(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(engine_));
  }
  // Ga(a) = Ga(a + 1) * U^(1/a)
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  return std::log(dist(engine_)) + std::log(uniform()) / shape;
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean))
    throw DomainError("poisson: mean must be finite and non-negative");
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(engine_);
}

std::vector<double> Rng::dirichlet(std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  if (alpha.empty()) return out;
  // Work in log space so that small concentrations do not all underflow.
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[k] = log_gamma1(alpha[k]);
    mx = std::max(mx, out[k]);
  }
  double total = 0.0;
  for (auto& v : out) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) mx = std::max(mx, w);
  if (!std::isfinite(mx))
    throw NumericalError("categorical: all weights are zero or not finite");
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - mx);
  double u = uniform() * total;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double p = std::exp(log_weights[k] - mx);
    if (p > 0.0) last_positive = k;
    u -= p;
    if (u <= 0.0 && p > 0.0) return k;
  }
  return last_positive;
}

}  // namespace mbps
