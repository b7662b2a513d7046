#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace mbps {

/// Seeded random stream. All samplers in the library draw from an explicitly
/// passed Rng so that runs are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent seed from a parent seed and a list of tags
  /// (splitmix64 mixing). Used to give each chain, series and step its own
  /// stream without depending on execution order.
  static std::uint64_t derive(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  /// Exponential with rate 1.
  double exponential() { return -std::log(uniform()); }
  /// Gamma with the given shape and rate (mean shape / rate).
  double gamma(double shape, double rate);
  /// log of a Gamma(shape, 1) draw; stays finite for very small shapes.
  double log_gamma1(double shape);
  double beta(double a, double b);
  std::int64_t poisson(double mean);

  /// Dirichlet draw; components with tiny concentration may be exactly zero.
  std::vector<double> dirichlet(std::span<const double> alpha);

  /// Index drawn with probability proportional to exp(log_weights).
  /// Throws NumericalError when every weight is -inf.
  std::size_t categorical_log(std::span<const double> log_weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mbps
