#pragma once

#include <cstddef>
#include <optional>
#include <string>

/// Data-parallel inner loops of the samplers. Every kernel has a scalar
/// reference implementation; vector variants are selected once at runtime
/// from what the CPU reports and can be forced back to scalar.
namespace mbps::kernels {

enum class Isa { scalar, avx2 };

const char* to_string(Isa isa) noexcept;
std::optional<Isa> parse_isa(const std::string& s);

struct KernelTable {
  Isa isa;

  /// out[t] = offset[t] + sum_j a[j][t] * b[j][t] for t < len. `offset` may be
  /// null. Rows are separate arrays of length len.
  void (*linear_predictor)(const double* const* a, const double* const* b,
                           std::size_t p, const double* offset, double* out,
                           std::size_t len);

  /// sum_t y_t psi_t - (y_t + r) log(1 + exp(psi_t)), psi_t = eta_t - log r.
  /// The negative-binomial log mass without its y-only gamma terms.
  double (*nb_kernel_sum)(const double* y, const double* eta, std::size_t len,
                          double r);

  /// out[d] = y * eta[d] - exp(eta[d]).
  void (*poisson_kernel)(double y, const double* eta, double* out, std::size_t len);

  /// log(sum_d exp(x[d])); -inf for an empty or all -inf input.
  double (*log_sum_exp)(const double* x, std::size_t len);

  /// out[d] = log(1 + exp(x[d])) computed without overflow.
  void (*softplus)(const double* x, double* out, std::size_t len);
};

const KernelTable& scalar_table() noexcept;
/// Null when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table() noexcept;

/// Best supported variant, unless the MBPS_SIMD environment variable says
/// otherwise ("scalar" or "avx2").
const KernelTable& active() noexcept;
/// Forces a variant for the rest of the process; throws ConfigError when the
/// variant is unavailable.
void select(Isa isa);
Isa best_available() noexcept;

}  // namespace mbps::kernels
