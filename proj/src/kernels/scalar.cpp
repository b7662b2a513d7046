#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_impl.hpp"

namespace mbps::kernels::detail {

namespace {

inline double softplus1(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

void linear_predictor_scalar(const double* const* a, const double* const* b,
                             std::size_t p, const double* offset, double* out,
                             std::size_t len) {
  for (std::size_t t = 0; t < len; ++t) {
    double acc = offset ? offset[t] : 0.0;
    for (std::size_t j = 0; j < p; ++j) acc += a[j][t] * b[j][t];
    out[t] = acc;
  }
}

double nb_kernel_sum_scalar(const double* y, const double* eta, std::size_t len,
                            double r) {
  const double log_r = std::log(r);
  double acc = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    const double psi = eta[t] - log_r;
    acc += y[t] * psi - (y[t] + r) * softplus1(psi);
  }
  return acc;
}

void poisson_kernel_scalar(double y, const double* eta, double* out, std::size_t len) {
  for (std::size_t d = 0; d < len; ++d) out[d] = y * eta[d] - std::exp(eta[d]);
}

double log_sum_exp_scalar(const double* x, std::size_t len) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < len; ++d) mx = std::max(mx, x[d]);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (std::size_t d = 0; d < len; ++d) acc += std::exp(x[d] - mx);
  return mx + std::log(acc);
}

void softplus_scalar(const double* x, double* out, std::size_t len) {
  for (std::size_t d = 0; d < len; ++d) out[d] = softplus1(x[d]);
}

double log_scalar(double x) { return std::log(x); }

}  // namespace mbps::kernels::detail
