#pragma once

#include <cstddef>

// Entry points shared between the per-ISA translation units. The AVX2 unit is
// compiled with -mavx2 -mfma and must not pull in inline library code.
namespace mbps::kernels::detail {

void linear_predictor_scalar(const double* const* a, const double* const* b,
                             std::size_t p, const double* offset, double* out,
                             std::size_t len);
double nb_kernel_sum_scalar(const double* y, const double* eta, std::size_t len,
                            double r);
void poisson_kernel_scalar(double y, const double* eta, double* out, std::size_t len);
double log_sum_exp_scalar(const double* x, std::size_t len);
void softplus_scalar(const double* x, double* out, std::size_t len);
double log_scalar(double x);

#if defined(MBPS_HAVE_AVX2)
void linear_predictor_avx2(const double* const* a, const double* const* b,
                           std::size_t p, const double* offset, double* out,
                           std::size_t len);
double nb_kernel_sum_avx2(const double* y, const double* eta, std::size_t len, double r);
void poisson_kernel_avx2(double y, const double* eta, double* out, std::size_t len);
double log_sum_exp_avx2(const double* x, std::size_t len);
void softplus_avx2(const double* x, double* out, std::size_t len);
#endif

}  // namespace mbps::kernels::detail
