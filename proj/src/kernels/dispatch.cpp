#include <atomic>
#include <cstdlib>

#include "kernels_impl.hpp"
#include "mbps/error.hpp"
#include "mbps/kernels.hpp"

namespace mbps::kernels {

namespace {

const KernelTable kScalar{Isa::scalar,
                          detail::linear_predictor_scalar,
                          detail::nb_kernel_sum_scalar,
                          detail::poisson_kernel_scalar,
                          detail::log_sum_exp_scalar,
                          detail::softplus_scalar};

#if defined(MBPS_HAVE_AVX2)
const KernelTable kAvx2{Isa::avx2,
                        detail::linear_predictor_avx2,
                        detail::nb_kernel_sum_avx2,
                        detail::poisson_kernel_avx2,
                        detail::log_sum_exp_avx2,
                        detail::softplus_avx2};

bool cpu_has_avx2() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* initial() noexcept {
  const KernelTable* best = avx2_table();
  if (!best) best = &kScalar;
  if (const char* env = std::getenv("MBPS_SIMD")) {
    auto isa = parse_isa(env);
    if (isa == Isa::scalar) return &kScalar;
    if (isa == Isa::avx2 && avx2_table()) return avx2_table();
  }
  return best;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

const char* to_string(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

std::optional<Isa> parse_isa(const std::string& s) {
  if (s == "scalar") return Isa::scalar;
  if (s == "avx2") return Isa::avx2;
  return std::nullopt;
}

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(MBPS_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  const KernelTable* t = isa == Isa::scalar ? &kScalar : avx2_table();
  if (!t) throw ConfigError(std::string("SIMD variant '") + to_string(isa) + "' is not available");
  current().store(t, std::memory_order_release);
}

Isa best_available() noexcept { return avx2_table() ? Isa::avx2 : Isa::scalar; }

}  // namespace mbps::kernels
