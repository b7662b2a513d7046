#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "mbps/kernels.hpp"

using namespace mbps::kernels;

namespace {

std::vector<double> uniform_vec(std::mt19937_64& g, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

bool close(double a, double b, double rel) {
  if (a == b) return true;
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("scalar kernels against direct formulas") {
  const auto& k = scalar_table();
  std::vector<double> x{-800.0, -30.0, -1.0, 0.0, 1e-9, 2.5, 40.0, 800.0};
  std::vector<double> out(x.size());
  k.softplus(x.data(), out.data(), x.size());
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[3] == doctest::Approx(std::log(2.0)));
  CHECK(out[5] == doctest::Approx(std::log1p(std::exp(2.5))));
  CHECK(out[7] == doctest::Approx(800.0));

  std::vector<double> lse{1.0, 2.0, 3.0};
  CHECK(k.log_sum_exp(lse.data(), 3) ==
        doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
  CHECK(k.log_sum_exp(lse.data(), 0) == -std::numeric_limits<double>::infinity());

  const double y[] = {3.0};
  const double eta[] = {std::log(5.0)};
  const double r = 1000.0;
  const double psi = eta[0] - std::log(r);
  CHECK(k.nb_kernel_sum(y, eta, 1, r) ==
        doctest::Approx(3.0 * psi - 1003.0 * std::log1p(std::exp(psi))));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* v = avx2_table();
  if (!v) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& s = scalar_table();
  std::mt19937_64 g(7);

  for (std::size_t len = 0; len <= 37; ++len) {
    auto x = uniform_vec(g, len, -40.0, 40.0);
    std::vector<double> a(len), b(len);
    s.softplus(x.data(), a.data(), len);
    v->softplus(x.data(), b.data(), len);
    for (std::size_t i = 0; i < len; ++i) CHECK(close(a[i], b[i], 4e-15));

    auto eta = uniform_vec(g, len, -5.0, 8.0);
    s.poisson_kernel(17.0, eta.data(), a.data(), len);
    v->poisson_kernel(17.0, eta.data(), b.data(), len);
    // y*eta - exp(eta) cancels; compare against the size of the larger term.
    for (std::size_t i = 0; i < len; ++i)
      CHECK(std::abs(a[i] - b[i]) <=
            4e-15 * std::max({1.0, std::exp(eta[i]), std::abs(17.0 * eta[i])}));

    CHECK(close(s.log_sum_exp(x.data(), len), v->log_sum_exp(x.data(), len), 1e-14));

    auto y = uniform_vec(g, len, 0.0, 300.0);
    for (auto& yy : y) yy = std::floor(yy);
    const double ns = s.nb_kernel_sum(y.data(), eta.data(), len, 1000.0);
    const double nv = v->nb_kernel_sum(y.data(), eta.data(), len, 1000.0);
    CHECK(close(ns, nv, 1e-12));

    const std::size_t p = 1 + len % 6;
    std::vector<std::vector<double>> ra, rb;
    std::vector<const double*> pa, pb;
    for (std::size_t j = 0; j < p; ++j) {
      ra.push_back(uniform_vec(g, len, -2.0, 2.0));
      rb.push_back(uniform_vec(g, len, -2.0, 2.0));
    }
    for (std::size_t j = 0; j < p; ++j) {
      pa.push_back(ra[j].data());
      pb.push_back(rb[j].data());
    }
    auto off = uniform_vec(g, len, -1.0, 1.0);
    s.linear_predictor(pa.data(), pb.data(), p, off.data(), a.data(), len);
    v->linear_predictor(pa.data(), pb.data(), p, off.data(), b.data(), len);
    for (std::size_t i = 0; i < len; ++i) CHECK(close(a[i], b[i], 1e-14));
    s.linear_predictor(pa.data(), pb.data(), p, nullptr, a.data(), len);
    v->linear_predictor(pa.data(), pb.data(), p, nullptr, b.data(), len);
    for (std::size_t i = 0; i < len; ++i) CHECK(close(a[i], b[i], 1e-14));
  }
}

TEST_CASE("avx2 kernels at range edges") {
  const KernelTable* v = avx2_table();
  if (!v) return;
  const auto& s = scalar_table();
  std::vector<double> x{-1000.0, -745.0, -708.5, -1e-300, 0.0, 1e-300, 1e-8,
                        36.0, 37.0, 708.0, 709.5, 1000.0};
  std::vector<double> a(x.size()), b(x.size());
  s.softplus(x.data(), a.data(), x.size());
  v->softplus(x.data(), b.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(close(a[i], b[i], 4e-15));

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> l(13, ninf);
  CHECK(v->log_sum_exp(l.data(), l.size()) == ninf);
  l[11] = 2.0;
  CHECK(v->log_sum_exp(l.data(), l.size()) == doctest::Approx(2.0));
  l[3] = 2.0;
  CHECK(close(v->log_sum_exp(l.data(), l.size()), 2.0 + std::log(2.0), 1e-15));
}

TEST_CASE("dispatch honours explicit selection") {
  select(Isa::scalar);
  CHECK(active().isa == Isa::scalar);
  if (avx2_table()) {
    select(Isa::avx2);
    CHECK(active().isa == Isa::avx2);
  }
  select(best_available());
  CHECK(parse_isa("scalar") == Isa::scalar);
  CHECK_FALSE(parse_isa("neon").has_value());
}
