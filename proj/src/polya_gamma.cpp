#include "mbps/polya_gamma.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "mbps/error.hpp"

namespace mbps {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;  // switch point between the two proposal pieces

void check_shape(double b, double c, const char* who) {
  if (!(b > 0.0) || !std::isfinite(b))
    throw DomainError(std::string(who) + ": shape must be positive and finite");
  if (!std::isfinite(c)) throw DomainError(std::string(who) + ": tilt must be finite");
}

double log_norm_cdf(double x) {
  return std::log(0.5 * boost::math::erfc(-x / std::numbers::sqrt2));
}

// n-th coefficient of the alternating series for the J*(1, z) density.
double series_coef(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double e = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                   2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(e);
}

// Probability of proposing from the exponential tail piece.
double right_mass(double z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double rt = std::sqrt(1.0 / kTrunc);
  const double b = rt * (kTrunc * z - 1.0);
  const double a = -rt * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian truncated to (0, kTrunc].
double truncated_inverse_gaussian(Rng& rng, double z) {
  double x = kTrunc + 1.0;
  if (1.0 / kTrunc > z) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential(), e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > kTrunc) {
      double y = rng.normal();
      y *= y;
      const double my = mu * y;
      x = mu + 0.5 * mu * my - 0.5 * mu * std::sqrt(4.0 * my + my * my);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// PG(h, c) for 0 < h < 1 from the first terms of its gamma-series form, with
// the discarded tail replaced by its mean.
double pg_fractional(Rng& rng, double h, double c) {
  constexpr int kTerms = 200;
  const double c2 = c * c / (4.0 * kPi * kPi);
  double acc = 0.0;
  for (int k = 1; k <= kTerms; ++k) {
    const double d = (k - 0.5) * (k - 0.5) + c2;
    acc += rng.gamma(h, 1.0) / d;
  }
  // sum over k > K of 1 / ((k - 1/2)^2 + c2), by the midpoint-rule integral
  const double sc = std::sqrt(c2);
  const double tail = sc > 0.0 ? (0.5 * kPi - std::atan(kTerms / sc)) / sc : 1.0 / kTerms;
  acc += h * tail;
  return acc / (2.0 * kPi * kPi);
}

}  // namespace

double pg_mean(double b, double c) {
  check_shape(b, c, "pg_mean");
  const double x = std::abs(c);
  if (x < 1e-2) {
    const double c2 = x * x;
    return b * (0.25 - c2 / 48.0 + c2 * c2 / 480.0);
  }
  return b / (2.0 * x) * std::tanh(0.5 * x);
}

double pg_variance(double b, double c) {
  check_shape(b, c, "pg_variance");
  const double x = std::abs(c);
  if (x < 1e-2) {
    const double c2 = x * x;
    return b * (1.0 / 24.0 - c2 / 120.0 + 17.0 * c2 * c2 / 13440.0);
  }
  const double sech = 1.0 / std::cosh(0.5 * x);
  return b / (4.0 * x * x * x) * (2.0 * std::tanh(0.5 * x) - x * sech * sech);
}

namespace {

double unit_draw(Rng& rng, double z, double fz, double p_right) {
  for (;;) {
    double x;
    if (rng.uniform() < p_right)
      x = kTrunc + rng.exponential() / fz;
    else
      x = truncated_inverse_gaussian(rng, z);
    double s = series_coef(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

}  // namespace

double pg_sample_unit(Rng& rng, double c) {
  const double z = 0.5 * std::abs(c);
  return unit_draw(rng, z, 0.125 * kPi * kPi + 0.5 * z * z, right_mass(z));
}

double pg_sample(Rng& rng, double b, double c, const PgOptions& opt) {
  check_shape(b, c, "pg_sample");
  if (b >= opt.normal_threshold) {
    const double mu = pg_mean(b, c);
    const double sd = std::sqrt(pg_variance(b, c));
    for (int tries = 0; tries < 1000; ++tries) {
      const double w = rng.normal(mu, sd);
      if (w > 0.0) return w;
    }
    throw NumericalError("pg_sample: normal approximation rejected 1000 times");
  }
  const double whole = std::floor(b);
  const double frac = b - whole;
  double acc = 0.0;
  if (whole > 0) {
    const double z = 0.5 * std::abs(c);
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double p_right = right_mass(z);
    for (double k = 0; k < whole; k += 1.0) acc += unit_draw(rng, z, fz, p_right);
  }
  if (frac > 1e-12) acc += pg_fractional(rng, frac, c);
  return acc;
}

}  // namespace mbps
