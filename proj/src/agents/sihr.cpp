#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "mbps/agents.hpp"

namespace mbps {

namespace {

constexpr double kMassFloor = 1e-12;

SihrState derivative(const SihrState& s, const SihrRates& r, double N) {
  const double infect = r.infection * s.I * s.S / N;
  return {-infect, infect - (r.hospitalisation + r.recovery_infected) * s.I,
          r.hospitalisation * s.I - r.recovery_hospitalised * s.H,
          r.recovery_infected * s.I + r.recovery_hospitalised * s.H};
}

SihrState axpy(const SihrState& a, double h, const SihrState& d) {
  return {a.S + h * d.S, a.I + h * d.I, a.H + h * d.H, a.R + h * d.R};
}

SihrState rk4_step(const SihrState& s, const SihrRates& r, double N, double dt) {
  const SihrState k1 = derivative(s, r, N);
  const SihrState k2 = derivative(axpy(s, 0.5 * dt, k1), r, N);
  const SihrState k3 = derivative(axpy(s, 0.5 * dt, k2), r, N);
  const SihrState k4 = derivative(axpy(s, dt, k3), r, N);
  const double w = dt / 6.0;
  return {s.S + w * (k1.S + 2 * k2.S + 2 * k3.S + k4.S),
          s.I + w * (k1.I + 2 * k2.I + 2 * k3.I + k4.I),
          s.H + w * (k1.H + 2 * k2.H + 2 * k3.H + k4.H),
          s.R + w * (k1.R + 2 * k2.R + 2 * k3.R + k4.R)};
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Signed square root of the weighted Poisson deviance contribution, so that
// the sum of squares is -2 * power-weighted loglik + const.
double deviance_residual(double y, double lambda, double a) {
  lambda = std::max(lambda, kMassFloor);
  const double d = (y > 0.0 ? y * std::log(y / lambda) : 0.0) - (y - lambda);
  const double r = std::sqrt(2.0 * a * std::max(d, 0.0));
  return y >= lambda ? r : -r;
}

struct ResidualFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::function<std::vector<double>(const Eigen::VectorXd&)> model;  // lambda path
  std::vector<double> y, a;
  int n_inputs = 0;

  int inputs() const { return n_inputs; }
  int values() const { return static_cast<int>(y.size()); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    const auto lam = model(x);
    for (std::size_t s = 0; s < y.size(); ++s) {
      const double v = s < lam.size() && std::isfinite(lam[s]) ? lam[s] : 1e300;
      fvec[static_cast<Eigen::Index>(s)] = deviance_residual(y[s], v, a[s]);
    }
    return 0;
  }
};

// Five-point central differences; accurate enough that the polish below
// lands on the optimum to near rounding.
void jacobian5(const ResidualFunctor& f, const Eigen::VectorXd& x, Eigen::MatrixXd& J) {
  Eigen::VectorXd xp = x, fa(f.values()), fb(f.values()), fc(f.values()), fd(f.values());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-3 * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + 2 * h;
    f(xp, fa);
    xp[k] = x[k] + h;
    f(xp, fb);
    xp[k] = x[k] - h;
    f(xp, fc);
    xp[k] = x[k] - 2 * h;
    f(xp, fd);
    xp[k] = x[k];
    J.col(k) = (8.0 * (fb - fc) - (fa - fd)) / (12.0 * h);
  }
}

struct LmOutcome {
  Eigen::VectorXd x;
  bool converged = false;
};

// ftol compares sums of squares, which are flat at the optimum, so it limits
// the solution to about sqrt(ftol) relative accuracy; xtol does not.
LmOutcome minimise(const ResidualFunctor& f, Eigen::VectorXd x, int max_evals, double ftol,
                   double xtol) {
  Eigen::NumericalDiff<ResidualFunctor, Eigen::Central> numdiff(f, 1e-10);
  Eigen::LevenbergMarquardt<decltype(numdiff)> lm(numdiff);
  lm.parameters.maxfev = max_evals;
  lm.parameters.ftol = ftol;
  lm.parameters.xtol = xtol;
  using namespace Eigen::LevenbergMarquardtSpace;
  const Status st = lm.minimize(x);
  const bool ok = st == RelativeReductionTooSmall || st == RelativeErrorTooSmall ||
                  st == RelativeErrorAndReductionTooSmall || st == CosinusTooSmall ||
                  st == FtolTooSmall || st == XtolTooSmall || st == GtolTooSmall;
  if (!ok) return {x, false};
  // Gauss-Newton polish: stops once the step no longer shrinks
  Eigen::VectorXd r(f.values()), r_try(f.values());
  Eigen::MatrixXd J(f.values(), f.inputs());
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 8; ++it) {
    f(x, r);
    jacobian5(f, x, J);
    const Eigen::VectorXd dx = J.colPivHouseholderQr().solve(-r);
    const double size = dx.cwiseAbs().maxCoeff();
    if (!std::isfinite(size) || size >= last) break;
    f(x + dx, r_try);
    if (r_try.squaredNorm() > r.squaredNorm() * (1.0 + 1e-12)) break;
    x += dx;
    last = size;
    if (size <= 1e-15 * std::max(1.0, x.cwiseAbs().maxCoeff())) break;
  }
  return {x, true};
}

std::vector<double> path_from(const SihrState& init, const SihrRates& r, int substeps,
                              std::size_t length) {
  std::vector<double> out;
  out.reserve(length);
  if (length == 0) return out;
  const double N = init.total();
  const double dt = 1.0 / substeps;
  SihrState s = init;
  out.push_back(s.H);
  for (std::size_t t = 1; t < length; ++t) {
    for (int k = 0; k < substeps; ++k) s = rk4_step(s, r, N, dt);
    out.push_back(s.H);
  }
  return out;
}

}  // namespace

std::vector<SihrState> sihr_solve(const SihrState& init, const SihrRates& r, double dt,
                                  std::size_t steps) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("sihr_solve: dt must be positive");
  for (double v : {init.S, init.I, init.H, init.R})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DomainError("sihr_solve: compartments must be non-negative and finite");
  for (double v : {r.infection, r.hospitalisation, r.recovery_infected, r.recovery_hospitalised})
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("sihr_solve: rates must lie in [0, 1]");
  const double N = init.total();
  if (!(N > 0.0)) throw DomainError("sihr_solve: empty population");

  std::vector<SihrState> out;
  out.reserve(steps + 1);
  out.push_back(init);
  for (std::size_t k = 0; k < steps; ++k) {
    const SihrState next = rk4_step(out.back(), r, N, dt);
    if (std::min({next.S, next.I, next.H, next.R}) < -1e-9)
      throw NumericalError("sihr_solve: compartment went negative at step " +
                           std::to_string(k + 1) + "; reduce dt (now " + std::to_string(dt) +
                           ")");
    out.push_back(next);
  }
  return out;
}

std::vector<double> power_weights(std::size_t t, double discount) {
  if (!(discount > 0.0 && discount <= 1.0))
    throw DomainError("power_weights: discount outside (0, 1]");
  std::vector<double> a(t);
  for (std::size_t s = 0; s < t; ++s) a[s] = std::pow(discount, static_cast<double>(t - 1 - s));
  return a;
}

double power_weighted_loglik(std::span<const double> y, std::span<const double> lambda,
                             double discount) {
  if (y.size() != lambda.size()) throw InputError("power_weighted_loglik: length mismatch");
  const auto a = power_weights(y.size(), discount);
  double l = 0.0;
  for (std::size_t s = 0; s < y.size(); ++s) {
    const double lam = std::max(lambda[s], kMassFloor);
    l += a[s] * (y[s] * std::log(lam) - lam - std::lgamma(y[s] + 1.0));
  }
  return l;
}

double power_weighted_common_mean(std::span<const double> y, double discount) {
  if (y.empty()) throw InputError("power_weighted_common_mean: no observations");
  ResidualFunctor f;
  f.y.assign(y.begin(), y.end());
  f.a = power_weights(y.size(), discount);
  f.n_inputs = 1;
  f.model = [n = y.size()](const Eigen::VectorXd& x) {
    return std::vector<double>(n, std::exp(x[0]));
  };
  double mean = 0.0;
  for (double v : y) mean += v;
  Eigen::VectorXd x(1);
  x[0] = std::log(mean / static_cast<double>(y.size()) + 0.5);
  const auto out = minimise(f, x, 400, 0.0, 1e-15);
  if (!out.converged) throw NumericalError("power_weighted_common_mean: optimiser did not converge");
  return std::exp(out.x[0]);
}

std::vector<double> SihrFit::hospital_path(std::size_t length) const {
  const SihrState init{population - infected0 - hospitalised0, infected0, hospitalised0, 0.0};
  return path_from(init, rates, substeps, length);
}

SihrFit sihr_power_weighted_fit(std::span<const double> y, const SihrFitOptions& opt) {
  const std::size_t t = y.size();
  if (t < 8) throw InputError("sihr_power_weighted_fit: need at least 8 observations");
  if (!(opt.population > 0.0)) throw ConfigError("sihr_power_weighted_fit: population must be positive");
  if (opt.substeps < 1) throw ConfigError("sihr_power_weighted_fit: substeps must be >= 1");
  for (double v : y)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InputError("sihr_power_weighted_fit: counts must be non-negative");
  const double N = opt.population;
  double ymax = 0.0;
  for (double v : y) ymax = std::max(ymax, v);
  if (ymax >= 0.5 * N)
    throw ConfigError("sihr_power_weighted_fit: population " + std::to_string(N) +
                      " is too small for counts up to " + std::to_string(ymax));

  auto unpack = [&](const Eigen::VectorXd& x) {
    SihrFit fit;
    fit.rates = {logistic(x[0]), logistic(x[1]), logistic(x[2]), logistic(x[3])};
    // both initial counts share at most 90% of the population
    fit.infected0 = 0.45 * N * logistic(x[4]);
    fit.hospitalised0 = 0.45 * N * logistic(x[5]);
    fit.population = N;
    fit.discount = opt.discount;
    fit.substeps = opt.substeps;
    fit.n_obs = t;
    return fit;
  };
  auto pack_count = [&](double c) { return logit(std::clamp(c / (0.45 * N), 1e-12, 1 - 1e-12)); };

  ResidualFunctor f;
  f.y.assign(y.begin(), y.end());
  f.a = power_weights(t, opt.discount);
  f.n_inputs = 6;
  f.model = [&](const Eigen::VectorXd& x) { return unpack(x).hospital_path(t); };

  const double h0 = std::max(y[0], 0.5);
  const double starts[3][5] = {{0.6, 0.1, 0.3, 0.2, 2.0},
                               {0.3, 0.05, 0.1, 0.1, 5.0},
                               {0.9, 0.2, 0.5, 0.3, 10.0}};
  SihrFit best;
  best.loglik = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& s : starts) {
    Eigen::VectorXd x(6);
    for (int k = 0; k < 4; ++k) x[k] = logit(s[k]);
    x[4] = pack_count(h0 * s[4]);
    x[5] = pack_count(h0);
    const auto out = minimise(f, x, opt.max_evals, 1e-10, 1e-10);
    SihrFit fit = unpack(out.x);
    fit.converged = out.converged;
    fit.loglik = power_weighted_loglik(y, fit.hospital_path(t), opt.discount);
    if (!std::isfinite(fit.loglik)) continue;
    const bool better = fit.converged && (!any || fit.loglik > best.loglik);
    if (better || (!any && fit.loglik > best.loglik)) best = fit;
    any = any || fit.converged;
  }
  if (!any)
    throw FitError("sihr_power_weighted_fit: no start converged within " +
                       std::to_string(opt.max_evals) + " evaluations",
                   best);
  return best;
}

}  // namespace mbps
