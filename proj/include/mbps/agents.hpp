#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mbps/clustering.hpp"
#include "mbps/domain.hpp"
#include "mbps/error.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/polya_gamma.hpp"
#include "mbps/rng.hpp"
#include "mbps/ssm.hpp"

namespace mbps {

enum class AgentKind { dglm, gam, inar, sihr, fmpr };

const char* to_string(AgentKind k) noexcept;
AgentKind parse_agent_kind(const std::string& s);

struct AgentSpec {
  AgentKind kind = AgentKind::dglm;
  CovariateRecipe recipe = CovariateRecipe::dglm_default();
  double discount = 0.95;
  int bootstrap_reps = 1000;

  void validate() const;
};

struct LogMoments {
  double mean = 0.0;
  double var = 0.0;
};

// ---------------------------------------------------------------- DGLM

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

/// E[log x] and Var[log x] for x ~ Ga(shape, rate).
LogMoments log_moments(const GammaParams& g);
/// Inverse of log_moments: solves trigamma(shape) = var, then the rate.
GammaParams gamma_from_log_moments(double mean, double var);

struct DglmStep {
  GaussianState posterior;
  double f = 0.0;  // prior mean of the linear predictor
  double q = 0.0;  // prior variance of the linear predictor
};

/// One Poisson dynamic GLM step with discount `delta`, conjugate gamma
/// moment matching and a linear-Bayes state update.
DglmStep dglm_update(const GaussianState& state, double y, std::span<const double> x,
                     double delta);

// ----------------------------------------------------------------- GAM

/// Cubic B-spline basis on equally spaced knots over the range of the
/// fitting points, reparametrised to sum to zero over those points and
/// extended linearly outside the range.
class SplineSmooth {
 public:
  SplineSmooth() = default;
  SplineSmooth(std::span<const double> x, std::size_t n_basis);

  std::size_t dim() const noexcept { return n_basis_ - 1; }
  void basis_row(double x, std::span<double> out) const;
  /// Second-difference penalty in the constrained coordinates.
  Eigen::MatrixXd penalty() const;
  double eval(double x, const Eigen::Ref<const Eigen::VectorXd>& coef) const;

 private:
  void raw_row(double x, std::span<double> out) const;

  double lo_ = 0.0, hi_ = 1.0, h_ = 1.0;
  std::size_t n_basis_ = 0;
  Eigen::MatrixXd null_space_;  // n_basis x (n_basis - 1)
};

struct GamOptions {
  std::size_t n_basis = 6;
  std::size_t grid_size = 20;
  double log10_lambda_lo = -2.0;
  double log10_lambda_hi = 6.0;
  std::optional<std::array<double, 2>> lambda;  // fixed; skips the GCV search
  int max_iter = 100;
  double tol = 1e-10;
};

/// log mu = intercept + s_level(itilde) + s_trend(time)
struct GamFit {
  SplineSmooth level, trend;
  Eigen::VectorXd beta;  // intercept, level coefficients, trend coefficients
  Eigen::MatrixXd cov;   // (X'WX + P)^-1 at the optimum
  std::array<double, 2> lambda{};
  std::array<double, 2> edf_terms{};
  double edf = 0.0;
  double deviance = 0.0;
  double gcv = 0.0;
  int iterations = 0;

  double intercept() const { return beta[0]; }
  Eigen::VectorXd design_row(double itilde, double time) const;
  double log_mean(double itilde, double time) const { return design_row(itilde, time).dot(beta); }
  double smooth_level(double itilde) const;
  double smooth_trend(double time) const;
};

GamFit gam_fit(std::span<const double> y, std::span<const double> itilde,
               std::span<const double> time, const GamOptions& options = {});

// ---------------------------------------------------------------- INAR

struct PoissonGlmFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // inverse observed information
  Eigen::VectorXd score;
  double loglik = 0.0;
  int iterations = 0;
};

/// Newton-Raphson with step halving. Throws DomainError when the
/// information matrix is singular.
PoissonGlmFit poisson_glm_fit(const Eigen::MatrixXd& X, std::span<const double> y,
                              int max_iter = 100);

/// y_t | y_{t-1} ~ Poi(exp(x_t'beta + gamma y_{t-1})) for t = 1..T-1. X has
/// one row per y; the returned coefficients are (beta, gamma).
PoissonGlmFit inar_fit(std::span<const double> y, const Eigen::MatrixXd& X);

// ---------------------------------------------------------------- SIHR

struct SihrRates {
  double infection = 0.0;
  double hospitalisation = 0.0;
  double recovery_infected = 0.0;
  double recovery_hospitalised = 0.0;
};

struct SihrState {
  double S = 0.0, I = 0.0, H = 0.0, R = 0.0;
  double total() const noexcept { return S + I + H + R; }
};

/// Fixed-step RK4; returns steps + 1 states starting with `init`. The
/// population is init.total().
std::vector<SihrState> sihr_solve(const SihrState& init, const SihrRates& rates, double dt,
                                  std::size_t steps);

/// a_s = discount^(t - s) for the t observations, oldest first.
std::vector<double> power_weights(std::size_t t, double discount);
double power_weighted_loglik(std::span<const double> y, std::span<const double> lambda,
                             double discount);

/// Numerical maximiser of the power-weighted likelihood with a single
/// shared mean, using the same optimiser as the SIHR fit.
double power_weighted_common_mean(std::span<const double> y, double discount);

struct SihrFitOptions {
  double discount = 0.95;
  double population = 1e6;
  int substeps = 4;  // RK4 steps per observation interval
  int max_evals = 4000;
};

struct SihrFit {
  SihrRates rates;
  double infected0 = 0.0;
  double hospitalised0 = 0.0;
  double population = 0.0;
  double discount = 1.0;
  int substeps = 4;
  std::size_t n_obs = 0;
  double loglik = 0.0;  // power-weighted
  bool converged = false;

  /// H at observation times 0..length-1 (0 is the first fitted observation).
  std::vector<double> hospital_path(std::size_t length) const;
};

class FitError : public NumericalError {
 public:
  FitError(const std::string& what, SihrFit best) : NumericalError(what), best_(std::move(best)) {}
  const SihrFit& best() const noexcept { return best_; }

 private:
  SihrFit best_;
};

/// Maximises the power-weighted Poisson likelihood of y over the four rates
/// and the initial infected and hospitalised counts. Throws FitError with the
/// best parameters found when no start converges.
SihrFit sihr_power_weighted_fit(std::span<const double> y, const SihrFitOptions& options);

// ----------------------------------------------------------- bootstrap

/// Mean and variance of log(y + 0.5) over the replicates.
LogMoments log_moments_of(std::span<const double> replicates);
/// Throws ConfigError when reps < 100.
LogMoments bootstrap_log_moments(Rng& rng, const std::function<double(Rng&)>& simulate, int reps);

// ---------------------------------------------------------------- FMPR

struct FmprConfig {
  std::size_t K = 0;  // 0: one per series
  double a0 = 0.01;
  double prior_var = 100.0;
  double r = 1000.0;
  std::size_t n_iter = 1000;
  std::size_t n_burn = 500;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  PgOptions pg;
};

/// Per-series design matrices and counts (rows aligned).
struct FmprData {
  std::vector<Eigen::MatrixXd> X;
  std::vector<std::vector<double>> y;
};

struct FmprDraws {
  std::size_t K = 0, p = 0;
  std::vector<std::vector<double>> beta;  // per draw, K x p
  std::vector<Assignment> z;
  std::vector<std::vector<double>> pi;
};

FmprDraws fmpr_fit(const FmprData& data, const FmprConfig& config);

// ------------------------------------------------------ origin forecasts

/// Everything an agent fit needs besides the panel.
struct AgentSettings {
  std::vector<AgentSpec> agents;
  int ma_window = 2;
  int lag = 1;
  std::vector<double> population;  // per series; SIHR N
  double default_population = 1e6;
  std::size_t sihr_window = 20;  // most recent observations the ODE is fitted to
  int sihr_substeps = 4;
  GamOptions gam;
  double dglm_prior_var = 1.0;
  std::uint64_t seed = 1;

  static AgentSettings defaults(Frequency f);
  void validate() const;
};

/// Variances below this are raised to it so that moments stay usable.
inline constexpr double kMinLogVariance = 1e-6;

struct OriginForecast {
  std::size_t series = 0;
  std::size_t origin = 0;
  // [agent][h - 1]
  std::vector<std::vector<LogMoments>> moments;
  std::vector<std::vector<ForecastDistribution>> predictive;  // empty unless requested
  std::int64_t info_index = -1;  // largest panel index of y or infected read
  std::vector<std::string> warnings;
};

/// Fits every agent of `settings` to series i using data at indices <= origin
/// and forecasts origin + 1 .. origin + max_horizon.
OriginForecast forecast_from_origin(const CountPanel& panel, std::size_t series,
                                    std::size_t origin, int max_horizon,
                                    const AgentSettings& settings,
                                    std::size_t predictive_draws = 0);

/// Earliest origin at which every configured agent can be fitted.
std::size_t earliest_origin(const AgentSettings& settings);

struct FmprForecast {
  std::size_t origin = 0;
  std::vector<std::vector<ForecastDistribution>> predictive;  // [series][h - 1]
  std::int64_t info_index = -1;
};

FmprForecast fmpr_forecast_from_origin(const CountPanel& panel, std::size_t origin,
                                       int max_horizon, const AgentSettings& settings,
                                       const FmprConfig& config, std::size_t draws);

}  // namespace mbps
