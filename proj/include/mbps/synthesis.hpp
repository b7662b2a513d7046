#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbps/clustering.hpp"
#include "mbps/domain.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/polya_gamma.hpp"
#include "mbps/rng.hpp"
#include "mbps/ssm.hpp"

namespace mbps {

enum class Variant { bps, mbps, mbpsh };

const char* to_string(Variant v) noexcept;
Variant parse_variant(const std::string& s);

/// Counts and agent moments over one estimation window, laid out for the
/// sampler: y is [i][t], m and s2 are [i][j][t] with s2 already inflated.
struct SynthesisInput {
  std::size_t n = 0, T = 0, J = 0;
  int horizon = 1;
  std::vector<double> y;
  std::vector<double> m, s2;

  double count(std::size_t i, std::size_t t) const { return y[i * T + t]; }
  std::size_t at(std::size_t i, std::size_t j, std::size_t t) const { return (i * J + j) * T + t; }
};

/// y is n x T (the estimation window); moments must have the same n and T.
SynthesisInput make_input(const Grid<std::int64_t>& y, const AgentPredictive& moments,
                          double variance_inflation = 1.0);

/// One state of the chain. theta is stored coordinate-major per cluster,
/// [k][j][t] with j = 0 the intercept, so that each coordinate path is
/// contiguous.
struct SynthesisDraw {
  std::size_t n = 0, T = 0, J = 0, K = 0;
  std::vector<double> theta;      // K x (J+1) x T
  std::vector<double> final_cov;  // K x (J+1) x (J+1): filtered C_T of the last weight update
  std::vector<int> z;             // n, values in [0, K)
  std::vector<double> pi;         // K
  std::vector<double> f;          // n x J x T
  std::vector<double> omega;      // n x T
  std::vector<double> u;          // n x T (MBPSH)
  std::vector<double> tau2;       // K x T (MBPSH)

  std::size_t p() const noexcept { return J + 1; }
  double& th(std::size_t k, std::size_t j, std::size_t t) { return theta[(k * p() + j) * T + t]; }
  double th(std::size_t k, std::size_t j, std::size_t t) const {
    return theta[(k * p() + j) * T + t];
  }
  double& fac(std::size_t i, std::size_t j, std::size_t t) { return f[(i * J + j) * T + t]; }
  double fac(std::size_t i, std::size_t j, std::size_t t) const { return f[(i * J + j) * T + t]; }
  double intercept_dev(std::size_t i, std::size_t t) const { return u.empty() ? 0.0 : u[i * T + t]; }
  /// theta_{t,k}' F_it + u_it
  double linear_predictor(std::size_t i, std::size_t k, std::size_t t) const;
};

/// Negative-binomial approximation to the Poisson log mass with dispersion r,
/// psi = eta - log r.
double nb_log_pmf(double y, double psi, double r);
double poisson_log_pmf(double y, double eta);

/// PG(y + r, eta - log r) where eta is the linear predictor.
double sample_omega(Rng& rng, double y, double eta, double r, const PgOptions& pg = {});

/// Conditional draw of one latent factor vector f_it given omega, the
/// cluster weights at t (theta, length J+1), the intercept deviation u and
/// the agent prior N(m, diag(s2)). Writes J values into `out`.
void sample_factors(Rng& rng, double y, double omega, std::span<const double> theta,
                    std::span<const double> m, std::span<const double> s2, double u, double r,
                    std::span<double> out);

/// Posterior mean and covariance used by sample_factors, evaluated directly.
void factor_posterior(double y, double omega, std::span<const double> theta,
                      std::span<const double> m, std::span<const double> s2, double u, double r,
                      Eigen::VectorXd& mean, Eigen::MatrixXd& cov);

/// Unnormalised log assignment weights of series i over clusters, with omega
/// integrated out: log pi_k + sum_t nb_log_pmf (+ sum_t log N(u; 0, tau2_k)
/// when u is present).
std::vector<double> assignment_log_weights(const SynthesisInput& in, const SynthesisDraw& s,
                                           std::size_t i, double r);
void sample_assignments(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, double r);

std::vector<double> sample_mixture_weights(Rng& rng, std::span<const int> z, double a0,
                                           std::size_t K);

/// FFBS for cluster k's weight path from its members' pseudo-data.
void sample_weights_block(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, std::size_t k,
                          double delta, const GaussianState& prior, double r);

/// Pseudo-observations of cluster k at every t (exposed for testing).
std::vector<PseudoObservation> cluster_pseudo_data(const SynthesisInput& in,
                                                   const SynthesisDraw& s, std::size_t k,
                                                   double r);

double sample_intercept_deviation(Rng& rng, double y, double omega, double eta_without_u,
                                  double tau2, double r);

/// Beta-gamma FFBS of cluster volatilities from the current u.
void sample_volatilities(Rng& rng, SynthesisDraw& s, double beta, const GammaState& prior,
                         PrecisionBackward form);

/// Which blocks a sweep updates; everything on by default.
struct SweepMask {
  bool omega = true, theta = true, factors = true, u = true, tau2 = true, z = true, pi = true;
};

struct SamplerOptions {
  SweepMask mask;
  PgOptions pg;
  PrecisionBackward precision_form = PrecisionBackward::discounted;
  bool keep_latent = false;  // store f, omega and u in retained draws
  std::optional<Assignment> init_z;
  /// Called with the scan index after every scan (burn-in included).
  std::function<void(std::size_t)> on_scan;
};

struct SweepContext {
  const SynthesisConfig& config;
  Variant variant;
  GaussianState theta_prior;
  GammaState precision_prior;
  const SamplerOptions& options;
};

/// One scan in the order omega, theta, f, u, tau2, z, pi.
void gibbs_sweep(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, const SweepContext& ctx);

/// Starting state: k-means z on (log level, mean absolute change), f at the
/// agent means, u = 0, tau2 at its initial value, theta at the prior mean.
SynthesisDraw initial_state(const SynthesisInput& in, const SynthesisConfig& config,
                            Variant variant, const SamplerOptions& options);

GaussianState resolve_theta_prior(const SynthesisConfig& config, std::size_t J);

struct DrawCollection {
  Variant variant = Variant::mbps;
  std::size_t n = 0, T = 0, J = 0, K = 0;
  int horizon = 1;
  double delta_sigma = 1.0;
  std::vector<SynthesisDraw> draws;
  std::vector<std::size_t> alive_per_scan;

  std::vector<Assignment> assignments() const;
};

DrawCollection run_sampler(const SynthesisInput& in, const SynthesisConfig& config,
                           Variant variant, const SamplerOptions& options = {});

/// Monte Carlo predictive for one series at horizon s past the window end.
/// m and s2 are the J agent moments for the target (s2 already inflated).
ForecastDistribution predictive_simulate(Rng& rng, const DrawCollection& draws, std::size_t i,
                                         int horizon, std::span<const double> m,
                                         std::span<const double> s2, std::size_t n_draws);

}  // namespace mbps
