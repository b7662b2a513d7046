#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mbps/rng.hpp"

namespace mbps {

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Stacked pseudo-observations at one time: d = F theta + noise with
/// diagonal noise precision. Zero rows means no data at that time.
struct PseudoObservation {
  Eigen::VectorXd d;
  Eigen::MatrixXd F;  // rows x state dim
  Eigen::VectorXd precision;

  Eigen::Index rows() const noexcept { return d.size(); }
};

struct FilterResult {
  std::vector<GaussianState> filtered;   // (m_t, C_t), t = 1..T
  std::vector<GaussianState> predicted;  // (a_t, R_t)
  std::vector<Eigen::VectorXd> forecast_mean;  // g_t
  std::vector<Eigen::MatrixXd> forecast_cov;   // Q_t
};

/// Discount-factor Kalman filter: R_t = C_{t-1} / delta, no explicit state
/// noise. Covariances are symmetrised after each update.
FilterResult forward_filter(const GaussianState& prior,
                            std::span<const PseudoObservation> obs, double delta);

/// Backward sampling pass for a discounted random walk: theta_T ~ N(m_T, C_T),
/// then theta_t ~ N(m_t + delta (theta_{t+1} - a_{t+1}), (1 - delta) C_t).
std::vector<Eigen::VectorXd> backward_sample(Rng& rng, const FilterResult& filt, double delta);

/// Draw from N(mean, cov). Falls back to an eigen-decomposition with negative
/// eigenvalues clipped when the Cholesky factorisation fails.
Eigen::VectorXd mvn_draw(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

/// Gamma filter state on a precision phi with phi ~ Ga(shape / 2, rate / 2).
struct GammaState {
  double shape = 1.0;
  double rate = 1.0;
};

/// Per-time sufficient statistics of intercept deviations for one cluster.
struct ResidualSum {
  double count = 0.0;   // members n_k
  double sum_sq = 0.0;  // sum of u^2 over members
};

enum class PrecisionBackward {
  /// phi_t = beta phi_{t+1} + e_t, the form that inverts the beta evolution.
  discounted,
  /// phi_t = phi_{t+1} + e_t, dropping the beta factor.
  undiscounted,
};

std::vector<GammaState> beta_gamma_forward(std::span<const ResidualSum> sums, double beta,
                                           const GammaState& prior);

/// Samples precisions phi_{1:T} with e_t ~ Ga((1 - beta) a_t / 2, b_t / 2).
std::vector<double> beta_gamma_ffbs(Rng& rng, std::span<const ResidualSum> sums, double beta,
                                    const GammaState& prior,
                                    PrecisionBackward form = PrecisionBackward::discounted,
                                    std::vector<double>* increments = nullptr);

}  // namespace mbps
