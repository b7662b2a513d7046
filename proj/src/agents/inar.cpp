#include <cmath>
#include <limits>
#include <string>

#include "mbps/agents.hpp"

namespace mbps {

namespace {

constexpr double kEtaMax = 50.0;

double loglik(const Eigen::VectorXd& eta, std::span<const double> y) {
  double l = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta[i] > kEtaMax) return -std::numeric_limits<double>::infinity();
    l += y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1.0);
  }
  return l;
}

}  // namespace

PoissonGlmFit poisson_glm_fit(const Eigen::MatrixXd& X, std::span<const double> y,
                              int max_iter) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (static_cast<Eigen::Index>(y.size()) != n) throw InputError("poisson_glm_fit: length mismatch");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

  PoissonGlmFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  if ((X.col(0).array() == 1.0).all()) fit.coef[0] = std::log(yv.mean() + 0.5);
  Eigen::VectorXd eta = X * fit.coef;
  fit.loglik = loglik(eta, y);

  Eigen::MatrixXd info(p, p);
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd mu = eta.array().exp().matrix();
    fit.score = X.transpose() * (yv - mu);
    info = X.transpose() * mu.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const double scale = info.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * scale))
      throw DomainError("poisson_glm_fit: information matrix is singular; the covariates do "
                        "not identify the coefficients");
    fit.iterations = it;
    if (fit.score.cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, yv.sum())) break;
    Eigen::VectorXd step = ldlt.solve(fit.score);
    double l = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd next, eta_next;
    for (int half = 0; half < 60; ++half) {
      next = fit.coef + step;
      eta_next = X * next;
      l = loglik(eta_next, y);
      if (l >= fit.loglik - 1e-12 * std::abs(fit.loglik)) break;
      step *= 0.5;
    }
    if (!(l >= fit.loglik - 1e-12 * std::abs(fit.loglik))) break;
    const bool small = step.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + fit.coef.cwiseAbs().maxCoeff());
    fit.coef = next;
    eta = eta_next;
    fit.loglik = l;
    if (small) break;
  }
  const Eigen::VectorXd mu = eta.array().exp().matrix();
  fit.score = X.transpose() * (yv - mu);
  info = X.transpose() * mu.asDiagonal() * X;
  fit.cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return fit;
}

PoissonGlmFit inar_fit(std::span<const double> y, const Eigen::MatrixXd& X) {
  const Eigen::Index T = static_cast<Eigen::Index>(y.size());
  if (X.rows() != T) throw InputError("inar_fit: covariate rows do not match the series");
  const Eigen::Index q = X.cols() + 1;
  if (T - 1 < 5 * q)
    throw InputError("inar_fit: " + std::to_string(T - 1) + " transitions, need at least " +
                     std::to_string(5 * q));
  Eigen::MatrixXd D(T - 1, q);
  D.leftCols(q - 1) = X.bottomRows(T - 1);
  for (Eigen::Index t = 1; t < T; ++t) D(t - 1, q - 1) = y[t - 1];
  return poisson_glm_fit(D, y.subspan(1));
}

}  // namespace mbps
