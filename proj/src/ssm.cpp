#include "mbps/ssm.hpp"

#include <cmath>
#include <string>

#include "mbps/error.hpp"

namespace mbps {

namespace {

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

void check_psd(const Eigen::MatrixXd& c, std::size_t t) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, c.diagonal().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NumericalError("forward_filter: posterior covariance lost positive "
                         "semi-definiteness at step " + std::to_string(t + 1));
}

}  // namespace

FilterResult forward_filter(const GaussianState& prior, std::span<const PseudoObservation> obs,
                            double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("forward_filter: delta must be in (0, 1]");
  const Eigen::Index p = prior.mean.size();
  if (prior.cov.rows() != p || prior.cov.cols() != p)
    throw DomainError("forward_filter: prior covariance dimension mismatch");

  FilterResult out;
  out.filtered.reserve(obs.size());
  out.predicted.reserve(obs.size());
  out.forecast_mean.reserve(obs.size());
  out.forecast_cov.reserve(obs.size());

  Eigen::VectorXd m = prior.mean;
  Eigen::MatrixXd C = prior.cov;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    const auto& o = obs[t];
    const Eigen::Index nk = o.rows();
    if (o.F.rows() != nk || o.precision.size() != nk || (nk > 0 && o.F.cols() != p))
      throw DomainError("forward_filter: observation dimensions inconsistent at step " +
                        std::to_string(t + 1));
    Eigen::VectorXd a = m;
    Eigen::MatrixXd R = C / delta;
    out.predicted.push_back({a, R});

    if (nk == 0) {
      out.forecast_mean.emplace_back();
      out.forecast_cov.emplace_back();
      out.filtered.push_back({a, R});
      m = std::move(a);
      C = std::move(R);
      continue;
    }
    if ((o.precision.array() <= 0.0).any())
      throw DomainError("forward_filter: observation precisions must be positive");

    const Eigen::MatrixXd RFt = R * o.F.transpose();
    Eigen::VectorXd g = o.F * a;
    Eigen::MatrixXd Q = o.F * RFt;
    Q.diagonal() += o.precision.cwiseInverse();
    symmetrize(Q);

    if (nk > p) {
      // More rows than states: update through the p x p information matrix
      // R^{-1} + F' Omega F, which stays well conditioned as precisions grow.
      Eigen::LLT<Eigen::MatrixXd> rf(R);
      if (rf.info() != Eigen::Success)
        throw NumericalError("forward_filter: prior covariance not positive definite at step " +
                             std::to_string(t + 1));
      const Eigen::MatrixXd WF = o.precision.asDiagonal() * o.F;
      Eigen::MatrixXd P = rf.solve(Eigen::MatrixXd::Identity(p, p));
      P += o.F.transpose() * WF;
      symmetrize(P);
      Eigen::LLT<Eigen::MatrixXd> pf(P);
      if (pf.info() != Eigen::Success)
        throw NumericalError("forward_filter: information matrix not positive definite at step " +
                             std::to_string(t + 1));
      m = a + pf.solve(WF.transpose() * (o.d - g));
      C = pf.solve(Eigen::MatrixXd::Identity(p, p));
    } else {
      Eigen::LDLT<Eigen::MatrixXd> qf(Q);
      if (qf.info() != Eigen::Success)
        throw NumericalError("forward_filter: forecast covariance not factorisable at step " +
                             std::to_string(t + 1));
      // A' = Q^{-1} F R
      const Eigen::MatrixXd At = qf.solve(RFt.transpose());
      m = a + At.transpose() * (o.d - g);
      C = R - RFt * At;
    }
    symmetrize(C);
    check_psd(C, t);

    out.forecast_mean.push_back(std::move(g));
    out.forecast_cov.push_back(std::move(Q));
    out.filtered.push_back({m, C});
  }
  return out;
}

Eigen::VectorXd mvn_draw(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::Index p = mean.size();
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = rng.normal();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return mean + llt.matrixL() * z;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return mean + es.eigenvectors() * sd.cwiseProduct(z);
}

std::vector<Eigen::VectorXd> backward_sample(Rng& rng, const FilterResult& filt, double delta) {
  const std::size_t T = filt.filtered.size();
  if (T == 0) throw DomainError("backward_sample: empty filtered sequence");
  std::vector<Eigen::VectorXd> theta(T);
  theta[T - 1] = mvn_draw(rng, filt.filtered[T - 1].mean, filt.filtered[T - 1].cov);
  for (std::size_t t = T - 1; t-- > 0;) {
    Eigen::VectorXd mean =
        filt.filtered[t].mean + delta * (theta[t + 1] - filt.predicted[t + 1].mean);
    if (delta == 1.0)
      theta[t] = std::move(mean);
    else
      theta[t] = mvn_draw(rng, mean, (1.0 - delta) * filt.filtered[t].cov);
  }
  return theta;
}

std::vector<GammaState> beta_gamma_forward(std::span<const ResidualSum> sums, double beta,
                                           const GammaState& prior) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("beta_gamma: beta must be in (0, 1]");
  if (prior.shape < 0.0 || prior.rate < 0.0)
    throw DomainError("beta_gamma: prior shape and rate must be non-negative");
  std::vector<GammaState> out;
  out.reserve(sums.size());
  GammaState s = prior;
  for (const auto& r : sums) {
    if (r.count < 0.0 || r.sum_sq < 0.0)
      throw DomainError("beta_gamma: residual sums must be non-negative");
    s.shape = beta * s.shape + r.count;
    s.rate = beta * s.rate + r.sum_sq;
    out.push_back(s);
  }
  return out;
}

std::vector<double> beta_gamma_ffbs(Rng& rng, std::span<const ResidualSum> sums, double beta,
                                    const GammaState& prior, PrecisionBackward form,
                                    std::vector<double>* increments) {
  const auto st = beta_gamma_forward(sums, beta, prior);
  const std::size_t T = st.size();
  std::vector<double> phi(T);
  if (increments) increments->assign(T > 0 ? T - 1 : 0, 0.0);
  if (T == 0) return phi;
  auto degenerate = [](const GammaState& g) { return !(g.shape > 0.0) || !(g.rate > 0.0); };
  if (degenerate(st[T - 1]))
    throw NumericalError("beta_gamma: degenerate gamma state (zero shape or rate)");
  phi[T - 1] = std::max(1e-12, rng.gamma(0.5 * st[T - 1].shape, 0.5 * st[T - 1].rate));
  const double carry = form == PrecisionBackward::discounted ? beta : 1.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    if (degenerate(st[t]))
      throw NumericalError("beta_gamma: degenerate gamma state at step " + std::to_string(t + 1));
    const double shape = 0.5 * (1.0 - beta) * st[t].shape;
    const double e = shape > 0.0 ? rng.gamma(shape, 0.5 * st[t].rate) : 0.0;
    if (increments) (*increments)[t] = e;
    phi[t] = std::max(1e-12, carry * phi[t + 1] + e);
  }
  return phi;
}

}  // namespace mbps
