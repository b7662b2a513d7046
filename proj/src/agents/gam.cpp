#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/cardinal_b_spline.hpp>

#include "mbps/agents.hpp"

namespace mbps {

namespace {

constexpr double kRidge = 1e-8;  // keeps the penalised information positive definite
constexpr double kEtaMax = 30.0;

double poisson_deviance(std::span<const double> y, const Eigen::VectorXd& eta) {
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double mu = std::exp(std::min(eta[i], kEtaMax));
    d += (y[i] > 0.0 ? y[i] * std::log(y[i] / mu) : 0.0) - (y[i] - mu);
  }
  return 2.0 * d;
}

struct PirlsResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  double deviance = 0.0;
  double edf = 0.0;
  std::array<double, 2> edf_terms{};
  int iterations = 0;
  bool converged = false;
};

PirlsResult pirls(const Eigen::MatrixXd& X, std::span<const double> y, const Eigen::MatrixXd& P,
                  const Eigen::VectorXd* warm, std::size_t level_dim, const GamOptions& opt) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta(n);
  double pdev = std::numeric_limits<double>::infinity();
  if (warm) {
    beta = *warm;
    eta = X * beta;
    pdev = poisson_deviance(y, eta) + beta.dot(P * beta);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) eta[i] = std::log(y[i] + 0.1);
  }

  PirlsResult out;
  Eigen::VectorXd w(n);
  for (int it = 1; it <= opt.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) w[i] = std::exp(std::min(eta[i], kEtaMax));
    const Eigen::VectorXd z = eta + (yv - w).cwiseQuotient(w);
    const Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X + P;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return out;
    Eigen::VectorXd next = llt.solve(X.transpose() * w.cwiseProduct(z));
    Eigen::VectorXd eta_next = X * next;
    double pdev_next = poisson_deviance(y, eta_next) + next.dot(P * next);
    for (int half = 0; half < 40 && !(pdev_next <= pdev * (1.0 + 1e-12)) && std::isfinite(pdev);
         ++half) {
      next = 0.5 * (next + beta);
      eta_next = X * next;
      pdev_next = poisson_deviance(y, eta_next) + next.dot(P * next);
    }
    const bool done = std::abs(pdev_next - pdev) <= opt.tol * (std::abs(pdev_next) + 0.1);
    beta = next;
    eta = eta_next;
    pdev = pdev_next;
    out.iterations = it;
    if (done) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) return out;

  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::exp(std::min(eta[i], kEtaMax));
  const Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
  Eigen::LLT<Eigen::MatrixXd> llt(XtWX + P);
  out.cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd F = out.cov * XtWX;
  out.edf = F.trace();
  out.edf_terms[0] = F.diagonal().segment(1, level_dim).sum();
  out.edf_terms[1] = F.diagonal().tail(p - 1 - level_dim).sum();
  out.beta = beta;
  out.deviance = poisson_deviance(y, eta);
  return out;
}

}  // namespace

SplineSmooth::SplineSmooth(std::span<const double> x, std::size_t n_basis) : n_basis_(n_basis) {
  if (n_basis < 4) throw DomainError("SplineSmooth: need at least 4 cubic basis functions");
  if (x.empty()) throw DomainError("SplineSmooth: no points");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  lo_ = *mn;
  hi_ = *mx;
  if (!(hi_ - lo_ > 1e-9 * std::max(1.0, std::abs(lo_)))) {
    lo_ -= 0.5;
    hi_ += 0.5;
  }
  h_ = (hi_ - lo_) / static_cast<double>(n_basis - 3);

  Eigen::VectorXd colsum = Eigen::VectorXd::Zero(n_basis);
  std::vector<double> row(n_basis);
  for (double v : x) {
    raw_row(v, row);
    for (std::size_t k = 0; k < n_basis; ++k) colsum[k] += row[k];
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(colsum);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n_basis, n_basis);
  null_space_ = Q.rightCols(n_basis - 1);
}

void SplineSmooth::raw_row(double x, std::span<double> out) const {
  using boost::math::cardinal_b_spline;
  using boost::math::cardinal_b_spline_prime;
  const double edge = std::clamp(x, lo_, hi_);
  const double dx = x - edge;
  for (std::size_t k = 0; k < n_basis_; ++k) {
    const double u = (edge - lo_) / h_ - (static_cast<double>(k) - 1.0);
    out[k] = cardinal_b_spline<3>(u);
    if (dx != 0.0) out[k] += dx * cardinal_b_spline_prime<3>(u) / h_;
  }
}

void SplineSmooth::basis_row(double x, std::span<double> out) const {
  std::vector<double> raw(n_basis_);
  raw_row(x, raw);
  const Eigen::Map<const Eigen::RowVectorXd> r(raw.data(), n_basis_);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), dim()) = r * null_space_;
}

Eigen::MatrixXd SplineSmooth::penalty() const {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_basis_ - 2, n_basis_);
  for (std::size_t k = 0; k + 2 < n_basis_; ++k) {
    D(k, k) = 1.0;
    D(k, k + 1) = -2.0;
    D(k, k + 2) = 1.0;
  }
  const Eigen::MatrixXd DZ = D * null_space_;
  return DZ.transpose() * DZ;
}

double SplineSmooth::eval(double x, const Eigen::Ref<const Eigen::VectorXd>& coef) const {
  std::vector<double> row(dim());
  basis_row(x, row);
  return Eigen::Map<const Eigen::VectorXd>(row.data(), dim()).dot(coef);
}

Eigen::VectorXd GamFit::design_row(double itilde, double time) const {
  Eigen::VectorXd row(1 + level.dim() + trend.dim());
  row[0] = 1.0;
  level.basis_row(itilde, {row.data() + 1, level.dim()});
  trend.basis_row(time, {row.data() + 1 + level.dim(), trend.dim()});
  return row;
}

double GamFit::smooth_level(double itilde) const {
  return level.eval(itilde, beta.segment(1, level.dim()));
}

double GamFit::smooth_trend(double time) const {
  return trend.eval(time, beta.tail(trend.dim()));
}

GamFit gam_fit(std::span<const double> y, std::span<const double> itilde,
               std::span<const double> time, const GamOptions& opt) {
  const std::size_t n = y.size();
  if (itilde.size() != n || time.size() != n) throw InputError("gam_fit: length mismatch");
  if (n < 4 * opt.n_basis)
    throw InputError("gam_fit: " + std::to_string(n) + " observations, need at least " +
                     std::to_string(4 * opt.n_basis));
  for (double v : y)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("gam_fit: counts must be non-negative");

  GamFit fit;
  fit.level = SplineSmooth(itilde, opt.n_basis);
  fit.trend = SplineSmooth(time, opt.n_basis);
  const std::size_t d1 = fit.level.dim(), d2 = fit.trend.dim(), p = 1 + d1 + d2;
  Eigen::MatrixXd X(n, p);
  for (std::size_t i = 0; i < n; ++i) X.row(i) = fit.design_row(itilde[i], time[i]).transpose();
  const Eigen::MatrixXd S1 = fit.level.penalty(), S2 = fit.trend.penalty();

  auto penalty = [&](const std::array<double, 2>& lam) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
    P.block(1, 1, d1, d1) = lam[0] * S1 + kRidge * Eigen::MatrixXd::Identity(d1, d1);
    P.block(1 + d1, 1 + d1, d2, d2) = lam[1] * S2 + kRidge * Eigen::MatrixXd::Identity(d2, d2);
    return P;
  };
  auto gcv = [&](const PirlsResult& r) {
    const double dn = static_cast<double>(n);
    return dn * r.deviance / ((dn - r.edf) * (dn - r.edf));
  };

  std::array<double, 2> lam{};
  PirlsResult best;
  if (opt.lambda) {
    lam = *opt.lambda;
    best = pirls(X, y, penalty(lam), nullptr, d1, opt);
  } else {
    std::vector<double> grid(opt.grid_size);
    for (std::size_t g = 0; g < grid.size(); ++g)
      grid[g] = std::pow(10.0, opt.log10_lambda_lo + (opt.log10_lambda_hi - opt.log10_lambda_lo) *
                                                         static_cast<double>(g) /
                                                         static_cast<double>(grid.size() - 1));
    std::array<std::size_t, 2> at{grid.size() / 2, grid.size() / 2};
    double best_score = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 4; ++round) {
      bool moved = false;
      for (int c = 0; c < 2; ++c) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
          auto trial = at;
          trial[c] = g;
          if (round > 0 && trial == at) continue;
          const Eigen::VectorXd* warm = best.converged ? &best.beta : nullptr;
          auto r = pirls(X, y, penalty({grid[trial[0]], grid[trial[1]]}), warm, d1, opt);
          if (!r.converged) continue;
          const double score = gcv(r);
          if (score < best_score) {
            best_score = score;
            best = std::move(r);
            moved = moved || trial != at;
            at = trial;
          }
        }
      }
      if (!moved && round > 0) break;
    }
    lam = {grid[at[0]], grid[at[1]]};
  }
  if (!best.converged)
    throw NumericalError("gam_fit: penalised IRLS did not converge within " +
                         std::to_string(opt.max_iter) + " iterations");
  fit.beta = best.beta;
  fit.cov = best.cov;
  fit.lambda = lam;
  fit.edf = best.edf;
  fit.edf_terms = best.edf_terms;
  fit.deviance = best.deviance;
  fit.gcv = gcv(best);
  fit.iterations = best.iterations;
  return fit;
}

}  // namespace mbps
