#include <algorithm>
#include <array>
#include <cmath>

#include "mbps/agents.hpp"
#include "mbps/kernels.hpp"
#include "mbps/synthesis.hpp"

namespace mbps {

namespace {

Assignment initial_groups(const FmprData& data, std::size_t K) {
  std::vector<std::array<double, 2>> pts;
  for (const auto& y : data.y) {
    const auto prof = series_profile(y);
    pts.push_back({std::isfinite(prof.log_mean) ? prof.log_mean : -1.0, prof.mean_abs_change});
  }
  return kmeans_partition(pts, std::min<std::size_t>({8, K, data.y.size()}));
}

}  // namespace

FmprDraws fmpr_fit(const FmprData& data, const FmprConfig& cfg) {
  const std::size_t n = data.y.size();
  if (n == 0) throw InputError("fmpr_fit: empty panel");
  if (data.X.size() != n) throw InputError("fmpr_fit: one design matrix per series required");
  const auto p = static_cast<std::size_t>(data.X[0].cols());
  for (std::size_t i = 0; i < n; ++i) {
    if (data.X[i].rows() != static_cast<Eigen::Index>(data.y[i].size()) ||
        static_cast<std::size_t>(data.X[i].cols()) != p)
      throw InputError("fmpr_fit: design matrix shape mismatch for series " + std::to_string(i));
    if (data.y[i].empty()) throw InputError("fmpr_fit: empty series " + std::to_string(i));
  }
  if (!(cfg.a0 > 0.0) || !(cfg.prior_var > 0.0) || cfg.thin == 0 || cfg.n_iter == 0)
    throw ConfigError("fmpr_fit: a0 and prior_var must be positive, thin and n_iter >= 1");
  const std::size_t K = cfg.K == 0 ? n : cfg.K;
  const double r = cfg.r, log_r = std::log(r);
  const auto& kt = kernels::active();

  Rng rng(Rng::derive(cfg.seed, {0x464d5052}));
  FmprDraws out;
  out.K = K;
  out.p = p;

  Assignment z = initial_groups(data, K);
  std::vector<double> pi(K, 1.0 / static_cast<double>(K));
  std::vector<Eigen::VectorXd> beta(K, Eigen::VectorXd::Zero(p));
  {
    double total = 0.0, count = 0.0;
    for (const auto& y : data.y)
      for (double v : y) {
        total += v;
        count += 1.0;
      }
    for (auto& b : beta) b[0] = std::log(total / count + 0.5);
  }

  std::vector<std::vector<double>> omega(n);
  for (std::size_t i = 0; i < n; ++i) omega[i].resize(data.y[i].size());
  std::vector<double> eta, lw(K);
  const Eigen::MatrixXd prior_prec = Eigen::MatrixXd::Identity(p, p) / cfg.prior_var;

  const std::size_t scans = cfg.n_burn + cfg.n_iter * cfg.thin;
  for (std::size_t scan = 0; scan < scans; ++scan) {
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd e = data.X[i] * beta[z[i]];
      for (std::size_t t = 0; t < omega[i].size(); ++t)
        omega[i][t] = sample_omega(rng, data.y[i][t], e[t], r, cfg.pg);
    }
    for (std::size_t k = 0; k < K; ++k) {
      Eigen::MatrixXd P = prior_prec;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(z[i]) != k) continue;
        const auto& X = data.X[i];
        const Eigen::Map<const Eigen::VectorXd> w(omega[i].data(), X.rows());
        Eigen::VectorXd kappa(X.rows());
        for (Eigen::Index t = 0; t < X.rows(); ++t)
          kappa[t] = 0.5 * (data.y[i][t] - r) + w[t] * log_r;
        P.noalias() += X.transpose() * w.asDiagonal() * X;
        b.noalias() += X.transpose() * kappa;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(P);
      if (llt.info() != Eigen::Success)
        throw NumericalError("fmpr_fit: coefficient precision not positive definite");
      const Eigen::VectorXd mean = llt.solve(b);
      Eigen::VectorXd eps(p);
      for (auto& v : eps) v = rng.normal();
      beta[k] = mean + llt.matrixU().solve(eps);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& y = data.y[i];
      eta.resize(y.size());
      for (std::size_t k = 0; k < K; ++k) {
        if (!(pi[k] > 0.0)) {
          lw[k] = -std::numeric_limits<double>::infinity();
          continue;
        }
        Eigen::Map<Eigen::VectorXd>(eta.data(), y.size()) = data.X[i] * beta[k];
        lw[k] = std::log(pi[k]) + kt.nb_kernel_sum(y.data(), eta.data(), y.size(), r);
      }
      z[i] = static_cast<int>(rng.categorical_log(lw));
    }
    pi = sample_mixture_weights(rng, z, cfg.a0, K);

    if (scan >= cfg.n_burn && (scan - cfg.n_burn + 1) % cfg.thin == 0) {
      std::vector<double> flat(K * p);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < p; ++j) flat[k * p + j] = beta[k][j];
      out.beta.push_back(std::move(flat));
      out.z.push_back(z);
      out.pi.push_back(pi);
    }
  }
  return out;
}

}  // namespace mbps
