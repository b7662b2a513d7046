#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mbps/error.hpp"
#include "mbps/ssm.hpp"
#include "support/oracles.hpp"

using namespace mbps;

namespace {

PseudoObservation scalar_obs(double d, double prec) {
  PseudoObservation o;
  o.d = Eigen::VectorXd::Constant(1, d);
  o.F = Eigen::MatrixXd::Ones(1, 1);
  o.precision = Eigen::VectorXd::Constant(1, prec);
  return o;
}

}  // namespace

TEST_CASE("conjugate scalar update") {
  GaussianState prior{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  std::vector<PseudoObservation> obs{scalar_obs(1.0, 1.0)};
  const auto f = forward_filter(prior, obs, 1.0);
  CHECK(f.filtered[0].mean[0] == doctest::Approx(0.5));
  CHECK(f.filtered[0].cov(0, 0) == doctest::Approx(0.5));
  CHECK(f.forecast_cov[0](0, 0) == doctest::Approx(2.0));
}

TEST_CASE("discount inflates the prior covariance") {
  GaussianState prior{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
  std::vector<PseudoObservation> obs(1);
  obs[0].d.resize(0);
  obs[0].F.resize(0, 3);
  obs[0].precision.resize(0);
  const auto f = forward_filter(prior, obs, 0.5);
  CHECK((f.predicted[0].cov - 2.0 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK((f.filtered[0].cov - f.predicted[0].cov).norm() == 0.0);
}

TEST_CASE("very precise observations give the least-squares solution") {
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd;
  const int p = 3, n = 8;
  PseudoObservation o;
  o.F = Eigen::MatrixXd(n, p);
  o.d = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) o.F(i, j) = nd(g);
    o.d[i] = nd(g);
  }
  o.precision = Eigen::VectorXd::Constant(n, 1e12);
  GaussianState prior{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p)};
  std::vector<PseudoObservation> obs{o};
  const auto f = forward_filter(prior, obs, 0.9);
  const Eigen::VectorXd ls = o.F.colPivHouseholderQr().solve(o.d);
  CHECK((f.filtered[0].mean - ls).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("undiscounted filter equals the information-form Kalman filter") {
  std::mt19937_64 g(17);
  for (int rep = 0; rep < 10; ++rep) {
    const int p = 1 + rep % 4;
    auto sys = oracle::random_system(g, p, 10, 30);
    const auto f = forward_filter(sys.prior, sys.obs, 1.0);
    const auto ref = oracle::information_filter(sys);
    for (std::size_t t = 0; t < sys.obs.size(); ++t) {
      CHECK((f.filtered[t].mean - ref[t].mean).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((f.filtered[t].cov - ref[t].cov).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((f.filtered[t].cov - f.filtered[t].cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("filter rejects bad inputs") {
  GaussianState prior{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  std::vector<PseudoObservation> obs{scalar_obs(1.0, 1.0)};
  CHECK_THROWS_AS(forward_filter(prior, obs, 0.0), DomainError);
  CHECK_THROWS_AS(forward_filter(prior, obs, 1.5), DomainError);
  obs[0].precision[0] = -1.0;
  CHECK_THROWS_AS(forward_filter(prior, obs, 1.0), DomainError);
}

TEST_CASE("backward pass at delta one is deterministic given the last state") {
  std::mt19937_64 g(5);
  auto sys = oracle::random_system(g, 2, 4, 6);
  const auto f = forward_filter(sys.prior, sys.obs, 1.0);
  Rng rng(9);
  const auto th = backward_sample(rng, f, 1.0);
  for (std::size_t t = 0; t + 1 < th.size(); ++t) {
    const Eigen::VectorXd expect = f.filtered[t].mean + (th[t + 1] - f.predicted[t + 1].mean);
    CHECK((th[t] - expect).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("single-step backward pass draws from the filtered state") {
  GaussianState prior{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  std::vector<PseudoObservation> obs{scalar_obs(1.0, 1.0)};
  const auto f = forward_filter(prior, obs, 0.8);
  Rng rng(2);
  const int n = 100000;
  double s = 0;
  for (int k = 0; k < n; ++k) s += backward_sample(rng, f, 0.8)[0][0];
  const double m1 = f.filtered[0].mean[0];
  const double se = std::sqrt(f.filtered[0].cov(0, 0) / n);
  CHECK(std::abs(s / n - m1) < 4 * se);
}

TEST_CASE("smoothed moments match the joint-Gaussian oracle") {
  std::mt19937_64 g(29);
  const double delta = 0.9;
  auto sys = oracle::random_system(g, 3, 3, 20);
  const auto ref = oracle::joint_smoother(sys, delta);
  const auto f = forward_filter(sys.prior, sys.obs, delta);

  // deterministic smoother recursion agrees with the joint conditioning
  const std::size_t T = ref.size();
  Eigen::VectorXd s = f.filtered[T - 1].mean;
  Eigen::MatrixXd S = f.filtered[T - 1].cov;
  for (std::size_t t = T - 1; t-- > 0;) {
    s = f.filtered[t].mean + delta * (s - f.predicted[t + 1].mean);
    S = (1 - delta) * f.filtered[t].cov + delta * delta * S;
    CHECK((s - ref[t].mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((S - ref[t].cov).cwiseAbs().maxCoeff() < 1e-8);
  }

  Rng rng(31);
  const int passes = 4000;
  std::vector<Eigen::VectorXd> sum(T, Eigen::VectorXd::Zero(3)), sq(T, Eigen::VectorXd::Zero(3));
  for (int k = 0; k < passes; ++k) {
    const auto th = backward_sample(rng, f, delta);
    for (std::size_t t = 0; t < T; ++t) {
      sum[t] += th[t];
      sq[t] += th[t].cwiseProduct(th[t]);
    }
  }
  for (std::size_t t = 0; t < T; ++t)
    for (int j = 0; j < 3; ++j) {
      const double v = ref[t].cov(j, j);
      const double mean = sum[t][j] / passes;
      const double var = sq[t][j] / passes - mean * mean;
      CHECK(std::abs(mean - ref[t].mean[j]) < 4 * std::sqrt(v / passes));
      CHECK(std::abs(var - v) < 4 * v * std::sqrt(2.0 / passes));
    }
}

TEST_CASE("beta-gamma forward recursion") {
  std::vector<ResidualSum> sums(5, {4.0, 3.0});
  const auto st = beta_gamma_forward(sums, 1.0, {2.0, 1.0});
  CHECK(st.back().shape == doctest::Approx(2.0 + 5 * 4.0));
  CHECK(st.back().rate == doctest::Approx(1.0 + 5 * 3.0));
  const auto d = beta_gamma_forward(sums, 0.95, {2.0, 1.0});
  CHECK(d[0].shape == doctest::Approx(5.9));
  CHECK(d[0].rate == doctest::Approx(0.95 + 3.0));
}

TEST_CASE("beta-gamma backward increments") {
  std::vector<ResidualSum> sums;
  for (int t = 0; t < 30; ++t) sums.push_back({3.0, 0.2 + 0.1 * (t % 4)});
  Rng rng(4);
  std::vector<double> e;
  for (int rep = 0; rep < 50; ++rep) {
    const auto raw = beta_gamma_ffbs(rng, sums, 0.9, {1.0, 1.0}, PrecisionBackward::undiscounted, &e);
    for (std::size_t t = 0; t + 1 < raw.size(); ++t) {
      CHECK(e[t] >= 0.0);
      CHECK(raw[t] >= raw[t + 1]);
    }
    const auto phi = beta_gamma_ffbs(rng, sums, 0.9, {1.0, 1.0}, PrecisionBackward::discounted, &e);
    for (std::size_t t = 0; t + 1 < phi.size(); ++t) {
      CHECK(e[t] >= 0.0);
      CHECK(phi[t] == doctest::Approx(0.9 * phi[t + 1] + e[t]).epsilon(1e-14));
    }
  }
  const auto flat = beta_gamma_ffbs(rng, sums, 1.0, {1.0, 1.0});
  for (double v : flat) CHECK(v == flat.back());
}

TEST_CASE("discounted precision draws have the filtered mean marginally") {
  // With phi_t = beta phi_{t+1} + e_t, phi_{t+1} ~ Ga(a_{t+1}/2, b_{t+1}/2) and
  // the beta evolution, E[phi_t] equals the filtered mean a_t / b_t when no
  // data arrive after t.
  std::vector<ResidualSum> sums{{5.0, 2.0}, {0.0, 0.0}, {0.0, 0.0}};
  const auto st = beta_gamma_forward(sums, 0.8, {1.0, 1.0});
  Rng rng(8);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double v = beta_gamma_ffbs(rng, sums, 0.8, {1.0, 1.0})[0];
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean - st[0].shape / st[0].rate) < 4 * sd / std::sqrt(n));
}

TEST_CASE("beta-gamma degenerate state") {
  std::vector<ResidualSum> sums{{0.0, 0.0}};
  Rng rng(1);
  CHECK_THROWS_AS(beta_gamma_ffbs(rng, sums, 0.9, {0.0, 0.0}), NumericalError);
}
