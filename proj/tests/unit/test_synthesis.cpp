#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "mbps/error.hpp"
#include "mbps/synthesis.hpp"
#include "support/oracles.hpp"

using namespace mbps;

namespace {

SynthesisInput toy_input(std::size_t n, std::size_t T, std::size_t J, std::uint64_t seed,
                         double level = 30.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  SynthesisInput in;
  in.n = n;
  in.T = T;
  in.J = J;
  in.y.resize(n * T);
  in.m.resize(n * J * T);
  in.s2.resize(n * J * T);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < T; ++t) {
      const double base = std::log(level) + 0.3 * nd(g);
      in.y[i * T + t] = std::round(std::exp(base));
      for (std::size_t j = 0; j < J; ++j) {
        in.m[in.at(i, j, t)] = base + 0.1 * nd(g);
        in.s2[in.at(i, j, t)] = 0.02 + 0.01 * j;
      }
    }
  return in;
}

double poisson_lpmf(double y, double lambda) {
  return y * std::log(lambda) - lambda - std::lgamma(y + 1);
}

}  // namespace

TEST_CASE("negative-binomial approximation of the Poisson mass") {
  const double r = 1000;
  const double psi = std::log(5.0 / r);
  CHECK(std::abs(nb_log_pmf(3, psi, r) - poisson_lpmf(3, 5)) < 0.01);
  CHECK(nb_log_pmf(0, psi, r) == doctest::Approx(-r * std::log1p(std::exp(psi))).epsilon(1e-14));
  double total = 0;
  for (int y = 0; y <= 50; ++y) total += std::exp(nb_log_pmf(y, psi, r));
  CHECK(std::abs(total - 1.0) < 1e-8);
  // Within one SD the gap stays below 0.05 for every mean up to 50.
  // Further out it grows with (y - lambda)^2 / r; the frozen maxima over
  // +-6 SD were computed independently from the NB(r, r / (r + lambda)) and
  // Poisson mass functions.
  const std::vector<std::pair<double, double>> six_sd{
      {0.5, 0.0041}, {5.0, 0.0748}, {20.0, 0.3061}, {50.0, 0.8474}};
  for (const auto& [lambda, frozen] : six_sd) {
    const double sd = std::sqrt(lambda);
    double within_one = 0, within_six = 0;
    for (int y = std::max(0, int(std::ceil(lambda - 6 * sd))); y <= lambda + 6 * sd; ++y) {
      const double gap = std::abs(nb_log_pmf(y, std::log(lambda / r), r) - poisson_lpmf(y, lambda));
      within_six = std::max(within_six, gap);
      if (std::abs(y - lambda) <= sd) within_one = std::max(within_one, gap);
    }
    CHECK(within_one < 0.05);
    CHECK(within_six == doctest::Approx(frozen).epsilon(2e-3));
  }
  CHECK(poisson_log_pmf(3, std::log(5.0)) == doctest::Approx(poisson_lpmf(3, 5)));
}

TEST_CASE("omega draws at zero tilt") {
  Rng rng(3);
  const double r = 1000;
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double w = sample_omega(rng, 0, std::log(r), r);
    CHECK(w > 0);
    s += w;
    s2 += w * w;
  }
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean - r / 4) < 4 * sd / std::sqrt(n));
  CHECK(sd == doctest::Approx(std::sqrt(pg_variance(r, 0))).epsilon(0.03));
}

TEST_CASE("factor conditional with zero loadings is the prior") {
  Rng rng(5);
  const std::vector<double> theta{0.4, 0.0, 0.0};
  const std::vector<double> m{1.0, -2.0}, s2{0.5, 2.0};
  std::vector<double> out(2);
  const int n = 40000;
  std::vector<double> sum(2, 0), sq(2, 0);
  for (int k = 0; k < n; ++k) {
    sample_factors(rng, 1200, 300, theta, m, s2, 0.0, 1000, out);
    for (int j = 0; j < 2; ++j) {
      sum[j] += out[j];
      sq[j] += out[j] * out[j];
    }
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / n;
    CHECK(std::abs(mean - m[j]) < 4 * std::sqrt(s2[j] / n));
    CHECK(std::abs(sq[j] / n - mean * mean - s2[j]) < 4 * s2[j] * std::sqrt(2.0 / n));
  }
}

TEST_CASE("factor conditional in the scalar conjugate case") {
  // One pseudo-observation log r = f + e, e ~ N(0, 1), prior f ~ N(0, 1):
  // posterior N(log r / 2, 1/2).
  const std::vector<double> theta{0.0, 1.0}, m{0.0}, s2{1.0};
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  factor_posterior(1000, 1.0, theta, m, s2, 0.0, 1000, mean, cov);
  CHECK(mean[0] == doctest::Approx(std::log(1000.0) / 2));
  CHECK(cov(0, 0) == doctest::Approx(0.5));

  Rng rng(6);
  std::vector<double> out(1);
  const int n = 40000;
  double s = 0, q = 0;
  for (int k = 0; k < n; ++k) {
    sample_factors(rng, 1000, 1.0, theta, m, s2, 0.0, 1000, out);
    s += out[0];
    q += out[0] * out[0];
  }
  CHECK(std::abs(s / n - std::log(1000.0) / 2) < 4 * std::sqrt(0.5 / n));
  CHECK(std::abs(q / n - (s / n) * (s / n) - 0.5) < 4 * 0.5 * std::sqrt(2.0 / n));
}

TEST_CASE("rank-one factor draw matches the direct posterior") {
  const std::vector<double> theta{0.2, 0.7, -0.3, 0.5};
  const std::vector<double> m{3.1, 2.9, 3.3}, s2{0.04, 0.09, 0.02};
  const double y = 1030, omega = 260, u = 0.05, r = 1000;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  factor_posterior(y, omega, theta, m, s2, u, r, mean, cov);

  // information only added: S - S_hat is positive semi-definite
  Eigen::MatrixXd S = Eigen::VectorXd::Map(s2.data(), 3).asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S - cov);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);

  Rng rng(7);
  std::vector<double> out(3);
  const int n = 50000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(3, 3);
  for (int k = 0; k < n; ++k) {
    sample_factors(rng, y, omega, theta, m, s2, u, r, out);
    Eigen::Vector3d v(out[0], out[1], out[2]);
    sum += v;
    sq += v * v.transpose();
  }
  const Eigen::VectorXd emean = sum / n;
  const Eigen::MatrixXd ecov = sq / n - emean * emean.transpose();
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(emean[j] - mean[j]) < 4 * std::sqrt(cov(j, j) / n));
    CHECK(std::abs(ecov(j, j) - cov(j, j)) < 4 * cov(j, j) * std::sqrt(2.0 / n));
  }
}

TEST_CASE("assignment weights and exhaustive assignment frequencies") {
  // n = 3, K = 2, T = 2 with every other block fixed. The oracle evaluates the
  // categorical probabilities directly from nb_log_pmf.
  const double r = 1000;
  auto in = toy_input(3, 2, 1, 11, 20.0);
  SynthesisConfig cfg;
  cfg.K = 2;
  SamplerOptions opt;
  opt.init_z = Assignment{0, 1, 0};
  auto s = initial_state(in, cfg, Variant::mbps, opt);
  for (std::size_t t = 0; t < 2; ++t) {
    s.th(0, 0, t) = 0.0;
    s.th(0, 1, t) = 1.0;
    s.th(1, 0, t) = 0.25;
    s.th(1, 1, t) = 0.95;
  }
  s.pi = {0.3, 0.7};
  std::vector<std::vector<double>> prob(3, std::vector<double>(2));
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> lw(2);
    for (int k = 0; k < 2; ++k) {
      lw[k] = std::log(s.pi[k]);
      for (std::size_t t = 0; t < 2; ++t) {
        const double eta = s.th(k, 0, t) + s.th(k, 1, t) * s.fac(i, 0, t);
        lw[k] += nb_log_pmf(in.count(i, t), eta - std::log(r), r);
      }
    }
    const double mx = std::max(lw[0], lw[1]);
    const double z = std::exp(lw[0] - mx) + std::exp(lw[1] - mx);
    for (int k = 0; k < 2; ++k) prob[i][k] = std::exp(lw[k] - mx) / z;

    // kernel path omits the y-only gamma terms, which cancel on normalising
    const auto w = assignment_log_weights(in, s, i, r);
    const double mw = std::max(w[0], w[1]);
    const double zw = std::exp(w[0] - mw) + std::exp(w[1] - mw);
    CHECK(std::exp(w[1] - mw) / zw == doctest::Approx(prob[i][1]).epsilon(1e-10));
  }

  Rng rng(12);
  const int scans = 100000;
  std::vector<int> hits(3, 0);
  for (int k = 0; k < scans; ++k) {
    sample_assignments(rng, in, s, r);
    for (int i = 0; i < 3; ++i) hits[i] += s.z[i] == 1;
  }
  for (int i = 0; i < 3; ++i) {
    const double p = prob[i][1];
    CHECK(std::abs(double(hits[i]) / scans - p) < 4 * std::sqrt(p * (1 - p) / scans) + 1e-12);
  }

  s.pi = {1.0, 0.0};
  for (int k = 0; k < 100; ++k) {
    sample_assignments(rng, in, s, r);
    for (int zi : s.z) CHECK(zi == 0);
  }
}

TEST_CASE("two-cluster softmax") {
  Rng rng(13);
  std::vector<double> lw{0.0, std::log(9.0)};
  const int n = 100000;
  int c = 0;
  for (int k = 0; k < n; ++k) c += rng.categorical_log(lw) == 1;
  CHECK(std::abs(double(c) / n - 0.9) < 4 * std::sqrt(0.09 / n));
}

TEST_CASE("mixture weights") {
  Rng rng(14);
  const std::vector<int> one{0, 0, 0};
  CHECK(sample_mixture_weights(rng, one, 0.01, 1) == std::vector<double>{1.0});
  const std::vector<int> z{0, 0, 1, 2, 2, 2};
  const double a0 = 0.5;
  const std::size_t K = 4;
  const int n = 40000;
  std::vector<double> sum(K, 0);
  for (int k = 0; k < n; ++k) {
    const auto p = sample_mixture_weights(rng, z, a0, K);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t c = 0; c < K; ++c) sum[c] += p[c];
  }
  const std::vector<double> cnt{2, 1, 3, 0};
  const double A = K * a0 + z.size();
  for (std::size_t c = 0; c < K; ++c) {
    const double mu = (a0 + cnt[c]) / A;
    const double var = mu * (1 - mu) / (A + 1);
    CHECK(std::abs(sum[c] / n - mu) < 4 * std::sqrt(var / n));
  }
  // sparse prior shrinks an empty component
  double empty = 0;
  for (int k = 0; k < 2000; ++k) empty += sample_mixture_weights(rng, z, 0.01, 3 + 1)[3];
  CHECK(empty / 2000 < 0.01);
}

TEST_CASE("pseudo-data identity") {
  auto in = toy_input(2, 3, 2, 15);
  for (auto& v : in.y) v = 1000;
  SynthesisConfig cfg;
  cfg.K = 1;
  auto s = initial_state(in, cfg, Variant::bps, {});
  const auto obs = cluster_pseudo_data(in, s, 0, 1000);
  for (const auto& o : obs)
    for (Eigen::Index a = 0; a < o.rows(); ++a) {
      CHECK(o.d[a] == doctest::Approx(std::log(1000.0)).epsilon(1e-15));
      CHECK(o.F(a, 0) == 1.0);
    }
}

TEST_CASE("empty cluster weights follow the discounted prior") {
  auto in = toy_input(2, 6, 1, 16);
  SynthesisConfig cfg;
  cfg.K = 3;
  SamplerOptions opt;
  opt.init_z = Assignment{0, 0};
  auto s = initial_state(in, cfg, Variant::mbps, opt);
  const auto prior = resolve_theta_prior(cfg, 1);
  const double delta = 0.8;
  Rng rng(17);
  const int n = 40000;
  double s_first = 0, q_first = 0, s_last = 0, q_last = 0;
  for (int k = 0; k < n; ++k) {
    sample_weights_block(rng, in, s, 2, delta, prior, 1000);
    const double a = s.th(2, 1, 0) - prior.mean[1];
    const double b = s.th(2, 1, 5) - prior.mean[1];
    s_first += a;
    q_first += a * a;
    s_last += b;
    q_last += b * b;
  }
  // marginal variance of theta_t is C0 / delta^t
  const double v1 = 1.0 / delta, v6 = std::pow(delta, -6);
  CHECK(std::abs(s_first / n) < 4 * std::sqrt(v1 / n));
  CHECK(std::abs(q_first / n - v1) < 4 * v1 * std::sqrt(2.0 / n));
  CHECK(std::abs(s_last / n) < 4 * std::sqrt(v6 / n));
  CHECK(std::abs(q_last / n - v6) < 4 * v6 * std::sqrt(2.0 / n));
}

TEST_CASE("weight draws with every other block fixed match the exact smoother") {
  auto in = toy_input(3, 12, 2, 18);
  SynthesisConfig cfg;
  cfg.K = 1;
  cfg.delta_sigma = 0.9;
  auto s = initial_state(in, cfg, Variant::bps, {});
  Rng rng(19);
  for (std::size_t i = 0; i < in.n; ++i)
    for (std::size_t t = 0; t < in.T; ++t)
      s.omega[i * in.T + t] = pg_sample(rng, in.count(i, t) + 1000, 0.3);

  const auto prior = resolve_theta_prior(cfg, 2);
  oracle::LinearSystem sys{prior, cluster_pseudo_data(in, s, 0, 1000)};
  const auto ref = oracle::joint_smoother(sys, 0.9);

  const int n = 5000;
  std::vector<double> sum(3 * in.T, 0.0);
  for (int k = 0; k < n; ++k) {
    sample_weights_block(rng, in, s, 0, 0.9, prior, 1000);
    for (std::size_t t = 0; t < in.T; ++t)
      for (int j = 0; j < 3; ++j) sum[t * 3 + j] += s.th(0, j, t);
  }
  for (std::size_t t = 0; t < in.T; ++t)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(sum[t * 3 + j] / n - ref[t].mean[j]) < 4 * std::sqrt(ref[t].cov(j, j) / n));
}

TEST_CASE("intercept deviation conditional") {
  Rng rng(20);
  const double r = 1000;
  // tiny prior variance pins u at zero
  for (int k = 0; k < 100; ++k)
    CHECK(std::abs(sample_intercept_deviation(rng, 1100, 270, 0.5, 1e-14, r)) < 1e-5);
  // centred likelihood: omega (log r - eta) + (y - r) / 2 = 0
  const double omega = 250, y = 1040;
  const double eta = std::log(r) + 0.5 * (y - r) / omega;
  double s = 0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) s += sample_intercept_deviation(rng, y, omega, eta, 0.3, r);
  const double v = 1.0 / (omega + 1.0 / 0.3);
  CHECK(std::abs(s / n) < 4 * std::sqrt(v / n));
  // diffuse prior: mean tends to the likelihood-only value
  const double eta2 = 0.2;
  const double lik = (omega * (std::log(r) - eta2) + 0.5 * (y - r)) / omega;
  s = 0;
  for (int k = 0; k < n; ++k) s += sample_intercept_deviation(rng, y, omega, eta2, 1e12, r);
  CHECK(std::abs(s / n - lik) < 4 * std::sqrt(1.0 / (omega * n)));
}

TEST_CASE("single-member intercept path concentrates at the log mean") {
  SynthesisInput in;
  in.n = 1;
  in.T = 100;
  in.J = 1;
  in.y.assign(100, 20.0);
  in.m.assign(100, 0.0);
  in.s2.assign(100, 1e-8);
  SynthesisConfig cfg;
  cfg.delta_sigma = 1.0;
  cfg.n_burn = 50;
  cfg.n_iter = 200;
  cfg.thin = 1;
  const auto dc = run_sampler(in, cfg, Variant::bps);
  double s = 0;
  for (const auto& d : dc.draws) s += d.th(0, 0, 99);
  CHECK(std::abs(s / dc.draws.size() - std::log(20.0)) < 0.05);
}

TEST_CASE("BPS variant keeps a single cluster and is reproducible") {
  auto in = toy_input(4, 15, 3, 21);
  SynthesisConfig cfg;
  cfg.n_burn = 20;
  cfg.n_iter = 30;
  cfg.thin = 2;
  const auto a = run_sampler(in, cfg, Variant::bps);
  const auto b = run_sampler(in, cfg, Variant::bps);
  CHECK(a.K == 1);
  CHECK(a.draws.size() == 30);
  CHECK(a.alive_per_scan.size() == 80);
  for (std::size_t d = 0; d < a.draws.size(); ++d) {
    CHECK(a.draws[d].pi == std::vector<double>{1.0});
    for (int zi : a.draws[d].z) CHECK(zi == 0);
    CHECK(a.draws[d].theta == b.draws[d].theta);
  }
}

TEST_CASE("mixture variants run and keep their invariants") {
  auto in = toy_input(5, 12, 2, 22);
  SynthesisConfig cfg;
  cfg.n_burn = 10;
  cfg.n_iter = 20;
  cfg.thin = 1;
  for (auto v : {Variant::mbps, Variant::mbpsh}) {
    const auto dc = run_sampler(in, cfg, v, {.keep_latent = true});
    CHECK(dc.K == 5);
    for (const auto& d : dc.draws) {
      CHECK(std::abs(std::accumulate(d.pi.begin(), d.pi.end(), 0.0) - 1.0) < 1e-12);
      for (int zi : d.z) CHECK((zi >= 0 && zi < 5));
      for (double t2 : d.tau2) CHECK(t2 > 0);
      CHECK(d.f.size() == 5 * 2 * 12);
      if (v == Variant::mbpsh) CHECK(d.u.size() == 5 * 12);
    }
  }
}

TEST_CASE("step errors carry the scan and step name") {
  auto in = toy_input(2, 5, 1, 23);
  in.s2[3] = std::numeric_limits<double>::infinity();  // poisons f in scan 0
  SynthesisConfig cfg;
  cfg.n_burn = 1;
  cfg.n_iter = 3;
  cfg.thin = 1;
  try {
    (void)run_sampler(in, cfg, Variant::bps);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("scan 1") != std::string::npos);
    CHECK(msg.find("step 'omega'") != std::string::npos);
  }
}

TEST_CASE("degenerate predictive is Poisson") {
  DrawCollection dc;
  dc.variant = Variant::mbps;
  dc.n = 1;
  dc.T = 1;
  dc.J = 2;
  dc.K = 1;
  dc.horizon = 1;
  dc.delta_sigma = 1.0;
  SynthesisDraw d;
  d.n = 1;
  d.T = 1;
  d.J = 2;
  d.K = 1;
  d.theta = {0.0, 1.0, 0.0};
  d.final_cov.assign(9, 0.0);
  d.z = {0};
  d.pi = {1.0};
  dc.draws.push_back(d);
  Rng rng(24);
  const std::vector<double> m{std::log(5.0), 7.0}, s2{1e-300, 1.0};
  const auto fd = predictive_simulate(rng, dc, 0, 1, m, s2, 100000);
  CHECK(std::abs(fd.mean - 5.0) < 3 * std::sqrt(5.0 / 100000));
  CHECK(fd.lower <= fd.median);
  CHECK(fd.median <= fd.upper);
  for (int y = 0; y < 20; ++y) CHECK(fd.log_pmf(y) == doctest::Approx(poisson_lpmf(y, 5.0)));
  CHECK_THROWS_AS(predictive_simulate(rng, dc, 0, 2, m, s2, 10), ConfigError);
}

TEST_CASE("Rao-Blackwellised predictive mass normalises") {
  auto in = toy_input(3, 10, 2, 25);
  SynthesisConfig cfg;
  cfg.n_burn = 20;
  cfg.n_iter = 50;
  cfg.thin = 1;
  for (auto v : {Variant::bps, Variant::mbpsh}) {
    const auto dc = run_sampler(in, cfg, v);
    Rng rng(26);
    const std::vector<double> m{std::log(30.0), std::log(32.0)}, s2{0.02, 0.03};
    const auto fd = predictive_simulate(rng, dc, 1, 1, m, s2, 2000);
    double total = 0;
    for (int y = 0; y <= 20 * fd.mean; ++y) total += std::exp(fd.log_pmf(y));
    CHECK(std::abs(total - 1.0) < 1e-6);
    CHECK(fd.lower <= fd.median);
    CHECK(fd.median <= fd.upper);
    CHECK(fd.lower >= 0);
  }
}
