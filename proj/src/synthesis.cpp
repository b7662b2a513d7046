#include "mbps/synthesis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "mbps/error.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/kernels.hpp"

namespace mbps {

namespace {


template <class F>
void step(const char* name, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("step '") + name + "': " + e.what());
  }
}

std::size_t resolve_K(const SynthesisConfig& config, Variant variant, std::size_t n) {
  if (variant == Variant::bps) return 1;
  const std::size_t K = config.K == 0 ? n : config.K;
  if (K < 1) throw ConfigError("synthesis: K must be >= 1");
  return K;
}

}  // namespace

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::bps: return "BPS";
    case Variant::mbps: return "MBPS";
    case Variant::mbpsh: return "MBPSH";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "BPS") return Variant::bps;
  if (u == "MBPS") return Variant::mbps;
  if (u == "MBPSH") return Variant::mbpsh;
  throw ConfigError("unknown synthesis variant '" + s + "'");
}

SynthesisInput make_input(const Grid<std::int64_t>& y, const AgentPredictive& moments,
                          double variance_inflation) {
  if (!(variance_inflation > 0.0)) throw ConfigError("variance_inflation must be > 0");
  if (y.rows() != moments.n || y.cols() != moments.T)
    throw InputError("synthesis input: counts are " + std::to_string(y.rows()) + "x" +
                     std::to_string(y.cols()) + " but agent moments cover " +
                     std::to_string(moments.n) + "x" + std::to_string(moments.T));
  if (moments.J == 0) throw InputError("synthesis input: no agents");
  moments.check();
  SynthesisInput in;
  in.n = moments.n;
  in.T = moments.T;
  in.J = moments.J;
  in.horizon = moments.horizon;
  in.y.assign(y.data().begin(), y.data().end());
  for (double v : in.y)
    if (v < 0) throw InputError("synthesis input: negative count");
  in.m = moments.m;
  in.s2 = moments.s2;
  for (auto& v : in.s2) v *= variance_inflation;
  return in;
}

double SynthesisDraw::linear_predictor(std::size_t i, std::size_t k, std::size_t t) const {
  double eta = th(k, 0, t);
  for (std::size_t j = 0; j < J; ++j) eta += th(k, j + 1, t) * fac(i, j, t);
  return eta + intercept_dev(i, t);
}

double nb_log_pmf(double y, double psi, double r) {
  const double softplus = std::max(psi, 0.0) + std::log1p(std::exp(-std::abs(psi)));
  return std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) + y * psi -
         (y + r) * softplus;
}

double poisson_log_pmf(double y, double eta) {
  return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
}

double sample_omega(Rng& rng, double y, double eta, double r, const PgOptions& pg) {
  return pg_sample(rng, y + r, eta - std::log(r), pg);
}

void factor_posterior(double y, double omega, std::span<const double> theta,
                      std::span<const double> m, std::span<const double> s2, double u, double r,
                      Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const std::size_t J = m.size();
  Eigen::VectorXd w(J);
  Eigen::VectorXd prior_prec(J);
  for (std::size_t j = 0; j < J; ++j) {
    w[j] = theta[j + 1];
    prior_prec[j] = 1.0 / s2[j];
  }
  Eigen::MatrixXd prec = omega * w * w.transpose();
  prec.diagonal() += prior_prec;
  cov = prec.inverse();
  const double kappa = 0.5 * (y - r);
  const double load = omega * (std::log(r) - theta[0] - u) + kappa;
  Eigen::VectorXd rhs = load * w;
  for (std::size_t j = 0; j < J; ++j) rhs[j] += prior_prec[j] * m[j];
  mean = cov * rhs;
}

void sample_factors(Rng& rng, double y, double omega, std::span<const double> theta,
                    std::span<const double> m, std::span<const double> s2, double u, double r,
                    std::span<double> out) {
  const std::size_t J = m.size();
  if (!(omega > 0.0)) throw NumericalError("sample_factors: omega must be positive");
  // Prior draw corrected by the single pseudo-observation
  // (kappa/omega + log r - theta_0 - u) = w'f + e, e ~ N(0, 1/omega).
  std::array<double, 32> vbuf;
  std::vector<double> vheap;
  double* v = vbuf.data();
  if (J > vbuf.size()) {
    vheap.resize(J);
    v = vheap.data();
  }
  double c = 1.0 / omega, wm = 0.0, wx = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double w = theta[j + 1];
    v[j] = s2[j] * w;
    c += w * v[j];
    wm += w * m[j];
    const double x = std::sqrt(s2[j]) * rng.normal();
    out[j] = x;
    wx += w * x;
  }
  const double e = rng.normal() / std::sqrt(omega);
  const double target = (0.5 * (y - r)) / omega + std::log(r) - theta[0] - u;
  const double gain = (target - wm - wx - e) / c;
  for (std::size_t j = 0; j < J; ++j) out[j] = m[j] + out[j] + v[j] * gain;
}

std::vector<double> assignment_log_weights(const SynthesisInput& in, const SynthesisDraw& s,
                                           std::size_t i, double r) {
  const auto& kt = kernels::active();
  const std::size_t T = in.T, p = s.p();
  std::vector<double> out(s.K);
  std::vector<double> eta(T);
  std::vector<double> ones(T, 1.0);
  std::vector<const double*> a(p), b(p);
  b[0] = ones.data();
  for (std::size_t j = 0; j < in.J; ++j) b[j + 1] = s.f.data() + (i * in.J + j) * T;
  const double* offset = s.u.empty() ? nullptr : s.u.data() + i * T;
  const double* yi = in.y.data() + i * T;
  for (std::size_t k = 0; k < s.K; ++k) {
    const double lp = std::log(s.pi[k]);
    if (!(lp > -std::numeric_limits<double>::infinity())) {
      out[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    for (std::size_t j = 0; j < p; ++j) a[j] = s.theta.data() + (k * p + j) * T;
    kt.linear_predictor(a.data(), b.data(), p, offset, eta.data(), T);
    double ll = kt.nb_kernel_sum(yi, eta.data(), T, r);
    if (!s.u.empty() && !s.tau2.empty()) {
      const double* tau2 = s.tau2.data() + k * T;
      for (std::size_t t = 0; t < T; ++t) {
        const double uu = offset[t];
        ll -= 0.5 * (std::log(2.0 * std::numbers::pi * tau2[t]) + uu * uu / tau2[t]);
      }
    }
    out[k] = lp + ll;
  }
  return out;
}

void sample_assignments(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, double r) {
  for (std::size_t i = 0; i < in.n; ++i) {
    const auto w = assignment_log_weights(in, s, i, r);
    try {
      s.z[i] = static_cast<int>(rng.categorical_log(w));
    } catch (const NumericalError&) {
      throw NumericalError("sample_assignments: every cluster has zero weight for series " +
                           std::to_string(i));
    }
  }
}

std::vector<double> sample_mixture_weights(Rng& rng, std::span<const int> z, double a0,
                                           std::size_t K) {
  if (!(a0 > 0.0)) throw DomainError("sample_mixture_weights: a0 must be positive");
  if (K == 1) return {1.0};
  std::vector<double> alpha(K, a0);
  for (int k : z) {
    if (k < 0 || static_cast<std::size_t>(k) >= K)
      throw DomainError("sample_mixture_weights: assignment out of range");
    alpha[k] += 1.0;
  }
  return rng.dirichlet(alpha);
}

std::vector<PseudoObservation> cluster_pseudo_data(const SynthesisInput& in,
                                                   const SynthesisDraw& s, std::size_t k,
                                                   double r) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < in.n; ++i)
    if (static_cast<std::size_t>(s.z[i]) == k) members.push_back(i);
  const Eigen::Index nk = static_cast<Eigen::Index>(members.size());
  const Eigen::Index p = static_cast<Eigen::Index>(s.p());
  const double log_r = std::log(r);
  std::vector<PseudoObservation> obs(in.T);
  for (std::size_t t = 0; t < in.T; ++t) {
    auto& o = obs[t];
    o.d.resize(nk);
    o.F.resize(nk, p);
    o.precision.resize(nk);
    for (Eigen::Index a = 0; a < nk; ++a) {
      const std::size_t i = members[a];
      const double w = s.omega[i * in.T + t];
      o.d[a] = 0.5 * (in.count(i, t) - r) / w + log_r - s.intercept_dev(i, t);
      o.precision[a] = w;
      o.F(a, 0) = 1.0;
      for (std::size_t j = 0; j < in.J; ++j) o.F(a, j + 1) = s.fac(i, j, t);
    }
  }
  return obs;
}

void sample_weights_block(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, std::size_t k,
                          double delta, const GaussianState& prior, double r) {
  const auto obs = cluster_pseudo_data(in, s, k, r);
  const auto filt = forward_filter(prior, obs, delta);
  const auto path = backward_sample(rng, filt, delta);
  const std::size_t p = s.p();
  for (std::size_t t = 0; t < in.T; ++t)
    for (std::size_t j = 0; j < p; ++j) s.th(k, j, t) = path[t][j];
  const auto& C = filt.filtered.back().cov;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) s.final_cov[(k * p + a) * p + b] = C(a, b);
}

double sample_intercept_deviation(Rng& rng, double y, double omega, double eta_without_u,
                                  double tau2, double r) {
  if (!(tau2 > 0.0)) throw DomainError("sample_intercept_deviation: tau2 must be positive");
  const double v = 1.0 / (omega + 1.0 / tau2);
  const double mean = v * (omega * (std::log(r) - eta_without_u) + 0.5 * (y - r));
  return rng.normal(mean, std::sqrt(v));
}

void sample_volatilities(Rng& rng, SynthesisDraw& s, double beta, const GammaState& prior,
                         PrecisionBackward form) {
  std::vector<ResidualSum> sums(s.T);
  for (std::size_t k = 0; k < s.K; ++k) {
    std::fill(sums.begin(), sums.end(), ResidualSum{});
    for (std::size_t i = 0; i < s.n; ++i) {
      if (static_cast<std::size_t>(s.z[i]) != k) continue;
      for (std::size_t t = 0; t < s.T; ++t) {
        const double uu = s.u[i * s.T + t];
        sums[t].count += 1.0;
        sums[t].sum_sq += uu * uu;
      }
    }
    const auto phi = beta_gamma_ffbs(rng, sums, beta, prior, form);
    for (std::size_t t = 0; t < s.T; ++t) s.tau2[k * s.T + t] = 1.0 / phi[t];
  }
}

void gibbs_sweep(Rng& rng, const SynthesisInput& in, SynthesisDraw& s, const SweepContext& ctx) {
  const auto& cfg = ctx.config;
  const auto& mask = ctx.options.mask;
  const double r = cfg.r;
  const std::size_t T = in.T, J = in.J, p = J + 1;
  const bool hetero = ctx.variant == Variant::mbpsh;
  const bool mixture = ctx.variant != Variant::bps;

  if (mask.omega)
    step("omega", [&] {
      for (std::size_t i = 0; i < in.n; ++i)
        for (std::size_t t = 0; t < T; ++t)
          s.omega[i * T + t] =
              sample_omega(rng, in.count(i, t), s.linear_predictor(i, s.z[i], t), r, ctx.options.pg);
    });

  if (mask.theta)
    step("theta", [&] {
      for (std::size_t k = 0; k < s.K; ++k)
        sample_weights_block(rng, in, s, k, cfg.delta_sigma, ctx.theta_prior, r);
    });

  if (mask.factors)
    step("factors", [&] {
      std::vector<double> th(p), m(J), v(J), out(J);
      for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t k = s.z[i];
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t j = 0; j < p; ++j) th[j] = s.th(k, j, t);
          for (std::size_t j = 0; j < J; ++j) {
            m[j] = in.m[in.at(i, j, t)];
            v[j] = in.s2[in.at(i, j, t)];
          }
          sample_factors(rng, in.count(i, t), s.omega[i * T + t], th, m, v, s.intercept_dev(i, t),
                         r, out);
          for (std::size_t j = 0; j < J; ++j) s.fac(i, j, t) = out[j];
        }
      }
    });

  if (hetero && mask.u)
    step("u", [&] {
      for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t k = s.z[i];
        for (std::size_t t = 0; t < T; ++t) {
          const double eta = s.linear_predictor(i, k, t) - s.u[i * T + t];
          s.u[i * T + t] = sample_intercept_deviation(rng, in.count(i, t), s.omega[i * T + t], eta,
                                                      s.tau2[k * T + t], r);
        }
      }
    });

  if (hetero && mask.tau2)
    step("tau2", [&] {
      sample_volatilities(rng, s, cfg.beta_tau, ctx.precision_prior, ctx.options.precision_form);
    });

  if (mixture && mask.z) step("z", [&] { sample_assignments(rng, in, s, r); });
  if (mixture && mask.pi) step("pi", [&] { s.pi = sample_mixture_weights(rng, s.z, cfg.a0, s.K); });
}

GaussianState resolve_theta_prior(const SynthesisConfig& config, std::size_t J) {
  const ThetaPrior tp = config.theta_prior.value_or(ThetaPrior::equal_weights(J));
  if (tp.mean.size() != J + 1)
    throw ConfigError("theta prior mean has " + std::to_string(tp.mean.size()) +
                      " entries; expected " + std::to_string(J + 1));
  GaussianState g;
  g.mean = Eigen::Map<const Eigen::VectorXd>(tp.mean.data(), static_cast<Eigen::Index>(J + 1));
  g.cov = tp.cov_scale * Eigen::MatrixXd::Identity(J + 1, J + 1);
  return g;
}

SynthesisDraw initial_state(const SynthesisInput& in, const SynthesisConfig& config,
                            Variant variant, const SamplerOptions& options) {
  SynthesisDraw s;
  s.n = in.n;
  s.T = in.T;
  s.J = in.J;
  s.K = resolve_K(config, variant, in.n);
  const std::size_t p = s.p();

  if (options.init_z && variant != Variant::bps) {
    if (options.init_z->size() != in.n) throw ConfigError("init_z: wrong length");
    for (int k : *options.init_z)
      if (k < 0 || static_cast<std::size_t>(k) >= s.K) throw ConfigError("init_z: label out of range");
    s.z = *options.init_z;
  } else if (s.K == 1) {
    s.z.assign(in.n, 0);
  } else {
    std::vector<std::array<double, 2>> feat(in.n);
    for (std::size_t i = 0; i < in.n; ++i) {
      std::vector<double> yi(in.y.begin() + i * in.T, in.y.begin() + (i + 1) * in.T);
      double mean = 0;
      for (double v : yi) mean += v;
      mean /= static_cast<double>(in.T);
      const auto prof = series_profile(yi);
      feat[i] = {std::log(std::max(mean, kZeroCountGuard)), prof.mean_abs_change};
    }
    const std::size_t groups = std::min({config.kmeans_groups, s.K, in.n});
    s.z = kmeans_partition(feat, std::max<std::size_t>(groups, 1));
  }

  s.pi.assign(s.K, config.a0);
  for (int k : s.z) s.pi[k] += 1.0;
  const double tot = config.a0 * static_cast<double>(s.K) + static_cast<double>(in.n);
  for (auto& v : s.pi) v /= tot;
  if (s.K == 1) s.pi = {1.0};

  const auto prior = resolve_theta_prior(config, in.J);
  s.theta.resize(s.K * p * in.T);
  s.final_cov.resize(s.K * p * p);
  for (std::size_t k = 0; k < s.K; ++k) {
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t t = 0; t < in.T; ++t) s.th(k, j, t) = prior.mean[j];
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) s.final_cov[(k * p + a) * p + b] = prior.cov(a, b);
  }
  s.f = in.m;
  if (variant == Variant::mbpsh) {
    s.u.assign(in.n * in.T, 0.0);
    s.tau2.assign(s.K * in.T, config.tau2_init);
  }
  s.omega.resize(in.n * in.T);
  for (std::size_t i = 0; i < in.n; ++i)
    for (std::size_t t = 0; t < in.T; ++t)
      s.omega[i * in.T + t] =
          pg_mean(in.count(i, t) + config.r, s.linear_predictor(i, s.z[i], t) - std::log(config.r));
  return s;
}

std::vector<Assignment> DrawCollection::assignments() const {
  std::vector<Assignment> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(d.z);
  return out;
}

DrawCollection run_sampler(const SynthesisInput& in, const SynthesisConfig& config,
                           Variant variant, const SamplerOptions& options) {
  config.validate();
  if (in.n == 0 || in.T == 0) throw InputError("run_sampler: empty estimation window");
  Rng rng(config.seed);
  SynthesisDraw s = initial_state(in, config, variant, options);

  SamplerOptions opt = options;
  opt.pg.normal_threshold = std::min(opt.pg.normal_threshold, config.pg_normal_threshold);
  const SweepContext ctx{config, variant, resolve_theta_prior(config, in.J),
                         GammaState{config.gamma_prior_shape, config.gamma_prior_rate}, opt};

  DrawCollection out;
  out.variant = variant;
  out.n = in.n;
  out.T = in.T;
  out.J = in.J;
  out.K = s.K;
  out.horizon = in.horizon;
  out.delta_sigma = config.delta_sigma;
  out.draws.reserve(config.n_iter);

  const std::size_t total = config.n_burn + config.n_iter * config.thin;
  out.alive_per_scan.reserve(total);
  for (std::size_t scan = 0; scan < total; ++scan) {
    try {
      gibbs_sweep(rng, in, s, ctx);
    } catch (const Error& e) {
      throw Error(e.kind(), "sampler scan " + std::to_string(scan) + ", " + e.what());
    }
    out.alive_per_scan.push_back(alive_clusters(s.z));
    if (scan >= config.n_burn && (scan - config.n_burn + 1) % config.thin == 0) {
      out.draws.push_back(s);
      if (!options.keep_latent) {
        auto& d = out.draws.back();
        d.f.clear();
        d.f.shrink_to_fit();
        d.omega.clear();
        d.omega.shrink_to_fit();
        d.u.clear();
        d.u.shrink_to_fit();
      }
    }
    if (options.on_scan) options.on_scan(scan);
  }
  return out;
}

ForecastDistribution predictive_simulate(Rng& rng, const DrawCollection& draws, std::size_t i,
                                         int horizon, std::span<const double> m,
                                         std::span<const double> s2, std::size_t n_draws) {
  if (horizon != draws.horizon)
    throw ConfigError("predictive_simulate: synthesis fitted for horizon " +
                      std::to_string(draws.horizon) + " but asked for horizon " +
                      std::to_string(horizon));
  if (draws.draws.empty()) throw DomainError("predictive_simulate: no posterior draws");
  if (m.size() != draws.J || s2.size() != draws.J)
    throw InputError("predictive_simulate: agent moment dimension mismatch");
  if (i >= draws.n) throw DomainError("predictive_simulate: series index out of range");
  if (n_draws == 0) throw ConfigError("predictive_simulate: need at least one draw");

  const std::size_t J = draws.J, p = J + 1, T = draws.T;
  const double grow = std::pow(draws.delta_sigma, -static_cast<double>(horizon)) - 1.0;
  std::vector<std::int64_t> ys(n_draws);
  std::vector<double> etas(n_draws);
  Eigen::VectorXd mean(p);
  Eigen::MatrixXd cov(p, p);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto& D = draws.draws[d % draws.draws.size()];
    const std::size_t k = D.z[i];
    for (std::size_t j = 0; j < p; ++j) mean[j] = D.th(k, j, T - 1);
    Eigen::VectorXd th = mean;
    if (grow > 0.0) {
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) cov(a, b) = grow * D.final_cov[(k * p + a) * p + b];
      th = mvn_draw(rng, mean, cov);
    }
    double eta = th[0];
    for (std::size_t j = 0; j < J; ++j) eta += th[j + 1] * rng.normal(m[j], std::sqrt(s2[j]));
    if (draws.variant == Variant::mbpsh) eta += rng.normal(0.0, std::sqrt(D.tau2[k * T + T - 1]));
    eta = std::min(eta, kLogMeanCap);
    etas[d] = eta;
    ys[d] = rng.poisson(std::exp(eta));
  }

  return ForecastDistribution::from_draws(std::move(ys), std::move(etas));
}

}  // namespace mbps
