#include <algorithm>
#include <cmath>
#include <string>

#include "mbps/agents.hpp"

namespace mbps {

const char* to_string(AgentKind k) noexcept {
  switch (k) {
    case AgentKind::dglm: return "dglm";
    case AgentKind::gam: return "gam";
    case AgentKind::inar: return "inar";
    case AgentKind::sihr: return "sihr";
    case AgentKind::fmpr: return "fmpr";
  }
  return "?";
}

AgentKind parse_agent_kind(const std::string& s) {
  for (auto k : {AgentKind::dglm, AgentKind::gam, AgentKind::inar, AgentKind::sihr, AgentKind::fmpr})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown agent '" + s + "' (expected dglm, gam, inar, sihr or fmpr)");
}

void AgentSpec::validate() const {
  const std::string who = std::string("agent ") + to_string(kind);
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError(who + ": discount outside (0, 1]");
  if (bootstrap_reps < 100) throw ConfigError(who + ": bootstrap_reps must be at least 100");
  if (recipe.uses_lag_y() && kind != AgentKind::fmpr)
    throw ConfigError(who + ": lagged counts cannot enter the covariate recipe (INAR adds its "
                            "own autoregressive term)");
}

AgentSettings AgentSettings::defaults(Frequency f) {
  AgentSettings s;
  const double discount = f == Frequency::weekly ? 0.95 : 0.99;
  for (auto k : {AgentKind::dglm, AgentKind::gam, AgentKind::inar, AgentKind::sihr}) {
    AgentSpec a;
    a.kind = k;
    a.discount = discount;
    s.agents.push_back(a);
  }
  s.ma_window = f == Frequency::weekly ? 2 : 14;
  s.lag = f == Frequency::weekly ? 1 : 7;
  s.sihr_window = f == Frequency::weekly ? 20 : 90;
  return s;
}

void AgentSettings::validate() const {
  if (agents.empty()) throw ConfigError("agents: at least one agent is required");
  for (const auto& a : agents) {
    a.validate();
    if (a.kind == AgentKind::fmpr)
      throw ConfigError("agents: fmpr is a baseline, not a synthesis agent");
  }
  if (ma_window < 1 || lag < 1) throw ConfigError("agents: ma_window and lag must be >= 1");
  if (!(default_population > 0.0)) throw ConfigError("agents: population must be positive");
  for (double p : population)
    if (!(p > 0.0)) throw ConfigError("agents: population must be positive");
  if (sihr_window < 8) throw ConfigError("agents: sihr_window must be at least 8");
  if (sihr_substeps < 1) throw ConfigError("agents: sihr_substeps must be >= 1");
  if (gam.n_basis < 4 || gam.grid_size < 2)
    throw ConfigError("agents: gam needs n_basis >= 4 and a grid of at least 2 values");
}

std::size_t earliest_origin(const AgentSettings& settings) {
  const std::size_t first = static_cast<std::size_t>(settings.ma_window + settings.lag - 1);
  std::size_t o = first;
  for (const auto& a : settings.agents) {
    switch (a.kind) {
      case AgentKind::gam: o = std::max(o, first + 4 * settings.gam.n_basis - 1); break;
      case AgentKind::inar: o = std::max(o, first + 5 * (a.recipe.dim() + 1)); break;
      case AgentKind::sihr: o = std::max<std::size_t>(o, 7); break;
      default: break;
    }
  }
  return o;
}

namespace {

// Data visible at a forecast origin. Nothing after the origin is copied in.
struct OriginView {
  std::vector<double> y;                // indices 0..origin
  std::vector<std::int64_t> infected;   // indices 0..origin
  InfectedCovariate cov;
  std::size_t origin = 0;
  std::size_t first = 0;
  std::int64_t max_read = -1;

  OriginView(const CountPanel& panel, std::size_t i, std::size_t o, const AgentSettings& s)
      : origin(o) {
    const auto yr = panel.y.row(i);
    const auto ir = panel.infected.row(i);
    y.assign(yr.begin(), yr.begin() + static_cast<std::ptrdiff_t>(o + 1));
    infected.assign(ir.begin(), ir.begin() + static_cast<std::ptrdiff_t>(o + 1));
    cov = InfectedCovariate(infected, s.ma_window, s.lag);
    first = cov.first_target();
  }

  double count(std::size_t t) {
    max_read = std::max<std::int64_t>(max_read, static_cast<std::int64_t>(t));
    return y.at(t);
  }
  double itilde(std::size_t target) {
    max_read = std::max<std::int64_t>(
        max_read, static_cast<std::int64_t>(cov.source_index(target, origin)));
    return cov.value(target, origin);
  }
  double centre() {
    double s = 0.0;
    for (std::size_t t = first; t <= origin; ++t) s += itilde(t);
    return s / static_cast<double>(origin - first + 1);
  }
};

// Replicate paths for horizons 1..H summarised as log moments, plus the
// predictive distributions when asked for.
struct PathSummary {
  std::vector<std::vector<double>> y;    // [h][rep]
  std::vector<std::vector<double>> eta;  // [h][rep]

  PathSummary(int H, std::size_t reps)
      : y(H, std::vector<double>(reps)), eta(H, std::vector<double>(reps)) {}

  void finish(OriginForecast& out, std::size_t moment_reps, std::size_t draws) const {
    std::vector<LogMoments> mom;
    std::vector<ForecastDistribution> pred;
    for (std::size_t h = 0; h < y.size(); ++h) {
      auto m = log_moments_of(std::span(y[h]).first(moment_reps));
      m.var = std::max(m.var, kMinLogVariance);
      mom.push_back(m);
      if (draws) {
        std::vector<std::int64_t> yy(draws);
        for (std::size_t d = 0; d < draws; ++d) yy[d] = static_cast<std::int64_t>(y[h][d]);
        pred.push_back(ForecastDistribution::from_draws(
            std::move(yy), std::vector<double>(eta[h].begin(), eta[h].begin() + draws)));
      }
    }
    out.moments.push_back(std::move(mom));
    if (draws) out.predictive.push_back(std::move(pred));
  }
};

double capped(double eta) { return std::min(eta, kLogMeanCap); }

void run_dglm(const AgentSpec& a, OriginView& v, int H, const AgentSettings& s, Rng& rng,
              std::size_t draws, OriginForecast& out) {
  const double c = v.centre();
  const std::size_t p = a.recipe.dim();
  GaussianState st;
  st.mean = Eigen::VectorXd::Zero(p);
  st.mean[0] = std::log(v.count(v.first) + 0.5);
  st.cov = s.dglm_prior_var * Eigen::MatrixXd::Identity(p, p);
  for (std::size_t t = v.first; t <= v.origin; ++t)
    st = dglm_update(st, v.count(t), covariate_vector(a.recipe, v.itilde(t), c, 0.0), a.discount)
             .posterior;

  std::vector<LogMoments> mom;
  std::vector<ForecastDistribution> pred;
  for (int h = 1; h <= H; ++h) {
    const auto x = covariate_vector(a.recipe, v.itilde(v.origin + h), c, 0.0);
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), p);
    const double f = xv.dot(st.mean);
    const double q = xv.dot(st.cov * xv) * std::pow(a.discount, -static_cast<double>(h));
    mom.push_back({f, std::max(q, kMinLogVariance)});
    if (draws) {
      const GammaParams g = gamma_from_log_moments(f, std::max(q, kMinLogVariance));
      std::vector<std::int64_t> yy(draws);
      std::vector<double> ee(draws);
      for (std::size_t d = 0; d < draws; ++d) {
        ee[d] = capped(std::log(rng.gamma(g.shape, g.rate)));
        yy[d] = rng.poisson(std::exp(ee[d]));
      }
      pred.push_back(ForecastDistribution::from_draws(std::move(yy), std::move(ee)));
    }
  }
  out.moments.push_back(std::move(mom));
  if (draws) out.predictive.push_back(std::move(pred));
}

void run_gam(const AgentSpec& a, OriginView& v, int H, const AgentSettings& s, Rng& rng,
             std::size_t draws, OriginForecast& out) {
  std::vector<double> y, it, tm;
  for (std::size_t t = v.first; t <= v.origin; ++t) {
    y.push_back(v.count(t));
    it.push_back(v.itilde(t));
    tm.push_back(static_cast<double>(t));
  }
  const GamFit fit = gam_fit(y, it, tm, s.gam);
  std::vector<Eigen::VectorXd> rows;
  for (int h = 1; h <= H; ++h)
    rows.push_back(fit.design_row(v.itilde(v.origin + h), static_cast<double>(v.origin + h)));
  const std::size_t reps = std::max<std::size_t>(a.bootstrap_reps, draws);
  PathSummary ps(H, reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const Eigen::VectorXd b = mvn_draw(rng, fit.beta, fit.cov);
    for (int h = 0; h < H; ++h) {
      const double eta = capped(rows[h].dot(b));
      ps.eta[h][r] = eta;
      ps.y[h][r] = static_cast<double>(rng.poisson(std::exp(eta)));
    }
  }
  ps.finish(out, a.bootstrap_reps, draws);
}

void run_inar(const AgentSpec& a, OriginView& v, int H, Rng& rng, std::size_t draws,
              OriginForecast& out) {
  const double c = v.centre();
  const std::size_t p = a.recipe.dim();
  std::vector<double> y;
  Eigen::MatrixXd X(v.origin - v.first + 1, p);
  for (std::size_t t = v.first; t <= v.origin; ++t) {
    y.push_back(v.count(t));
    const auto x = covariate_vector(a.recipe, v.itilde(t), c, 0.0);
    for (std::size_t j = 0; j < p; ++j) X(t - v.first, j) = x[j];
  }
  const PoissonGlmFit fit = inar_fit(y, X);
  std::vector<std::vector<double>> xs;
  for (int h = 1; h <= H; ++h) xs.push_back(covariate_vector(a.recipe, v.itilde(v.origin + h), c, 0.0));
  const double last = v.count(v.origin);
  const std::size_t reps = std::max<std::size_t>(a.bootstrap_reps, draws);
  PathSummary ps(H, reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const Eigen::VectorXd b = mvn_draw(rng, fit.coef, fit.cov);
    double prev = last;
    for (int h = 0; h < H; ++h) {
      double eta = b[p] * prev;
      for (std::size_t j = 0; j < p; ++j) eta += b[j] * xs[h][j];
      eta = capped(eta);
      prev = static_cast<double>(rng.poisson(std::exp(eta)));
      ps.eta[h][r] = eta;
      ps.y[h][r] = prev;
    }
  }
  ps.finish(out, a.bootstrap_reps, draws);
}

void run_sihr(const AgentSpec& a, OriginView& v, int H, const AgentSettings& s, std::size_t series,
              Rng& rng, std::size_t draws, OriginForecast& out) {
  const std::size_t L = std::min(s.sihr_window, v.origin + 1);
  std::vector<double> y;
  for (std::size_t t = v.origin + 1 - L; t <= v.origin; ++t) y.push_back(v.count(t));
  SihrFitOptions opt;
  opt.discount = a.discount;
  opt.population = series < s.population.size() ? s.population[series] : s.default_population;
  opt.substeps = s.sihr_substeps;
  SihrFit fit;
  try {
    fit = sihr_power_weighted_fit(y, opt);
  } catch (const FitError& e) {
    fit = e.best();
    out.warnings.push_back(e.what());
  }
  const auto path = fit.hospital_path(L + static_cast<std::size_t>(H));
  const std::size_t reps = std::max<std::size_t>(a.bootstrap_reps, draws);
  PathSummary ps(H, reps);
  for (int h = 0; h < H; ++h) {
    const double eta = capped(std::log(std::max(path[L - 1 + h + 1], 1e-12)));
    for (std::size_t r = 0; r < reps; ++r) {
      ps.eta[h][r] = eta;
      ps.y[h][r] = static_cast<double>(rng.poisson(std::exp(eta)));
    }
  }
  ps.finish(out, a.bootstrap_reps, draws);
}

}  // namespace

OriginForecast forecast_from_origin(const CountPanel& panel, std::size_t series,
                                    std::size_t origin, int max_horizon,
                                    const AgentSettings& settings, std::size_t predictive_draws) {
  if (series >= panel.n()) throw DomainError("forecast_from_origin: series out of range");
  if (origin >= panel.length()) throw DomainError("forecast_from_origin: origin beyond the panel");
  if (max_horizon < 1) throw DomainError("forecast_from_origin: horizon must be >= 1");
  const std::size_t earliest = earliest_origin(settings);
  if (origin < earliest)
    throw InputError("forecast_from_origin: origin " + std::to_string(origin) +
                     " leaves too little history; agents need origin >= " +
                     std::to_string(earliest));

  OriginView view(panel, series, origin, settings);
  OriginForecast out;
  out.series = series;
  out.origin = origin;
  for (std::size_t j = 0; j < settings.agents.size(); ++j) {
    const auto& a = settings.agents[j];
    Rng rng(Rng::derive(settings.seed, {series, j, origin}));
    try {
      switch (a.kind) {
        case AgentKind::dglm: run_dglm(a, view, max_horizon, settings, rng, predictive_draws, out); break;
        case AgentKind::gam: run_gam(a, view, max_horizon, settings, rng, predictive_draws, out); break;
        case AgentKind::inar: run_inar(a, view, max_horizon, rng, predictive_draws, out); break;
        case AgentKind::sihr:
          run_sihr(a, view, max_horizon, settings, series, rng, predictive_draws, out);
          break;
        case AgentKind::fmpr: throw ConfigError("fmpr is not a synthesis agent");
      }
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("agent ") + to_string(a.kind) + ", series '" +
                                panel.labels[series] + "', origin " + std::to_string(origin) +
                                ": " + e.what());
    }
  }
  out.info_index = view.max_read;
  return out;
}

FmprForecast fmpr_forecast_from_origin(const CountPanel& panel, std::size_t origin,
                                       int max_horizon, const AgentSettings& settings,
                                       const FmprConfig& config, std::size_t draws) {
  if (origin >= panel.length()) throw DomainError("fmpr forecast: origin beyond the panel");
  if (max_horizon < 1 || draws == 0) throw DomainError("fmpr forecast: need horizon and draws");
  const auto recipe = CovariateRecipe::fmpr_default();
  const std::size_t n = panel.n(), p = recipe.dim();

  std::vector<OriginView> views;
  double centre = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    views.emplace_back(panel, i, origin, settings);
    centre += views.back().centre();
  }
  centre /= static_cast<double>(n);
  const std::size_t first = views[0].first;
  if (origin < first + 2 * p)
    throw InputError("fmpr forecast: origin " + std::to_string(origin) + " leaves too little history");

  FmprData data;
  for (auto& v : views) {
    Eigen::MatrixXd X(origin - first, p);
    std::vector<double> y;
    for (std::size_t t = first + 1; t <= origin; ++t) {
      const auto x = covariate_vector(recipe, v.itilde(t), centre, v.count(t - 1));
      for (std::size_t j = 0; j < p; ++j) X(t - first - 1, j) = x[j];
      y.push_back(v.count(t));
    }
    data.X.push_back(std::move(X));
    data.y.push_back(std::move(y));
  }
  FmprConfig cfg = config;
  cfg.seed = Rng::derive(config.seed, {origin});
  const FmprDraws fit = fmpr_fit(data, cfg);

  FmprForecast out;
  out.origin = origin;
  Rng rng(Rng::derive(config.seed, {origin, 1}));
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = views[i];
    std::vector<double> itilde;
    for (int h = 1; h <= max_horizon; ++h) itilde.push_back(v.itilde(origin + h));
    std::vector<std::vector<std::int64_t>> yy(max_horizon, std::vector<std::int64_t>(draws));
    std::vector<std::vector<double>> ee(max_horizon, std::vector<double>(draws));
    const double last = v.count(origin);
    for (std::size_t d = 0; d < draws; ++d) {
      const std::size_t l = d % fit.beta.size();
      const double* b = fit.beta[l].data() + static_cast<std::size_t>(fit.z[l][i]) * p;
      double prev = last;
      for (int h = 0; h < max_horizon; ++h) {
        const auto x = covariate_vector(recipe, itilde[h], centre, prev);
        double eta = 0.0;
        for (std::size_t j = 0; j < p; ++j) eta += b[j] * x[j];
        eta = capped(eta);
        prev = static_cast<double>(rng.poisson(std::exp(eta)));
        yy[h][d] = static_cast<std::int64_t>(prev);
        ee[h][d] = eta;
      }
    }
    std::vector<ForecastDistribution> pred;
    for (int h = 0; h < max_horizon; ++h)
      pred.push_back(ForecastDistribution::from_draws(std::move(yy[h]), std::move(ee[h])));
    out.predictive.push_back(std::move(pred));
    out.info_index = std::max(out.info_index, v.max_read);
  }
  return out;
}

}  // namespace mbps
