#include "mbps/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mbps/error.hpp"

namespace mbps {

const char* to_string(Frequency f) noexcept {
  return f == Frequency::daily ? "daily" : "weekly";
}

Frequency parse_frequency(const std::string& s) {
  if (s == "daily") return Frequency::daily;
  if (s == "weekly") return Frequency::weekly;
  throw ConfigError("unknown frequency '" + s + "' (expected daily or weekly)");
}

std::chrono::days step_of(Frequency f) noexcept {
  return f == Frequency::daily ? std::chrono::days{1} : std::chrono::days{7};
}

std::string format_date(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<std::chrono::sys_days> parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::vector<Violation> validate_panel(const CountPanel& panel) {
  std::vector<Violation> out;
  const std::size_t n = panel.n();
  const std::size_t T = panel.length();
  if (panel.y.rows() != n || panel.y.cols() != T || panel.infected.rows() != n ||
      panel.infected.cols() != T) {
    out.push_back({Violation::Kind::shape, std::nullopt, std::nullopt,
                   "count or infected grid does not match labels x calendar"});
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      if (panel.y(i, t) < 0) {
        out.push_back({Violation::Kind::negative_count, i, t,
                       "negative count " + std::to_string(panel.y(i, t)) + " in series '" +
                           panel.labels[i] + "' at " + format_date(panel.calendar[t])});
      }
      if (panel.infected(i, t) < 0) {
        out.push_back({Violation::Kind::negative_count, i, t,
                       "negative infected count " + std::to_string(panel.infected(i, t)) +
                           " in series '" + panel.labels[i] + "' at " +
                           format_date(panel.calendar[t])});
      }
    }
  }
  const auto step = step_of(panel.frequency);
  for (std::size_t t = 1; t < T; ++t) {
    const auto gap = panel.calendar[t] - panel.calendar[t - 1];
    if (gap <= std::chrono::days{0}) {
      out.push_back({Violation::Kind::calendar_order, std::nullopt, t,
                     "calendar not strictly increasing between " +
                         format_date(panel.calendar[t - 1]) + " and " +
                         format_date(panel.calendar[t])});
    } else if (gap != step) {
      out.push_back({Violation::Kind::calendar_gap, std::nullopt, t,
                     "calendar gap between " + format_date(panel.calendar[t - 1]) +
                         " and " + format_date(panel.calendar[t])});
    }
  }
  return out;
}

CovariateSeries covariate_transform(std::span<const std::int64_t> infected,
                                    int ma_window, int lag) {
  if (ma_window < 1 || lag < 1)
    throw DomainError("covariate_transform: ma_window and lag must be positive");
  const std::size_t w = static_cast<std::size_t>(ma_window);
  const std::size_t L = static_cast<std::size_t>(lag);
  if (infected.size() <= w + L)
    throw InputError("covariate_transform: series of length " +
                     std::to_string(infected.size()) + " is too short for window " +
                     std::to_string(w) + " and lag " + std::to_string(L));
  CovariateSeries out;
  out.value.assign(infected.size(), std::numeric_limits<double>::quiet_NaN());
  out.first_available = w + L - 1;
  for (std::size_t t = out.first_available; t < infected.size(); ++t) {
    const std::size_t end = t - L;  // last index of the moving average
    double sum = 0.0;
    for (std::size_t s = end + 1 - w; s <= end; ++s) {
      if (infected[s] < 0) throw InputError("covariate_transform: negative count");
      sum += static_cast<double>(infected[s]);
    }
    out.value[t] = std::log(std::max(kZeroCountGuard, sum / static_cast<double>(w)));
  }
  return out;
}

InfectedCovariate::InfectedCovariate(std::span<const std::int64_t> infected,
                                     int ma_window, int lag)
    : window_(ma_window), lag_(lag) {
  if (ma_window < 1 || lag < 1)
    throw DomainError("covariate: ma_window and lag must be positive");
  const std::size_t w = static_cast<std::size_t>(ma_window);
  log_ma_.assign(infected.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = w - 1; t < infected.size(); ++t) {
    double sum = 0.0;
    for (std::size_t s = t + 1 - w; s <= t; ++s) sum += static_cast<double>(infected[s]);
    log_ma_[t] = std::log(std::max(kZeroCountGuard, sum / static_cast<double>(w)));
  }
  first_target_ = w + static_cast<std::size_t>(lag) - 1;
}

std::size_t InfectedCovariate::source_index(std::size_t target, std::size_t origin) const {
  const std::size_t L = static_cast<std::size_t>(lag_);
  if (target < first_target_)
    throw DomainError("covariate requested before enough infected history");
  std::size_t idx = std::min(target - L, origin);
  if (idx + 1 < static_cast<std::size_t>(window_))
    throw DomainError("covariate origin precedes the first full moving-average window");
  if (idx >= log_ma_.size()) throw DomainError("covariate index beyond infected series");
  return idx;
}

double InfectedCovariate::value(std::size_t target, std::size_t origin) const {
  return log_ma_[source_index(target, origin)];
}

bool CovariateRecipe::uses_lag_y() const noexcept {
  return std::find(terms.begin(), terms.end(), CovariateTerm::lag_y) != terms.end();
}

CovariateRecipe CovariateRecipe::dglm_default() {
  return {{CovariateTerm::itilde, CovariateTerm::itilde_sq}};
}

CovariateRecipe CovariateRecipe::fmpr_default() {
  return {{CovariateTerm::itilde, CovariateTerm::itilde_sq, CovariateTerm::lag_y}};
}

CovariateRecipe CovariateRecipe::parse(const std::string& spec) {
  CovariateRecipe r;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty() || tok == "1" || tok == "intercept") continue;
    if (tok == "itilde") r.terms.push_back(CovariateTerm::itilde);
    else if (tok == "itilde_sq") r.terms.push_back(CovariateTerm::itilde_sq);
    else if (tok == "lag_y") r.terms.push_back(CovariateTerm::lag_y);
    else throw ConfigError("unknown covariate term '" + tok + "'");
  }
  return r;
}

std::vector<double> covariate_vector(const CovariateRecipe& recipe, double itilde,
                                     double itilde_center, double lag_y) {
  std::vector<double> x;
  x.reserve(recipe.dim());
  x.push_back(1.0);
  const double c = itilde - itilde_center;
  for (auto term : recipe.terms) {
    switch (term) {
      case CovariateTerm::itilde: x.push_back(c); break;
      case CovariateTerm::itilde_sq: x.push_back(c * c); break;
      case CovariateTerm::lag_y: x.push_back(lag_y); break;
    }
  }
  return x;
}

AgentPredictive::AgentPredictive(std::size_t n_, std::size_t J_, std::size_t T_,
                                 int horizon_, std::size_t offset_)
    : n(n_), J(J_), T(T_), horizon(horizon_), offset(offset_),
      m(n_ * J_ * T_, 0.0), s2(n_ * J_ * T_, 1.0), info_index(n_ * J_ * T_, -1) {
  for (std::size_t j = 0; j < J; ++j) agent_names.push_back("agent" + std::to_string(j + 1));
}

void AgentPredictive::check() const {
  if (horizon < 1) throw InputError("agent moments: horizon must be >= 1");
  if (m.size() != n * J * T || s2.size() != n * J * T)
    throw InputError("agent moments: storage does not match dimensions");
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!std::isfinite(m[k]) || !std::isfinite(s2[k]) || !(s2[k] > 0.0)) {
      const std::size_t t = k % T, j = (k / T) % J, i = k / (T * J);
      throw InputError("agent moments: invalid entry at series " + std::to_string(i) +
                       ", agent " + std::to_string(j) + ", time " + std::to_string(t));
    }
  }
}

AgentPredictive AgentPredictive::slice(std::size_t t0, std::size_t len) const {
  if (t0 + len > T) throw DomainError("agent moments: slice out of range");
  AgentPredictive out(n, J, len, horizon, offset + t0);
  out.agent_names = agent_names;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < len; ++t) {
        out.m[out.at(i, j, t)] = m[at(i, j, t0 + t)];
        out.s2[out.at(i, j, t)] = s2[at(i, j, t0 + t)];
        out.info_index[out.at(i, j, t)] = info_index[at(i, j, t0 + t)];
      }
  return out;
}

AgentPredictive AgentPredictive::select_series(std::span<const std::size_t> series) const {
  AgentPredictive out(series.size(), J, T, horizon, offset);
  out.agent_names = agent_names;
  for (std::size_t a = 0; a < series.size(); ++a) {
    const std::size_t i = series[a];
    if (i >= n) throw DomainError("agent moments: series index out of range");
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t) {
        out.m[out.at(a, j, t)] = m[at(i, j, t)];
        out.s2[out.at(a, j, t)] = s2[at(i, j, t)];
        out.info_index[out.at(a, j, t)] = info_index[at(i, j, t)];
      }
  }
  return out;
}

ThetaPrior ThetaPrior::equal_weights(std::size_t J) {
  ThetaPrior p;
  p.mean.assign(J + 1, J > 0 ? 1.0 / static_cast<double>(J) : 0.0);
  p.mean[0] = 0.0;
  p.cov_scale = 1.0;
  return p;
}

void SynthesisConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError("synthesis config: " + what); };
  if (!(a0 > 0.0)) bad("a0 must be > 0");
  if (!(r >= 1.0)) bad("r must be >= 1");
  if (!(delta_sigma > 0.0 && delta_sigma <= 1.0)) bad("delta_Sigma must be in (0, 1]");
  if (!(beta_tau > 0.0 && beta_tau <= 1.0)) bad("beta_tau must be in (0, 1]");
  if (!(variance_inflation > 0.0)) bad("variance_inflation must be > 0");
  if (!(gamma_prior_shape > 0.0) || !(gamma_prior_rate > 0.0))
    bad("precision prior shape and rate must be > 0");
  if (!(tau2_init > 0.0)) bad("tau2_init must be > 0");
  if (thin < 1) bad("thin must be >= 1");
  if (n_iter < 1) bad("n_iter must be >= 1");
  if (forecast_draws < 1) bad("forecast_draws must be >= 1");
  if (theta_prior && !(theta_prior->cov_scale > 0.0)) bad("theta prior scale must be > 0");
}

}  // namespace mbps
