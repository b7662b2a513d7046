#include "mbps/backtest.hpp"

#include <cctype>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "mbps/agents.hpp"
#include "mbps/clustering.hpp"
#include "mbps/error.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/report.hpp"
#include "mbps/synthesis.hpp"

namespace mbps {

namespace {

constexpr const char* kManifestFormat = "mbps-run/1";

std::uint64_t variant_tag(Variant v) {
  switch (v) {
    case Variant::bps: return 1;
    case Variant::mbps: return 2;
    case Variant::mbpsh: return 3;
  }
  return 0;
}

// plan and report name of a synthesis variant
std::string model_name(Variant v) {
  std::string s = to_string(v);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

ForecastCell make_cell(const std::string& model, int s, std::size_t i, std::size_t origin,
                       const CountPanel& panel, const ForecastDistribution& fd, std::int64_t info) {
  ForecastCell c;
  c.model = model;
  c.horizon = s;
  c.series = i;
  c.origin = origin;
  c.actual = panel.y(i, c.target());
  c.mean = fd.mean;
  c.median = fd.median;
  c.lower = fd.lower;
  c.upper = fd.upper;
  c.log_pmf = fd.log_pmf(c.actual);
  c.info_index = info;
  return c;
}

struct Diagnostics {
  Table alive{{"variant", "horizon", "origin", "origin_date", "mean_alive", "min_alive", "max_alive"}, {}};
  Table clusters{{"variant", "horizon", "origin", "origin_date", "region", "cluster"}, {}};
  Table cocluster{{"variant", "horizon", "origin_date", "region_a", "region_b", "value"}, {}};
  Table r2{{"variant", "horizon", "origin", "origin_date", "agent", "r2", "collinear_share"}, {}};
  Table paired{{"variant", "horizon", "origin", "origin_date", "agent_a", "agent_b", "value"}, {}};
};

class Runner {
 public:
  Runner(const CountPanel& panel, const RunConfig& cfg, const BacktestOptions& opt)
      : panel_(panel), cfg_(cfg), plan_(cfg.plan), opt_(opt) {}

  BacktestResult result;
  MomentTable moments;
  Diagnostics diag;

  void note(const std::string& msg) const {
    if (opt_.progress) opt_.progress(msg);
  }

  std::size_t last_origin(int s) const { return plan_.first_origin() + plan_.steps(s) - 1; }

  void fail(std::string stage, int s, std::size_t origin, std::string series, const Error& e) {
    result.failures.push_back(
        {std::move(stage), s, origin, std::move(series), to_string(e.kind()), e.what()});
  }

  void use_external(const MomentTable& external) {
    for (int s : plan_.horizons) {
      const auto it = external.find(s);
      if (it == external.end())
        throw InputError("external moments: no entries for horizon " + std::to_string(s));
      if (it->second.n != panel_.n() || it->second.T != panel_.length())
        throw InputError("external moments do not match the panel shape");
      moments.emplace(s, it->second);
    }
    for (const auto& m : plan_.models)
      if (m == "dglm" || m == "gam" || m == "inar" || m == "sihr")
        throw ConfigError("plan: model '" + m + "' needs the panel agents, but external moments were given");
  }

  void run_agents() {
    AgentSettings settings = cfg_.agents;
    const std::size_t n = panel_.n(), T = panel_.length();
    if (!settings.population.empty() && settings.population.size() != n)
      throw ConfigError("agents: population lists " + std::to_string(settings.population.size()) +
                        " values for " + std::to_string(n) + " series");
    const int smax = plan_.max_horizon();
    const std::size_t start = plan_.agent_warmup >= static_cast<std::size_t>(smax)
                                  ? plan_.agent_warmup - static_cast<std::size_t>(smax)
                                  : 0;
    if (plan_.agent_warmup < static_cast<std::size_t>(smax) || start < earliest_origin(settings))
      throw ConfigError("plan: agent_warmup " + std::to_string(plan_.agent_warmup) + " minus the longest horizon " +
                        std::to_string(smax) + " is before the earliest agent origin " +
                        std::to_string(earliest_origin(settings)));

    std::vector<std::size_t> scored;  // agent index per plan model
    std::vector<std::string> scored_names;
    for (const auto& m : plan_.models) {
      if (m != "dglm" && m != "gam" && m != "inar" && m != "sihr") continue;
      const auto it = std::find_if(settings.agents.begin(), settings.agents.end(),
                                   [&](const AgentSpec& a) { return m == to_string(a.kind); });
      if (it == settings.agents.end())
        throw ConfigError("plan: model '" + m + "' is not among the configured agents");
      scored.push_back(static_cast<std::size_t>(it - settings.agents.begin()));
      scored_names.push_back(m);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int s : plan_.horizons) {
      AgentPredictive ap(n, settings.agents.size(), T, s);
      for (std::size_t j = 0; j < settings.agents.size(); ++j) ap.agent_names[j] = to_string(settings.agents[j].kind);
      std::fill(ap.m.begin(), ap.m.end(), nan);
      std::fill(ap.s2.begin(), ap.s2.end(), nan);
      moments.emplace(s, std::move(ap));
    }

    const std::size_t o0 = plan_.first_origin(), o_last = last_origin(1);
    for (std::size_t i = 0; i < n; ++i) {
      note("agents: series " + panel_.labels[i]);
      for (std::size_t o = start; o + 1 < T; ++o) {
        const bool predictive = !scored.empty() && o >= o0 && o <= o_last;
        OriginForecast f;
        try {
          f = forecast_from_origin(panel_, i, o, smax, settings, predictive ? cfg_.agent_predictive_draws : 0);
        } catch (const Error& e) {
          fail("agents", 0, o, panel_.labels[i], e);
          continue;
        }
        for (auto& [s, ap] : moments) {
          const std::size_t t = o + static_cast<std::size_t>(s);
          if (t >= T) continue;
          for (std::size_t j = 0; j < ap.J; ++j) {
            ap.mean(i, j, t) = f.moments[j][static_cast<std::size_t>(s - 1)].mean;
            ap.var(i, j, t) = f.moments[j][static_cast<std::size_t>(s - 1)].var;
            ap.info_index[ap.at(i, j, t)] = f.info_index;
          }
        }
        if (!predictive) continue;
        for (int s : plan_.horizons) {
          if (o > last_origin(s)) continue;
          for (std::size_t a = 0; a < scored.size(); ++a)
            result.cells.push_back(make_cell(scored_names[a], s, i, o, panel_,
                                             f.predictive[scored[a]][static_cast<std::size_t>(s - 1)],
                                             f.info_index));
        }
      }
    }
  }

  void run_fmpr() {
    const int smax = plan_.max_horizon();
    for (std::size_t o = plan_.first_origin(); o <= last_origin(1); ++o) {
      note("fmpr: origin " + format_date(panel_.calendar[o]));
      FmprForecast f;
      try {
        f = fmpr_forecast_from_origin(panel_, o, smax, cfg_.agents, cfg_.fmpr, cfg_.fmpr_draws);
      } catch (const Error& e) {
        fail("fmpr", 0, o, "", e);
        continue;
      }
      for (int s : plan_.horizons) {
        if (o > last_origin(s)) continue;
        for (std::size_t i = 0; i < panel_.n(); ++i)
          result.cells.push_back(make_cell("fmpr", s, i, o, panel_, f.predictive[i][static_cast<std::size_t>(s - 1)],
                                           f.info_index));
      }
    }
  }

  void run_synthesis(Variant v) {
    const std::string name = model_name(v);
    const std::size_t n = panel_.n(), W = plan_.agent_warmup;
    for (int s : plan_.horizons) {
      const AgentPredictive& all = moments.at(s);
      for (std::size_t o = plan_.first_origin(); o <= last_origin(s); ++o) {
        note(name + ": horizon " + std::to_string(s) + ", origin " + format_date(panel_.calendar[o]));
        try {
          step(v, s, o, all, W, n);
        } catch (const Error& e) {
          fail(name, s, o, "", e);
        }
      }
    }
  }

 private:
  // Largest data index behind the fit window moments and the target moments.
  static std::int64_t info_of(const AgentPredictive& window, const AgentPredictive& all, std::size_t i,
                              std::size_t target, std::int64_t y_end) {
    std::int64_t info = y_end;
    for (std::size_t j = 0; j < window.J; ++j) {
      for (std::size_t t = 0; t < window.T; ++t) info = std::max(info, window.info_index[window.at(i, j, t)]);
      info = std::max(info, all.info_index[all.at(i, j, target)]);
    }
    return info;
  }

  void target_moments(const AgentPredictive& all, std::size_t i, std::size_t target, std::vector<double>& m,
                      std::vector<double>& s2) const {
    m.resize(all.J);
    s2.resize(all.J);
    for (std::size_t j = 0; j < all.J; ++j) {
      m[j] = all.mean(i, j, target);
      s2[j] = all.var(i, j, target) * cfg_.synthesis.variance_inflation;
      if (!std::isfinite(m[j]) || !(s2[j] > 0.0) || !std::isfinite(s2[j]))
        throw InputError("agent moments missing for series '" + panel_.labels[i] + "' at " +
                         format_date(panel_.calendar[target]));
    }
  }

  void step(Variant v, int s, std::size_t o, const AgentPredictive& all, std::size_t W, std::size_t n) {
    const std::size_t L = o - W + 1, target = o + static_cast<std::size_t>(s);
    const AgentPredictive window = all.slice(W, L);
    Grid<std::int64_t> yw(n, L);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < L; ++t) yw(i, t) = panel_.y(i, W + t);

    SynthesisConfig sc = cfg_.synthesis;
    sc.seed = Rng::derive(cfg_.synthesis.seed, {variant_tag(v), static_cast<std::uint64_t>(s), o});
    std::vector<double> m, s2;
    const std::string name = model_name(v);
    const std::int64_t y_end = static_cast<std::int64_t>(o);

    if (v == Variant::bps) {
      std::vector<ForecastCell> cells;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick[] = {i};
        Grid<std::int64_t> yi(1, L);
        for (std::size_t t = 0; t < L; ++t) yi(0, t) = yw(i, t);
        const auto in = make_input(yi, window.select_series(pick), sc.variance_inflation);
        SynthesisConfig si = sc;
        si.K = 1;
        si.seed = Rng::derive(sc.seed, {i});
        const auto draws = run_sampler(in, si, v);
        Rng rng(Rng::derive(si.seed, {0xF0}));
        target_moments(all, i, target, m, s2);
        const auto fd = predictive_simulate(rng, draws, 0, s, m, s2, sc.forecast_draws);
        cells.push_back(make_cell(name, s, i, o, panel_, fd, info_of(window, all, i, target, y_end)));
      }
      result.cells.insert(result.cells.end(), cells.begin(), cells.end());
      return;
    }

    const auto in = make_input(yw, window, sc.variance_inflation);
    SamplerOptions opt;
    opt.keep_latent = true;
    const auto draws = run_sampler(in, sc, v, opt);
    Rng rng(Rng::derive(sc.seed, {0xF0}));
    for (std::size_t i = 0; i < n; ++i) {
      target_moments(all, i, target, m, s2);
      const auto fd = predictive_simulate(rng, draws, i, s, m, s2, sc.forecast_draws);
      result.cells.push_back(make_cell(name, s, i, o, panel_, fd, info_of(window, all, i, target, y_end)));
    }
    record_diagnostics(name, s, o, draws, window.agent_names);
  }

  void record_diagnostics(const std::string& name, int s, std::size_t o, const DrawCollection& draws,
                          const std::vector<std::string>& agents) {
    const std::string hs = std::to_string(s), os = std::to_string(o), od = format_date(panel_.calendar[o]);
    const std::size_t n = draws.n, J = draws.J, T = draws.T;

    double sum = 0;
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    const std::size_t burn = cfg_.synthesis.n_burn;
    for (std::size_t k = burn; k < draws.alive_per_scan.size(); ++k) {
      const std::size_t a = draws.alive_per_scan[k];
      sum += static_cast<double>(a);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    const double kept = static_cast<double>(draws.alive_per_scan.size() - burn);
    diag.alive.rows.push_back({name, hs, os, od, format_double(sum / kept), std::to_string(lo), std::to_string(hi)});

    const auto z = draws.assignments();
    const auto rep = canonical_labels(z[representative_draw(z)]);
    for (std::size_t i = 0; i < n; ++i)
      diag.clusters.rows.push_back({name, hs, os, od, panel_.labels[i], std::to_string(rep[i])});
    if (o == last_origin(s)) {
      const Eigen::MatrixXd cc = coclustering_mean(z);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          diag.cocluster.rows.push_back({name, hs, od, panel_.labels[a], panel_.labels[b],
                                         format_double(cc(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)))});
    }

    // factor redundancy at the last time of the window, averaged over series
    if (J < 2 || draws.draws.size() < J + 2) return;
    std::vector<double> r2(J, 0.0), collinear(J, 0.0);
    Eigen::MatrixXd paired = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    Eigen::MatrixXd f(static_cast<Eigen::Index>(draws.draws.size()), static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < draws.draws.size(); ++d)
        for (std::size_t j = 0; j < J; ++j)
          f(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = draws.draws[d].fac(i, j, T - 1);
      const auto res = mc_empirical_r2(f);
      for (std::size_t j = 0; j < J; ++j) {
        r2[j] += res.r2[j] / static_cast<double>(n);
        collinear[j] += (res.collinear[j] ? 1.0 : 0.0) / static_cast<double>(n);
      }
      paired += res.paired / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < J; ++j) {
      diag.r2.rows.push_back({name, hs, os, od, agents[j], format_double(r2[j]), format_double(collinear[j])});
      for (std::size_t b = 0; b < J; ++b)
        if (b != j)
          diag.paired.rows.push_back({name, hs, os, od, agents[j], agents[b],
                                      format_double(paired(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)))});
    }
  }

  const CountPanel& panel_;
  const RunConfig& cfg_;
  const BacktestPlan& plan_;
  const BacktestOptions& opt_;
};

Table forecast_table(const std::vector<ForecastCell>& cells, const CountPanel& panel) {
  Table t;
  t.header = {"model",  "horizon", "region", "origin", "origin_date", "target", "target_date",
              "actual", "mean",    "median", "lower",  "upper",       "log_pmf", "info_index"};
  for (const auto& c : cells)
    t.rows.push_back({c.model, std::to_string(c.horizon), panel.labels[c.series], std::to_string(c.origin),
                      format_date(panel.calendar[c.origin]), std::to_string(c.target()),
                      format_date(panel.calendar[c.target()]), std::to_string(c.actual), format_double(c.mean),
                      format_double(c.median), std::to_string(c.lower), std::to_string(c.upper),
                      format_double(c.log_pmf), std::to_string(c.info_index)});
  return t;
}

Table profile_table(const CountPanel& panel) {
  Table t;
  t.header = {"region", "log_mean", "mean_abs_change", "skipped"};
  for (std::size_t i = 0; i < panel.n(); ++i) {
    std::vector<double> y(panel.y.row(i).begin(), panel.y.row(i).end());
    const auto p = series_profile(y);
    t.rows.push_back({panel.labels[i], format_double(p.log_mean), format_double(p.mean_abs_change),
                      std::to_string(p.skipped)});
  }
  return t;
}

}  // namespace

BacktestResult run_backtest(const CountPanel& panel, const RunConfig& cfg,
                            const std::optional<MomentTable>& external, const std::filesystem::path& run_dir,
                            const BacktestOptions& opt) {
  cfg.validate();
  const auto& plan = cfg.plan;
  plan.validate(panel.length());
  if (panel.frequency != cfg.frequency)
    throw ConfigError(std::string("panel frequency is ") + to_string(panel.frequency) + " but the config says " +
                      to_string(cfg.frequency));
  const auto violations = validate_panel(panel);
  if (!violations.empty()) {
    std::string msg = "panel fails validation (" + std::to_string(violations.size()) + " violations): ";
    msg += violations.front().message;
    throw InputError(msg);
  }

  // hash inputs before any output is written so that a run directory inside
  // the input tree cannot change them
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& f : opt.inputs) {
    const std::string content = read_file(f.path);
    inputs.push_back({{"role", f.role},
                      {"name", f.path.filename().string()},
                      {"bytes", content.size()},
                      {"sha1", git_blob_sha1(content)}});
  }

  Runner run(panel, cfg, opt);
  if (external) {
    run.use_external(*external);
  } else {
    run.run_agents();
  }
  if (plan.runs("fmpr")) run.run_fmpr();
  for (Variant v : {Variant::bps, Variant::mbps, Variant::mbpsh})
    if (plan.runs(model_name(v))) run.run_synthesis(v);

  auto& cells = run.result.cells;
  std::map<std::string, std::size_t> rank;
  for (std::size_t k = 0; k < plan.models.size(); ++k) rank[plan.models[k]] = k;
  std::stable_sort(cells.begin(), cells.end(), [&](const ForecastCell& a, const ForecastCell& b) {
    return std::tie(rank[a.model], a.horizon, a.series, a.origin) <
           std::tie(rank[b.model], b.horizon, b.series, b.origin);
  });

  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create run directory '" + run_dir.string() + "': " + ec.message());
  const std::vector<std::pair<std::string, std::string>> files{
      {"forecasts.csv", format_table(forecast_table(cells, panel))},
      {"agent_moments.csv", format_moments(run.moments, panel)},
      {"alive.csv", format_table(run.diag.alive)},
      {"clusters.csv", format_table(run.diag.clusters)},
      {"coclustering.csv", format_table(run.diag.cocluster)},
      {"r2.csv", format_table(run.diag.r2)},
      {"paired_r2.csv", format_table(run.diag.paired)},
      {"profiles.csv", format_table(profile_table(panel))},
  };
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
  for (const auto& [name, content] : files) {
    write_file(run_dir / name, content);
    outputs.push_back({{"name", name}, {"sha1", git_blob_sha1(content)}});
  }

  nlohmann::ordered_json m;
  m["format"] = kManifestFormat;
  m["status"] = run.result.complete() ? "complete" : "partial";
  m["seed"] = cfg.seed;
  m["inputs"] = inputs;
  m["panel"] = {{"series", panel.n()},
                {"length", panel.length()},
                {"frequency", to_string(panel.frequency)},
                {"first_date", format_date(panel.calendar.front())},
                {"last_date", format_date(panel.calendar.back())},
                {"labels", panel.labels}};
  m["moments_source"] = external ? "external" : "agents";
  m["config"] = cfg.to_json();
  nlohmann::ordered_json steps = nlohmann::ordered_json::object();
  for (int s : plan.horizons)
    steps[std::to_string(s)] = {{"first_origin", plan.first_origin()},
                                {"last_origin", plan.first_origin() + plan.steps(s) - 1},
                                {"cells_per_model", plan.steps(s) * panel.n()}};
  m["steps"] = steps;
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : run.result.failures)
    failures.push_back({{"stage", f.stage},
                        {"horizon", f.horizon},
                        {"origin", f.origin},
                        {"origin_date", format_date(panel.calendar[f.origin])},
                        {"series", f.series},
                        {"kind", f.kind},
                        {"message", f.message}});
  m["failures"] = failures;
  m["outputs"] = outputs;
  nlohmann::ordered_json jc = nlohmann::ordered_json::array();
  for (const auto& c : cells)
    jc.push_back({{"model", c.model},
                  {"horizon", c.horizon},
                  {"region", panel.labels[c.series]},
                  {"target", c.target()},
                  {"target_date", format_date(panel.calendar[c.target()])},
                  {"info_index", c.info_index},
                  {"info_date", c.info_index >= 0 ? format_date(panel.calendar[static_cast<std::size_t>(c.info_index)])
                                                  : std::string("none")}});
  m["cells"] = jc;
  const auto findings = audit_manifest(m);
  m["audit"] = {{"rule", "info_index <= target - horizon"},
                {"cells_checked", cells.size()},
                {"violations", findings.size()}};
  write_file(run_dir / "manifest.json", m.dump(1) + "\n");

  emit_reports(run_dir, run_dir / "report");
  return std::move(run.result);
}

std::vector<AuditFinding> audit_manifest(const nlohmann::ordered_json& manifest) {
  std::vector<AuditFinding> out;
  if (!manifest.contains("cells") || !manifest["cells"].is_array())
    throw InputError("manifest: no forecast cells recorded");
  for (const auto& c : manifest["cells"]) {
    const std::int64_t target = c.at("target").get<std::int64_t>();
    const int s = c.at("horizon").get<int>();
    const std::int64_t info = c.at("info_index").get<std::int64_t>();
    // an unknown source (-1) is not evidence of leakage, but it is not
    // evidence of its absence either
    if (info > target - s || info < 0)
      out.push_back({c.at("model").get<std::string>(), s, c.at("region").get<std::string>(),
                     c.at("target_date").get<std::string>(), info, target - s});
  }
  return out;
}

nlohmann::ordered_json read_manifest(const std::filesystem::path& run_dir) {
  const std::string text = read_file(run_dir / "manifest.json");
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest.json: " + std::string(e.what()));
  }
}

}  // namespace mbps
