#include "mbps/config.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mbps/error.hpp"

namespace mbps {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  for (char c : s + ",") {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!tok.empty()) out.push_back(tok);
      tok.clear();
    } else {
      tok += c;
    }
  }
  return out;
}

std::string recipe_string(const CovariateRecipe& r) {
  std::string out = "1";
  for (auto t : r.terms)
    out += t == CovariateTerm::itilde ? ",itilde" : t == CovariateTerm::itilde_sq ? ",itilde_sq" : ",lag_y";
  return out;
}

// Reads a section and tracks which keys were consumed so that typos are
// reported instead of silently ignored.
class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }
  std::string raw(const std::string& key) {
    used_.insert(key);
    return trim(tree_->get<std::string>(key));
  }
  void str(const std::string& key, std::string& v) {
    if (has(key)) v = raw(key);
  }
  void real(const std::string& key, double& v) {
    if (has(key)) v = parse_double(raw(key), where(key));
  }
  template <class Int>
  void integer(const std::string& key, Int& v) {
    if (!has(key)) return;
    const auto x = parse_integer(raw(key), where(key));
    if (x < 0 && !std::is_signed_v<Int>) throw ConfigError(where(key) + ": must be non-negative");
    v = static_cast<Int>(x);
  }
  void flag(const std::string& key, bool& v) {
    if (!has(key)) return;
    const auto s = raw(key);
    if (s == "true" || s == "1" || s == "yes") v = true;
    else if (s == "false" || s == "0" || s == "no") v = false;
    else throw ConfigError(where(key) + ": expected true or false, got '" + s + "'");
  }
  void reals(const std::string& key, std::vector<double>& v) {
    if (!has(key)) return;
    v.clear();
    for (const auto& tok : split_list(raw(key))) v.push_back(parse_double(tok, where(key)));
  }
  void ints(const std::string& key, std::vector<int>& v) {
    if (!has(key)) return;
    v.clear();
    for (const auto& tok : split_list(raw(key)))
      v.push_back(static_cast<int>(parse_integer(tok, where(key))));
  }
  void words(const std::string& key, std::vector<std::string>& v) {
    if (has(key)) v = split_list(raw(key));
  }
  std::string where(const std::string& key) const { return "config [" + name_ + "] " + key; }
  void finish() const {
    if (!tree_) return;
    for (const auto& kv : *tree_)
      if (!used_.count(kv.first))
        throw ConfigError("config [" + name_ + "]: unknown key '" + kv.first + "'");
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
  std::set<std::string> used_;
};

// Config parse and number errors carry the key; rethrow InputError from the
// number parsers as ConfigError.
template <class F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

int BacktestPlan::max_horizon() const {
  return horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end());
}

bool BacktestPlan::runs(const std::string& model) const {
  return std::find(models.begin(), models.end(), model) != models.end();
}

void BacktestPlan::validate(std::size_t total_length) const {
  if (fit_window < 2) throw ConfigError("plan: fit_window must be at least 2");
  if (prediction_span < 1) throw ConfigError("plan: prediction_span must be at least 1");
  if (agent_warmup + fit_window + prediction_span > total_length)
    throw ConfigError("plan: agent_warmup + fit_window + prediction_span = " +
                      std::to_string(agent_warmup + fit_window + prediction_span) +
                      " exceeds the panel length " + std::to_string(total_length));
  if (horizons.empty()) throw ConfigError("plan: no horizons");
  std::set<int> seen;
  for (int s : horizons) {
    if (s < 1 || static_cast<std::size_t>(s) > prediction_span)
      throw ConfigError("plan: horizon " + std::to_string(s) + " outside [1, prediction_span]");
    if (!seen.insert(s).second) throw ConfigError("plan: duplicate horizon " + std::to_string(s));
  }
  if (models.empty()) throw ConfigError("plan: no models");
  static const std::set<std::string> known{"bps", "mbps", "mbpsh", "fmpr", "dglm", "gam", "inar", "sihr"};
  for (const auto& m : models)
    if (!known.count(m)) throw ConfigError("plan: unknown model '" + m + "'");
  if (!runs(reference)) throw ConfigError("plan: reference model '" + reference + "' is not in models");
}

void SimulationConfig::validate() const {
  if (n < 1 || length < 4) throw ConfigError("simulate: need n >= 1 and length >= 4");
  if (clusters < 1 || clusters > n) throw ConfigError("simulate: clusters must be in [1, n]");
  if (agents < 1) throw ConfigError("simulate: agents must be >= 1");
  if (!(weight_walk_sd >= 0.0) || !(tau2 >= 0.0) || !(moment_var > 0.0) || !(agent_bias_sd >= 0.0) ||
      !(agent_noise_sd >= 0.0))
    throw ConfigError("simulate: variances must be non-negative (moment_var positive)");
  if (horizons.empty()) throw ConfigError("simulate: no horizons");
  for (int s : horizons)
    if (s < 1) throw ConfigError("simulate: horizons must be >= 1");
  if (!parse_date(start_date)) throw ConfigError("simulate: bad start_date '" + start_date + "'");
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  apply_seed(c, c.seed);
  return c;
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.synthesis.seed = Rng::derive(seed, {1});
  c.agents.seed = Rng::derive(seed, {2});
  c.fmpr.seed = Rng::derive(seed, {3});
  c.simulation.seed = Rng::derive(seed, {4});
}

std::filesystem::path RunConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

void RunConfig::validate() const {
  synthesis.validate();
  agents.validate();
  simulation.validate();
  if (agent_predictive_draws < 1 || fmpr_draws < 1) throw ConfigError("predictive draws must be >= 1");
  if (fmpr.n_iter < 1 || fmpr.thin < 1 || !(fmpr.a0 > 0.0) || !(fmpr.prior_var > 0.0) || !(fmpr.r >= 1.0))
    throw ConfigError("fmpr: invalid sampler settings");
  if (schema.frequency && *schema.frequency != frequency)
    throw ConfigError("data: schema frequency disagrees with the run frequency");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["run"] = {{"seed", seed}, {"frequency", to_string(frequency)}};
  j["data"] = {{"panel", panel_path},
               {"moments", moments_path},
               {"delimiter", std::string(1, schema.delimiter)},
               {"date_column", schema.date_column},
               {"region_column", schema.region_column},
               {"count_column", schema.count_column},
               {"infected_column", schema.infected_column}};
  j["plan"] = {{"agent_warmup", plan.agent_warmup},
               {"fit_window", plan.fit_window},
               {"prediction_span", plan.prediction_span},
               {"horizons", plan.horizons},
               {"refit_policy", "expanding_refit_each_step"},
               {"models", plan.models},
               {"reference", plan.reference}};
  const auto& s = synthesis;
  nlohmann::ordered_json syn = {{"K", s.K},
                                {"a0", s.a0},
                                {"r", s.r},
                                {"delta_sigma", s.delta_sigma},
                                {"beta_tau", s.beta_tau},
                                {"gamma_prior_shape", s.gamma_prior_shape},
                                {"gamma_prior_rate", s.gamma_prior_rate},
                                {"tau2_init", s.tau2_init},
                                {"n_iter", s.n_iter},
                                {"n_burn", s.n_burn},
                                {"thin", s.thin},
                                {"seed", s.seed},
                                {"variance_inflation", s.variance_inflation},
                                {"pg_normal_threshold", s.pg_normal_threshold},
                                {"kmeans_groups", s.kmeans_groups},
                                {"forecast_draws", s.forecast_draws}};
  if (s.theta_prior) {
    syn["m0"] = s.theta_prior->mean;
    syn["C0_scale"] = s.theta_prior->cov_scale;
  } else {
    syn["m0"] = "equal_weights";
  }
  j["synthesis"] = syn;
  nlohmann::ordered_json ag = {{"ma_window", agents.ma_window},
                               {"lag", agents.lag},
                               {"population", agents.population},
                               {"default_population", agents.default_population},
                               {"sihr_window", agents.sihr_window},
                               {"sihr_substeps", agents.sihr_substeps},
                               {"gam_basis", agents.gam.n_basis},
                               {"gam_grid", agents.gam.grid_size},
                               {"gam_log10_lambda_lo", agents.gam.log10_lambda_lo},
                               {"gam_log10_lambda_hi", agents.gam.log10_lambda_hi},
                               {"dglm_prior_var", agents.dglm_prior_var},
                               {"seed", agents.seed},
                               {"predictive_draws", agent_predictive_draws}};
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& a : agents.agents)
    list.push_back({{"kind", to_string(a.kind)},
                    {"recipe", recipe_string(a.recipe)},
                    {"discount", a.discount},
                    {"bootstrap_reps", a.bootstrap_reps}});
  ag["agents"] = list;
  j["agents"] = ag;
  j["fmpr"] = {{"K", fmpr.K},           {"a0", fmpr.a0},         {"prior_var", fmpr.prior_var},
               {"r", fmpr.r},           {"n_iter", fmpr.n_iter}, {"n_burn", fmpr.n_burn},
               {"thin", fmpr.thin},     {"seed", fmpr.seed},     {"draws", fmpr_draws},
               {"pg_normal_threshold", fmpr.pg.normal_threshold}};
  const auto& m = simulation;
  j["simulate"] = {{"n", m.n},
                   {"length", m.length},
                   {"clusters", m.clusters},
                   {"agents", m.agents},
                   {"intercept_separation", m.intercept_separation},
                   {"weight_walk_sd", m.weight_walk_sd},
                   {"tau2", m.tau2},
                   {"moment_var", m.moment_var},
                   {"agent_bias_sd", m.agent_bias_sd},
                   {"agent_noise_sd", m.agent_noise_sd},
                   {"horizons", m.horizons},
                   {"start_date", m.start_date},
                   {"frequency", to_string(m.frequency)},
                   {"seed", m.seed}};
  return j;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> sections{"run",        "data",       "plan",        "synthesis",
                                              "agents",     "agent.dglm", "agent.gam",   "agent.inar",
                                              "agent.sihr", "fmpr",       "simulate"};
  for (const auto& kv : tree) {
    if (!sections.count(kv.first))
      throw ConfigError("config: unknown section [" + kv.first + "]");
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  RunConfig c;
  c.base_dir = base_dir;
  as_config_error([&] {
    auto run = section("run");
    std::string freq = "weekly";
    run.str("frequency", freq);
    c.frequency = parse_frequency(freq);
    std::uint64_t seed = c.seed;
    run.integer("seed", seed);
    run.finish();

    c.agents = AgentSettings::defaults(c.frequency);
    apply_seed(c, seed);

    auto data = section("data");
    data.str("panel", c.panel_path);
    data.str("moments", c.moments_path);
    if (data.has("delimiter")) {
      std::string d = data.raw("delimiter");
      if (d == "tab" || d == "\\t") d = "\t";
      if (d.size() != 1) throw ConfigError(data.where("delimiter") + ": must be one character");
      c.schema.delimiter = d[0];
    }
    data.str("date_column", c.schema.date_column);
    data.str("region_column", c.schema.region_column);
    data.str("count_column", c.schema.count_column);
    data.str("infected_column", c.schema.infected_column);
    c.schema.frequency = c.frequency;
    data.finish();

    auto plan = section("plan");
    plan.integer("agent_warmup", c.plan.agent_warmup);
    plan.integer("fit_window", c.plan.fit_window);
    plan.integer("prediction_span", c.plan.prediction_span);
    plan.ints("horizons", c.plan.horizons);
    if (plan.has("refit_policy") && plan.raw("refit_policy") != "expanding_refit_each_step")
      throw ConfigError(plan.where("refit_policy") + ": only expanding_refit_each_step is supported");
    plan.words("models", c.plan.models);
    plan.str("reference", c.plan.reference);
    plan.finish();

    auto syn = section("synthesis");
    auto& s = c.synthesis;
    syn.integer("K", s.K);
    syn.real("a0", s.a0);
    syn.real("r", s.r);
    syn.real("delta_sigma", s.delta_sigma);
    syn.real("beta_tau", s.beta_tau);
    if (syn.has("m0") || syn.has("C0_scale")) {
      ThetaPrior tp;
      syn.reals("m0", tp.mean);
      syn.real("C0_scale", tp.cov_scale);
      if (tp.mean.empty()) throw ConfigError(syn.where("m0") + ": required with C0_scale");
      s.theta_prior = tp;
    }
    syn.real("gamma_prior_shape", s.gamma_prior_shape);
    syn.real("gamma_prior_rate", s.gamma_prior_rate);
    syn.real("tau2_init", s.tau2_init);
    syn.integer("n_iter", s.n_iter);
    syn.integer("n_burn", s.n_burn);
    syn.integer("thin", s.thin);
    syn.integer("seed", s.seed);
    syn.real("variance_inflation", s.variance_inflation);
    syn.real("pg_normal_threshold", s.pg_normal_threshold);
    syn.integer("kmeans_groups", s.kmeans_groups);
    syn.integer("forecast_draws", s.forecast_draws);
    syn.finish();

    auto ag = section("agents");
    auto& a = c.agents;
    if (ag.has("list")) {
      std::vector<std::string> names;
      ag.words("list", names);
      const AgentSpec proto = a.agents.front();
      a.agents.clear();
      for (const auto& nm : names) {
        AgentSpec spec = proto;
        spec.kind = parse_agent_kind(nm);
        a.agents.push_back(spec);
      }
    }
    std::optional<double> discount;
    if (ag.has("discount")) ag.real("discount", discount.emplace());
    std::optional<int> reps;
    if (ag.has("bootstrap_reps")) ag.integer("bootstrap_reps", reps.emplace());
    std::string recipe;
    ag.str("recipe", recipe);
    for (auto& spec : a.agents) {
      if (discount) spec.discount = *discount;
      if (reps) spec.bootstrap_reps = *reps;
      if (!recipe.empty()) spec.recipe = CovariateRecipe::parse(recipe);
    }
    ag.integer("ma_window", a.ma_window);
    ag.integer("lag", a.lag);
    ag.reals("population", a.population);
    ag.real("default_population", a.default_population);
    ag.integer("sihr_window", a.sihr_window);
    ag.integer("sihr_substeps", a.sihr_substeps);
    ag.integer("gam_basis", a.gam.n_basis);
    ag.integer("gam_grid", a.gam.grid_size);
    ag.real("gam_log10_lambda_lo", a.gam.log10_lambda_lo);
    ag.real("gam_log10_lambda_hi", a.gam.log10_lambda_hi);
    ag.real("dglm_prior_var", a.dglm_prior_var);
    ag.integer("seed", a.seed);
    ag.integer("predictive_draws", c.agent_predictive_draws);
    ag.finish();

    for (auto& spec : a.agents) {
      auto per = section(std::string("agent.") + to_string(spec.kind));
      per.real("discount", spec.discount);
      per.integer("bootstrap_reps", spec.bootstrap_reps);
      std::string r;
      per.str("recipe", r);
      if (!r.empty()) spec.recipe = CovariateRecipe::parse(r);
      per.finish();
    }
    for (const char* kind : {"dglm", "gam", "inar", "sihr"}) {
      const bool listed = std::any_of(a.agents.begin(), a.agents.end(),
                                      [&](const AgentSpec& x) { return std::string(to_string(x.kind)) == kind; });
      if (!listed && tree.find(std::string("agent.") + kind) != tree.not_found())
        throw ConfigError(std::string("config: [agent.") + kind + "] given but the agent is not listed");
    }

    auto fm = section("fmpr");
    fm.integer("K", c.fmpr.K);
    fm.real("a0", c.fmpr.a0);
    fm.real("prior_var", c.fmpr.prior_var);
    fm.real("r", c.fmpr.r);
    fm.integer("n_iter", c.fmpr.n_iter);
    fm.integer("n_burn", c.fmpr.n_burn);
    fm.integer("thin", c.fmpr.thin);
    fm.integer("seed", c.fmpr.seed);
    fm.integer("draws", c.fmpr_draws);
    fm.real("pg_normal_threshold", c.fmpr.pg.normal_threshold);
    fm.finish();

    auto sim = section("simulate");
    auto& m = c.simulation;
    sim.integer("n", m.n);
    sim.integer("length", m.length);
    sim.integer("clusters", m.clusters);
    sim.integer("agents", m.agents);
    sim.real("intercept_separation", m.intercept_separation);
    sim.real("weight_walk_sd", m.weight_walk_sd);
    sim.real("tau2", m.tau2);
    sim.real("moment_var", m.moment_var);
    sim.real("agent_bias_sd", m.agent_bias_sd);
    sim.real("agent_noise_sd", m.agent_noise_sd);
    sim.ints("horizons", m.horizons);
    sim.str("start_date", m.start_date);
    std::string sf;
    sim.str("frequency", sf);
    m.frequency = sf.empty() ? c.frequency : parse_frequency(sf);
    sim.integer("seed", m.seed);
    sim.finish();
  });
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
  } catch (const ConfigError& e) {
    throw ConfigError(path.filename().string() + ": " + e.what());
  }
}

}  // namespace mbps
