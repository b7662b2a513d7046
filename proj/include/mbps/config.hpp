#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbps/agents.hpp"
#include "mbps/domain.hpp"
#include "mbps/io.hpp"
#include "mbps/synthesis.hpp"

namespace mbps {

enum class RefitPolicy { expanding_refit_each_step };

/// Index conventions: the agents see indices [0, agent_warmup) before the
/// first synthesis window, which is [agent_warmup, agent_warmup + fit_window).
/// The window then expands by one step per forecast origin.
struct BacktestPlan {
  std::size_t agent_warmup = 50;
  std::size_t fit_window = 50;
  std::size_t prediction_span = 34;
  std::vector<int> horizons{1};
  RefitPolicy refit = RefitPolicy::expanding_refit_each_step;
  std::vector<std::string> models{"bps", "mbps", "mbpsh", "fmpr", "dglm", "gam", "inar", "sihr"};
  std::string reference = "mbps";

  int max_horizon() const;
  /// Last index of the first synthesis window.
  std::size_t first_origin() const { return agent_warmup + fit_window - 1; }
  /// Forecast origins for horizon s: first_origin() .. first_origin() + T* - s.
  std::size_t steps(int s) const { return prediction_span - static_cast<std::size_t>(s) + 1; }
  bool runs(const std::string& model) const;
  void validate(std::size_t total_length) const;
};

struct SimulationConfig {
  std::size_t n = 8;
  std::size_t length = 120;
  std::size_t clusters = 2;
  std::size_t agents = 4;
  double intercept_separation = 1.0;
  double weight_walk_sd = 0.01;  // per-step sd of each weight coordinate
  double tau2 = 0.01;            // 0 drops the intercept deviations
  double moment_var = 0.02;      // horizon-1 agent variance; grows linearly in s
  double agent_bias_sd = 0.1;
  double agent_noise_sd = 0.05;
  std::vector<int> horizons{1};
  std::string start_date = "2021-01-04";
  Frequency frequency = Frequency::weekly;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string panel_path;
  std::string moments_path;  // optional external agent moments
  PanelSchema schema;
  Frequency frequency = Frequency::weekly;
  std::uint64_t seed = 20240601;
  BacktestPlan plan;
  SynthesisConfig synthesis;
  AgentSettings agents = AgentSettings::defaults(Frequency::weekly);
  std::size_t agent_predictive_draws = 1000;
  FmprConfig fmpr;
  std::size_t fmpr_draws = 1000;
  SimulationConfig simulation;

  static RunConfig defaults();
  std::filesystem::path resolve(const std::string& p) const;
  /// Every effective setting, for the manifest.
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

/// INI sections: run, data, plan, synthesis, agents, agent.<kind>, fmpr,
/// simulate. Unknown sections or keys are a ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Draws a new master seed through every component seed.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace mbps
