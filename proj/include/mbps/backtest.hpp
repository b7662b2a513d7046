#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbps/config.hpp"
#include "mbps/io.hpp"

namespace mbps {

/// One scored forecast: model's s-step-ahead predictive for y(series, target)
/// issued at origin = target - s.
struct ForecastCell {
  std::string model;
  int horizon = 1;
  std::size_t series = 0;
  std::size_t origin = 0;
  std::int64_t actual = 0;
  double mean = 0.0, median = 0.0;
  std::int64_t lower = 0, upper = 0;
  double log_pmf = 0.0;
  std::int64_t info_index = -1;  // largest panel index of any data the forecast used

  std::size_t target() const { return origin + static_cast<std::size_t>(horizon); }
};

struct StepFailure {
  std::string stage;  // "agents", "fmpr" or a synthesis variant
  int horizon = 0;    // 0 when the failure is not horizon-specific
  std::size_t origin = 0;
  std::string series;  // empty when not series-specific
  std::string kind;
  std::string message;
};

struct InputFile {
  std::string role;  // panel, moments, config
  std::filesystem::path path;
};

struct BacktestOptions {
  std::vector<InputFile> inputs;   // hashed into the manifest
  std::function<void(const std::string&)> progress;  // optional
};

struct BacktestResult {
  std::vector<ForecastCell> cells;
  std::vector<StepFailure> failures;
  bool complete() const { return failures.empty(); }
};

/// Runs the whole protocol and writes the run directory: forecasts.csv,
/// agent_moments.csv, the per-step diagnostics, manifest.json and the report.
/// Module errors inside one step are recorded and the remaining steps still
/// run. Throws only for invalid plans, configs or panels and for I/O errors.
BacktestResult run_backtest(const CountPanel& panel, const RunConfig& config,
                            const std::optional<MomentTable>& external_moments,
                            const std::filesystem::path& run_dir, const BacktestOptions& options = {});

struct AuditFinding {
  std::string model;
  int horizon = 0;
  std::string series;
  std::string target;
  std::int64_t info_index = 0;
  std::int64_t allowed = 0;
};

/// Every recorded forecast cell must satisfy info_index <= target - horizon.
std::vector<AuditFinding> audit_manifest(const nlohmann::ordered_json& manifest);

nlohmann::ordered_json read_manifest(const std::filesystem::path& run_dir);

}  // namespace mbps
