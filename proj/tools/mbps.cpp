#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mbps/backtest.hpp"
#include "mbps/config.hpp"
#include "mbps/error.hpp"
#include "mbps/io.hpp"
#include "mbps/report.hpp"
#include "mbps/simulate.hpp"

namespace fs = std::filesystem;
using namespace mbps;

namespace {

int cmd_validate(const std::string& data, const std::string& config) {
  PanelSchema schema;
  if (!config.empty()) schema = load_config(config).schema;
  const CountPanel panel = load_panel(data, schema);
  const auto violations = validate_panel(panel);
  std::printf("%zu series x %zu %s dates, %s to %s\n", panel.n(), panel.length(), to_string(panel.frequency),
              format_date(panel.calendar.front()).c_str(), format_date(panel.calendar.back()).c_str());
  for (const auto& v : violations) std::printf("violation: %s\n", v.message.c_str());
  if (violations.empty()) {
    std::printf("ok\n");
    return 0;
  }
  std::printf("%zu violations\n", violations.size());
  return exit_code(ErrorKind::input);
}

int cmd_backtest(const std::string& config_path, const std::string& data_override,
                 const std::string& moments_override, const std::string& out, std::optional<std::uint64_t> seed,
                 bool quiet) {
  RunConfig cfg = load_config(config_path);
  if (seed) apply_seed(cfg, *seed);
  if (!data_override.empty()) cfg.panel_path = fs::absolute(data_override).string();
  if (!moments_override.empty()) cfg.moments_path = fs::absolute(moments_override).string();
  if (cfg.panel_path.empty()) throw ConfigError("no panel: set [data] panel or pass --data");

  BacktestOptions opt;
  const fs::path panel_file = cfg.resolve(cfg.panel_path);
  opt.inputs.push_back({"config", config_path});
  opt.inputs.push_back({"panel", panel_file});
  const CountPanel panel = load_panel(panel_file, cfg.schema);
  std::optional<MomentTable> moments;
  if (!cfg.moments_path.empty()) {
    const fs::path mf = cfg.resolve(cfg.moments_path);
    opt.inputs.push_back({"moments", mf});
    moments = load_moments(mf, panel);
  }
  if (!quiet) opt.progress = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };

  const auto result = run_backtest(panel, cfg, moments, out, opt);
  const auto findings = audit_manifest(read_manifest(out));
  std::printf("%zu forecast cells written to %s\n", result.cells.size(), out.c_str());
  std::printf("leakage audit: %zu violations\n", findings.size());
  for (const auto& f : findings)
    std::printf("  %s h=%d %s %s: used index %lld > %lld\n", f.model.c_str(), f.horizon, f.series.c_str(),
                f.target.c_str(), static_cast<long long>(f.info_index), static_cast<long long>(f.allowed));
  for (const auto& f : result.failures)
    std::fprintf(stderr, "failed step: %s h=%d origin=%zu %s: %s\n", f.stage.c_str(), f.horizon, f.origin,
                 f.series.c_str(), f.message.c_str());
  if (!findings.empty()) return exit_code(ErrorKind::domain);
  if (!result.complete()) {
    std::fprintf(stderr, "%zu steps failed; completed steps were kept\n", result.failures.size());
    const std::string& k = result.failures.front().kind;
    for (auto kind : {ErrorKind::input, ErrorKind::config, ErrorKind::domain, ErrorKind::numerical, ErrorKind::io})
      if (k == to_string(kind)) return exit_code(kind);
    return 1;
  }
  return 0;
}

int cmd_report(const std::string& run, const std::string& out) {
  const fs::path dest = out.empty() ? fs::path(run) / "report" : fs::path(out);
  const auto res = emit_reports(run, dest);
  for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("%zu report files written to %s\n", res.files.size(), dest.c_str());
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig::defaults() : load_config(config_path);
  if (seed) apply_seed(cfg, *seed);
  const auto sim = simulate_panel(cfg.simulation);
  const fs::path dir(out);
  const std::string panel_name = cfg.panel_path.empty() ? "panel.csv" : fs::path(cfg.panel_path).filename().string();
  const std::string moments_name =
      cfg.moments_path.empty() ? "moments.csv" : fs::path(cfg.moments_path).filename().string();
  write_file(dir / panel_name, format_panel(sim.panel, cfg.schema));
  write_file(dir / moments_name, format_moments(sim.moments, sim.panel));
  write_table(dir / "truth.csv", truth_table(sim));
  write_table(dir / "weights.csv", weights_table(sim));
  std::printf("simulated %zu series x %zu dates into %s (%s, %s, truth.csv, weights.csv)\n", sim.panel.n(),
              sim.panel.length(), out.c_str(), panel_name.c_str(), moments_name.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture Bayesian predictive synthesis for count panels"};
  app.require_subcommand(1);

  std::string data, config, moments, out, run;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto* validate = app.add_subcommand("validate", "Check a panel file");
  validate->add_option("--data", data, "Panel file (date, region, count, infected)")->required();
  validate->add_option("--config", config, "Config whose [data] section gives the schema");

  auto* backtest = app.add_subcommand("backtest", "Run the expanding-window backtest");
  backtest->add_option("--config", config, "Run configuration (INI)")->required();
  backtest->add_option("--data", data, "Panel file; overrides [data] panel");
  backtest->add_option("--moments", moments, "External agent moments; overrides [data] moments");
  backtest->add_option("--out", out, "Run directory")->required();
  backtest->add_option("--seed", seed, "Master seed; overrides [run] seed");
  backtest->add_flag("--quiet", quiet, "No progress output");

  auto* report = app.add_subcommand("report", "Re-emit the report of a run directory");
  report->add_option("--run", run, "Run directory")->required();
  report->add_option("--out", out, "Report directory (default <run>/report)");

  auto* simulate = app.add_subcommand("simulate", "Simulate a panel from the mixture synthesis model");
  simulate->add_option("--config", config, "Configuration with a [simulate] section");
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--seed", seed, "Master seed; overrides [run] seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*validate) return cmd_validate(data, config);
    if (*backtest) return cmd_backtest(config, data, moments, out, seed, quiet);
    if (*report) return cmd_report(run, out);
    if (*simulate) return cmd_simulate(config, out, seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
