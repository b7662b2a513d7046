#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "acceptance.hpp"
#include "mbps/backtest.hpp"
#include "mbps/clustering.hpp"
#include "mbps/config.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/io.hpp"
#include "mbps/rng.hpp"
#include "mbps/simulate.hpp"
#include "mbps/synthesis.hpp"

using namespace mbps;
namespace fs = std::filesystem;

namespace acceptance {

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mbps_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

}  // namespace

Outcome cluster_recovery() {
  int good = 0;
  double alive_sum = 0.0, ari_min = 1.0;
  for (std::uint64_t run = 0; run < 10; ++run) {
    SimulationConfig sc;
    sc.n = 10;
    sc.length = 100;
    sc.clusters = 2;
    sc.intercept_separation = 1.0;
    sc.tau2 = 0.0;
    sc.seed = 500 + run;
    const auto sim = simulate_panel(sc);

    SynthesisConfig cfg;
    cfg.K = 10;
    cfg.a0 = 0.01;
    cfg.n_burn = 20000;
    cfg.n_iter = 4000;
    cfg.thin = 1;
    cfg.seed = 900 + run;
    const auto in = make_input(sim.panel.y, sim.moments.at(1));
    const auto draws = run_sampler(in, cfg, Variant::mbps);
    const auto z = draws.assignments();
    const double ari = adjusted_rand_index(z[representative_draw(z)], sim.clusters);
    const auto alive = alive_cluster_counts(z);
    double mean_alive = 0;
    for (auto a : alive) mean_alive += double(a);
    mean_alive /= double(alive.size());
    good += ari >= 0.9;
    ari_min = std::min(ari_min, ari);
    alive_sum += mean_alive;
  }
  const double alive = alive_sum / 10.0;
  return {good >= 8 && alive <= 4.0,
          fmt("ARI >= 0.9 in %.0f/10 runs (min %.3f); mean alive clusters %.2f", good, ari_min, alive)};
}

// Strict coverage of the data-generating predictive itself on the same cells:
// the best any fitted model can score under the strict interval rule.
double generating_coverage(const SimulatedPanel& sim, const SimulationConfig& sc, std::size_t from,
                           std::uint64_t seed) {
  Rng rng(seed);
  const AgentPredictive& M = sim.moments.at(1);
  std::size_t hits = 0, cells = 0;
  for (std::size_t i = 0; i < M.n; ++i)
    for (std::size_t t = from; t < sim.panel.length(); ++t) {
      const auto& th = sim.weights[static_cast<std::size_t>(sim.clusters[i])];
      std::vector<std::int64_t> ys(4000);
      std::vector<double> etas(4000);
      for (std::size_t d = 0; d < ys.size(); ++d) {
        double eta = th[0][t] + rng.normal(0.0, std::sqrt(sc.tau2));
        for (std::size_t j = 0; j < M.J; ++j) eta += th[j + 1][t] * rng.normal(M.mean(i, j, t), std::sqrt(M.var(i, j, t)));
        etas[d] = eta;
        ys[d] = rng.poisson(std::exp(eta));
      }
      const auto fd = ForecastDistribution::from_draws(std::move(ys), std::move(etas));
      const std::int64_t y = sim.panel.y(i, t);
      hits += fd.lower < y && y < fd.upper;
      ++cells;
    }
  return double(hits) / double(cells);
}

Outcome calibration() {
  std::size_t hits = 0, total = 0;
  double ceiling = 0.0;
  std::string per_panel;
  for (std::uint64_t p = 0; p < 5; ++p) {
    RunConfig cfg = RunConfig::defaults();
    apply_seed(cfg, 3100 + p);
    cfg.simulation.n = 8;
    cfg.simulation.length = 100;
    cfg.simulation.horizons = {1};
    const auto sim = simulate_panel(cfg.simulation);
    ceiling += generating_coverage(sim, cfg.simulation, 80, 77 + p) / 5.0;

    cfg.plan.agent_warmup = 0;
    cfg.plan.fit_window = 80;
    cfg.plan.prediction_span = 20;
    cfg.plan.horizons = {1};
    cfg.plan.models = {"mbpsh"};
    cfg.plan.reference = "mbpsh";
    cfg.synthesis.n_burn = 800;
    cfg.synthesis.n_iter = 800;
    cfg.synthesis.thin = 1;
    cfg.synthesis.forecast_draws = 2000;
    const auto res = run_backtest(sim.panel, cfg, sim.moments, fresh_dir("calibration"));
    if (!res.complete()) return {false, "panel " + std::to_string(p) + ": " + res.failures.front().message};
    std::size_t h = 0;
    for (const auto& c : res.cells) h += c.lower < c.actual && c.actual < c.upper;
    hits += h;
    total += res.cells.size();
    per_panel += (per_panel.empty() ? "" : " ") + fmt("%.3f", double(h) / double(res.cells.size()));
  }
  const double cov = double(hits) / double(total);
  return {cov >= 0.92 && cov <= 0.98,
          fmt("pooled MBPSH 95%% coverage %.4f over %.0f cells; generating model scores %.4f on the same cells", cov,
              double(total), ceiling) +
              " (panels " + per_panel + ")"};
}

Outcome leakage_audit() {
  RunConfig cfg = load_config(fs::path(MBPS_DATA_DIR) / "config.ini");
  const CountPanel panel = load_panel(cfg.resolve(cfg.panel_path), cfg.schema);
  if (cfg.plan.horizons != std::vector<int>{1, 3, 7}) return {false, "bundled plan does not use horizons 1, 3, 7"};
  const fs::path dir = fresh_dir("leakage");
  const auto res = run_backtest(panel, cfg, std::nullopt, dir);
  const auto manifest = read_manifest(dir);
  const auto findings = audit_manifest(manifest);

  // recheck the recorded cells independently of the audit routine
  std::size_t bad = 0, checked = 0;
  for (const auto& c : manifest["cells"]) {
    const long long target = c["target"], h = c["horizon"], info = c["info_index"];
    bad += info > target - h;
    ++checked;
  }
  bool catches = false;
  if (!manifest["cells"].empty()) {
    auto planted = manifest;
    planted["cells"][0]["info_index"] = planted["cells"][0]["target"];
    catches = audit_manifest(planted).size() == 1;
  }
  const bool ok = res.complete() && findings.empty() && bad == 0 && checked == res.cells.size() && checked > 0 &&
                  catches;
  return {ok, fmt("%.0f cells audited, %.0f violations (independent recheck %.0f); planted leak detected: %.0f",
                  double(checked), double(findings.size()), double(bad), catches)};
}

Outcome end_to_end() {
  const fs::path root = fresh_dir("e2e");
  const std::string cli = MBPS_CLI_PATH;
  fs::copy_file(fs::path(MBPS_DATA_DIR) / "config.ini", root / "config.ini");

  auto sh = [](const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const std::string cfg = (root / "config.ini").string();
  int rc = sh(cli + " simulate --config " + cfg + " --out " + root.string());
  if (rc != 0) return {false, "simulate exit " + std::to_string(rc)};
  const bool same_panel =
      read_file(root / "synthetic_panel.csv") == read_file(fs::path(MBPS_DATA_DIR) / "synthetic_panel.csv");

  const std::vector<std::string> reports{"coverage.csv", "cape.csv",          "cape_total.csv",
                                         "lpdr.csv",     "lpdr_total.csv",    "r2_curves.csv",
                                         "paired_r2_curves.csv", "coclustering.csv", "alive.csv",
                                         "profiles.csv", "summary.json"};
  for (const char* run : {"run_a", "run_b"}) {
    const std::string out = (root / run).string();
    rc = sh(cli + " backtest --quiet --config " + cfg + " --out " + out);
    if (rc != 0) return {false, std::string(run) + ": backtest exit " + std::to_string(rc)};
    rc = sh(cli + " report --run " + out + " --out " + (root / run / "report_cli").string());
    if (rc != 0) return {false, std::string(run) + ": report exit " + std::to_string(rc)};
  }

  std::size_t files = 0, differ = 0, missing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "run_a");
    ++files;
    if (!fs::exists(root / "run_b" / rel) || read_file(e.path()) != read_file(root / "run_b" / rel)) ++differ;
  }
  for (const auto& name : reports)
    for (const char* sub : {"report", "report_cli"})
      missing += !fs::exists(root / "run_a" / sub / name);
  const bool cli_report_same = read_file(root / "run_a/report/summary.json") ==
                               read_file(root / "run_a/report_cli/summary.json");
  return {missing == 0 && differ == 0 && same_panel && cli_report_same,
          fmt("%.0f files compared, %.0f differ, %.0f report files missing; bundled panel reproduced: %.0f", double(files),
              double(differ), double(missing), same_panel)};
}

}  // namespace acceptance
