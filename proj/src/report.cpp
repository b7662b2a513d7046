#include "mbps/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <tuple>

#include "json.hpp"
#include "mbps/backtest.hpp"
#include "mbps/error.hpp"
#include "mbps/evaluation.hpp"
#include "mbps/io.hpp"

namespace mbps {

namespace {

struct Row {
  std::string region, target_date;
  std::size_t target = 0;
  double actual = 0, mean = 0, log_pmf = 0;
  Interval iv;
};

using Key = std::pair<std::string, int>;  // model, horizon

// Rows of one (model, horizon) grouped by region, each sorted by target.
using Grouped = std::map<Key, std::map<std::string, std::vector<Row>>>;

Grouped group_forecasts(const Table& t) {
  const std::size_t cm = t.column("model"), ch = t.column("horizon"), cr = t.column("region"),
                    ct = t.column("target"), cd = t.column("target_date"), ca = t.column("actual"),
                    cmean = t.column("mean"), cl = t.column("lower"), cu = t.column("upper"),
                    cp = t.column("log_pmf");
  Grouped g;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& x = t.rows[r];
    const std::string where = "forecasts.csv row " + std::to_string(r + 1);
    Row row;
    row.region = x[cr];
    row.target_date = x[cd];
    row.target = static_cast<std::size_t>(parse_integer(x[ct], where));
    row.actual = static_cast<double>(parse_integer(x[ca], where));
    row.mean = parse_double(x[cmean], where);
    row.log_pmf = parse_double(x[cp], where);
    row.iv = {parse_integer(x[cl], where), parse_integer(x[cu], where)};
    g[{x[cm], static_cast<int>(parse_integer(x[ch], where))}][row.region].push_back(row);
  }
  for (auto& [k, by_region] : g)
    for (auto& [r, rows] : by_region)
      std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.target < b.target; });
  return g;
}

std::optional<Table> maybe_table(const std::filesystem::path& p, std::vector<std::string>& warnings) {
  if (!std::filesystem::exists(p)) {
    warnings.push_back("missing " + p.filename().string());
    return std::nullopt;
  }
  return read_table(p);
}

}  // namespace

ReportResult emit_reports(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(run_dir)) throw IoError("run directory '" + run_dir.string() + "' not found");
  ReportResult res;
  const auto manifest = read_manifest(run_dir);
  const auto& plan = manifest.at("config").at("plan");
  const auto models = plan.at("models").get<std::vector<std::string>>();
  const auto horizons = plan.at("horizons").get<std::vector<int>>();
  const std::string reference = plan.at("reference").get<std::string>();
  const auto labels = manifest.at("panel").at("labels").get<std::vector<std::string>>();
  const std::size_t n = labels.size();
  if (manifest.value("status", "") != "complete")
    res.warnings.push_back("partial report: the run recorded " +
                           std::to_string(manifest.at("failures").size()) + " failed steps");

  const auto forecasts = maybe_table(run_dir / "forecasts.csv", res.warnings);
  const Grouped g = forecasts ? group_forecasts(*forecasts) : Grouped{};

  auto write = [&](const std::string& name, const Table& t) {
    write_table(out_dir / name, t);
    res.files.push_back(name);
  };

  nlohmann::ordered_json summary;
  summary["status"] = manifest.value("status", "unknown");
  summary["reference"] = reference;
  summary["models"] = models;
  summary["horizons"] = horizons;

  // coverage: rows are horizons, columns are models
  {
    Table t;
    t.header = {"horizon"};
    for (const auto& m : models) t.header.push_back(m);
    nlohmann::ordered_json js = nlohmann::ordered_json::object();
    for (int s : horizons) {
      std::vector<std::string> row{std::to_string(s)};
      const std::size_t expected = manifest.at("steps").at(std::to_string(s)).at("cells_per_model").get<std::size_t>();
      for (const auto& m : models) {
        std::vector<double> y;
        std::vector<Interval> iv;
        if (auto it = g.find({m, s}); it != g.end())
          for (const auto& [r, rows] : it->second)
            for (const auto& x : rows) {
              y.push_back(x.actual);
              iv.push_back(x.iv);
            }
        if (y.size() != expected)
          res.warnings.push_back("coverage of " + m + " at horizon " + std::to_string(s) + " uses " +
                                 std::to_string(y.size()) + " of " + std::to_string(expected) + " cells");
        if (y.empty()) {
          row.push_back("");
          continue;
        }
        const double cov = interval_coverage(y, iv);
        row.push_back(format_double(cov));
        js[std::to_string(s)][m] = cov;
      }
      t.rows.push_back(row);
    }
    write("coverage.csv", t);
    summary["coverage"] = js;
  }

  // CAPE and LPDR, per series and summed over series
  {
    Table cape_t{{"model", "horizon", "region", "target_date", "abs_error", "cape"}, {}};
    Table cape_total{{"model", "horizon", "target_date", "total_cape"}, {}};
    Table lpdr_t{{"model", "horizon", "region", "target_date", "lpdr"}, {}};
    Table lpdr_total{{"model", "horizon", "target_date", "total_lpdr"}, {}};
    nlohmann::ordered_json final_cape = nlohmann::ordered_json::object();
    nlohmann::ordered_json final_lpdr = nlohmann::ordered_json::object();
    for (int s : horizons) {
      const auto ref_it = g.find({reference, s});
      for (const auto& m : models) {
        const auto it = g.find({m, s});
        if (it == g.end()) continue;
        // per target totals; a target is only totalled when every series has it
        std::map<std::size_t, std::tuple<std::string, double, std::size_t>> totals;
        std::map<std::size_t, std::tuple<std::string, double, std::size_t>> ltotals;
        for (const auto& label : labels) {
          const auto rit = it->second.find(label);
          if (rit == it->second.end()) continue;
          const auto& rows = rit->second;
          std::vector<double> actual, point;
          for (const auto& x : rows) {
            actual.push_back(x.actual);
            point.push_back(x.mean);
          }
          const auto curve = cape(actual, point);
          for (std::size_t k = 0; k < rows.size(); ++k) {
            cape_t.rows.push_back({m, std::to_string(s), label, rows[k].target_date,
                                   format_double(std::abs(actual[k] - point[k])), format_double(curve[k])});
            auto& tot = totals[rows[k].target];
            std::get<0>(tot) = rows[k].target_date;
            std::get<1>(tot) += curve[k];
            ++std::get<2>(tot);
          }
          if (m == reference || ref_it == g.end()) continue;
          const auto ref_rows = ref_it->second.find(label);
          if (ref_rows == ref_it->second.end()) continue;
          std::map<std::size_t, double> ref_by_target;
          for (const auto& x : ref_rows->second) ref_by_target[x.target] = x.log_pmf;
          std::vector<double> ref, cand;
          std::vector<const Row*> used;
          for (const auto& x : rows)
            if (auto f = ref_by_target.find(x.target); f != ref_by_target.end()) {
              ref.push_back(f->second);
              cand.push_back(x.log_pmf);
              used.push_back(&x);
            }
          const auto l = lpdr(ref, cand);
          for (std::size_t k = 0; k < used.size(); ++k) {
            lpdr_t.rows.push_back({m, std::to_string(s), label, used[k]->target_date, l[k] ? format_double(*l[k]) : ""});
            auto& tot = ltotals[used[k]->target];
            std::get<0>(tot) = used[k]->target_date;
            if (l[k]) {
              std::get<1>(tot) += *l[k];
              ++std::get<2>(tot);
            }
          }
        }
        for (const auto& [t, v] : totals) {
          const bool full = std::get<2>(v) == n;
          cape_total.rows.push_back({m, std::to_string(s), std::get<0>(v), full ? format_double(std::get<1>(v)) : ""});
          if (full) final_cape[std::to_string(s)][m] = std::get<1>(v);
        }
        for (const auto& [t, v] : ltotals) {
          const bool full = std::get<2>(v) == n;
          lpdr_total.rows.push_back({m, std::to_string(s), std::get<0>(v), full ? format_double(std::get<1>(v)) : ""});
        }
        if (!ltotals.empty()) {
          // sum over the prediction period of the per-target totals that exist
          double acc = 0;
          std::size_t used_targets = 0;
          for (const auto& [t, v] : ltotals)
            if (std::get<2>(v) == n) {
              acc += std::get<1>(v);
              ++used_targets;
            }
          final_lpdr[std::to_string(s)][m] = {{"sum", acc}, {"targets", used_targets}, {"of", ltotals.size()}};
        }
      }
    }
    write("cape.csv", cape_t);
    write("cape_total.csv", cape_total);
    write("lpdr.csv", lpdr_t);
    write("lpdr_total.csv", lpdr_total);
    summary["final_total_cape"] = final_cape;
    summary["total_lpdr"] = final_lpdr;
  }

  // diagnostics that the run already tabulated
  if (auto t = maybe_table(run_dir / "r2.csv", res.warnings)) {
    Table out{{"variant", "horizon", "origin_date", "agent", "r2"}, {}};
    for (const auto& r : t->rows) out.rows.push_back({r[t->column("variant")], r[t->column("horizon")],
                                                      r[t->column("origin_date")], r[t->column("agent")],
                                                      r[t->column("r2")]});
    write("r2_curves.csv", out);
  }
  if (auto t = maybe_table(run_dir / "paired_r2.csv", res.warnings)) {
    Table out{{"variant", "horizon", "origin_date", "agent_a", "agent_b", "value"}, {}};
    for (const auto& r : t->rows)
      out.rows.push_back({r[t->column("variant")], r[t->column("horizon")], r[t->column("origin_date")],
                          r[t->column("agent_a")], r[t->column("agent_b")], r[t->column("value")]});
    write("paired_r2_curves.csv", out);
  }
  if (auto t = maybe_table(run_dir / "coclustering.csv", res.warnings)) write("coclustering.csv", *t);
  std::optional<Table> alive = maybe_table(run_dir / "alive.csv", res.warnings);
  if (alive) {
    write("alive.csv", *alive);
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& r : alive->rows) {
      auto& a = acc[r[alive->column("variant")] + "/h" + r[alive->column("horizon")]];
      a.first += parse_double(r[alive->column("mean_alive")], "alive.csv");
      ++a.second;
    }
    nlohmann::ordered_json js = nlohmann::ordered_json::object();
    for (const auto& [k, v] : acc) js[k] = v.first / static_cast<double>(v.second);
    summary["mean_alive_clusters"] = js;
  }

  // profile scatter: series features with the last representative clustering
  if (auto prof = maybe_table(run_dir / "profiles.csv", res.warnings)) {
    Table out{{"region", "log_mean", "mean_abs_change", "variant", "horizon", "cluster"}, {}};
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> last;  // (variant, h) -> region -> label
    std::map<std::pair<std::string, std::string>, std::int64_t> last_origin;
    if (auto cl = maybe_table(run_dir / "clusters.csv", res.warnings)) {
      for (const auto& r : cl->rows) {
        const std::pair<std::string, std::string> key{r[cl->column("variant")], r[cl->column("horizon")]};
        const auto o = parse_integer(r[cl->column("origin")], "clusters.csv");
        auto [it, fresh] = last_origin.try_emplace(key, o);
        if (o > it->second) {
          it->second = o;
          last[key].clear();
        }
        if (o == it->second) last[key][r[cl->column("region")]] = r[cl->column("cluster")];
      }
    }
    for (const auto& r : prof->rows) {
      const std::string& region = r[prof->column("region")];
      if (last.empty()) out.rows.push_back({region, r[1], r[2], "", "", ""});
      for (const auto& [key, labels_of] : last) {
        const auto it = labels_of.find(region);
        out.rows.push_back({region, r[1], r[2], key.first, key.second, it == labels_of.end() ? "" : it->second});
      }
    }
    write("profiles.csv", out);
  }

  summary["warnings"] = res.warnings;
  summary["files"] = res.files;
  write_file(out_dir / "summary.json", summary.dump(1) + "\n");
  res.files.push_back("summary.json");
  return res;
}

}  // namespace mbps
