#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mbps {

struct ReportResult {
  std::vector<std::string> files;
  std::vector<std::string> warnings;  // non-empty for partial runs
};

/// Reads a run directory and writes plot-ready tables plus summary.json to
/// out_dir: coverage.csv (one row per horizon, one column per model),
/// cape.csv / cape_total.csv, lpdr.csv / lpdr_total.csv against the plan's
/// reference model, r2_curves.csv, paired_r2_curves.csv, coclustering.csv,
/// alive.csv and profiles.csv.
ReportResult emit_reports(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace mbps
