#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbps/domain.hpp"

namespace mbps {

/// Header plus string cells, as read from or written to a delimited file.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws InputError
  std::optional<std::size_t> find_column(const std::string& name) const;
};

/// Fields may be double-quoted; embedded quotes are doubled. Errors name
/// `source` and the line (the header is line 1).
Table parse_table(const std::string& text, char delimiter = ',', const std::string& source = "");
Table read_table(const std::filesystem::path& path, char delimiter = ',');
std::string format_table(const Table& t, char delimiter = ',');
void write_table(const std::filesystem::path& path, const Table& t, char delimiter = ',');

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& where);
std::int64_t parse_integer(const std::string& s, const std::string& where);

/// Hex SHA-1 of "blob <size>\0" + content, as git computes it.
std::string git_blob_sha1(const std::string& content);

struct PanelSchema {
  char delimiter = ',';
  std::string date_column = "date";
  std::string region_column = "region";
  std::string count_column = "count";
  std::string infected_column = "infected";
  std::optional<Frequency> frequency;  // inferred from the first calendar step when unset
};

/// Long-format (date, region, count, infected) to a balanced panel. Regions
/// keep their order of first appearance; dates are sorted.
CountPanel parse_panel(const std::string& text, const PanelSchema& schema = {},
                       const std::string& source = "panel");
CountPanel load_panel(const std::filesystem::path& path, const PanelSchema& schema = {});
std::string format_panel(const CountPanel& panel, const PanelSchema& schema = {});

/// Agent moments keyed by horizon, each spanning the whole panel calendar
/// (NaN where the file has no entry).
using MomentTable = std::map<int, AgentPredictive>;

/// Columns region, date (target), agent, horizon, mean, var.
MomentTable parse_moments(const std::string& text, const CountPanel& panel,
                          const std::string& source = "moments");
MomentTable load_moments(const std::filesystem::path& path, const CountPanel& panel);
/// Entries with a NaN mean are skipped.
std::string format_moments(const MomentTable& moments, const CountPanel& panel);

}  // namespace mbps
