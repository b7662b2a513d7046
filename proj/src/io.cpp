#include "mbps/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <openssl/evp.h>

#include "mbps/error.hpp"

namespace mbps {

namespace {

std::string at_line(const std::string& source, std::size_t line) {
  return (source.empty() ? std::string("line ") : source + ":") + std::to_string(line);
}

// One record per physical line; quoted fields may not span lines.
std::vector<std::string> split_record(const std::string& line, char delim, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw InputError(where + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

std::string quote_if_needed(const std::string& s, char delim) {
  if (s.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string::npos &&
      !(s.size() && (s.front() == ' ' || s.back() == ' ')))
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::optional<std::size_t> Table::find_column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t Table::column(const std::string& name) const {
  if (auto c = find_column(name)) return *c;
  throw InputError("missing column '" + name + "'");
}

Table parse_table(const std::string& text, char delimiter, const std::string& source) {
  Table t;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split_record(line, delimiter, at_line(source, line_no));
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw InputError(at_line(source, line_no) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw InputError((source.empty() ? "input" : source) + ": missing header row");
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out.flush()) throw IoError("write failed on '" + path.string() + "'");
}

Table read_table(const std::filesystem::path& path, char delimiter) {
  return parse_table(read_file(path), delimiter, path.filename().string());
}

std::string format_table(const Table& t, char delimiter) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += delimiter;
      out += quote_if_needed(row[k], delimiter);
    }
    out += '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return out;
}

void write_table(const std::filesystem::path& path, const Table& t, char delimiter) {
  write_file(path, format_table(t, delimiter));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InputError(where + ": '" + s + "' is not a number");
  return v;
}

std::int64_t parse_integer(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const char* b = s.data();
  if (!s.empty() && s[0] == '+') ++b;
  const auto res = std::from_chars(b, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InputError(where + ": '" + s + "' is not an integer");
  return v;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) &&
                  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw IoError("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

CountPanel parse_panel(const std::string& text, const PanelSchema& schema, const std::string& source) {
  const Table t = parse_table(text, schema.delimiter, source);
  std::size_t cd, cr, cc, ci;
  try {
    cd = t.column(schema.date_column);
    cr = t.column(schema.region_column);
    cc = t.column(schema.count_column);
    ci = t.column(schema.infected_column);
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  if (t.rows.empty()) throw InputError(source + ": no data rows");

  // data rows start on line 2; blank lines are not counted by parse_table,
  // so recover each row's line number from the raw text
  std::vector<std::size_t> line_of;
  {
    std::size_t line_no = 0, pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      ++line_no;
      std::string_view line(text.data() + pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) {
        if (header_seen) line_of.push_back(line_no);
        header_seen = true;
      }
      pos = end + 1;
    }
  }

  struct Cell {
    std::int64_t y, inf;
  };
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::size_t> region_index;
  std::set<std::chrono::sys_days> dates;
  std::map<std::pair<std::size_t, std::chrono::sys_days>, Cell> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ":" + std::to_string(line_of[r]);
    const auto d = parse_date(row[cd]);
    if (!d) throw InputError(where + ": '" + row[cd] + "' is not an ISO-8601 date (YYYY-MM-DD)");
    if (row[cr].empty()) throw InputError(where + ": empty region");
    const std::int64_t y = parse_integer(row[cc], where + " (" + schema.count_column + ")");
    const std::int64_t inf = parse_integer(row[ci], where + " (" + schema.infected_column + ")");
    auto [it, fresh] = region_index.try_emplace(row[cr], labels.size());
    if (fresh) labels.push_back(row[cr]);
    dates.insert(*d);
    if (!cells.emplace(std::make_pair(it->second, *d), Cell{y, inf}).second)
      throw InputError(where + ": duplicate entry for region '" + row[cr] + "' on " + row[cd]);
  }

  CountPanel p;
  p.labels = labels;
  p.calendar.assign(dates.begin(), dates.end());
  const std::size_t n = labels.size(), T = p.calendar.size();
  if (cells.size() != n * T) {
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& d : p.calendar)
        if (!cells.count({i, d})) missing.push_back("(" + labels[i] + ", " + format_date(d) + ")");
    std::string list;
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 20); ++k)
      list += (k ? ", " : "") + missing[k];
    if (missing.size() > 20) list += ", ... " + std::to_string(missing.size() - 20) + " more";
    throw InputError(source + ": unbalanced panel, " + std::to_string(missing.size()) +
                     " missing (region, date) pairs: " + list);
  }
  p.y = Grid<std::int64_t>(n, T);
  p.infected = Grid<std::int64_t>(n, T);
  for (const auto& [key, c] : cells) {
    const auto t_idx = static_cast<std::size_t>(
        std::lower_bound(p.calendar.begin(), p.calendar.end(), key.second) - p.calendar.begin());
    p.y(key.first, t_idx) = c.y;
    p.infected(key.first, t_idx) = c.inf;
  }
  if (schema.frequency) {
    p.frequency = *schema.frequency;
  } else if (T >= 2) {
    const auto step = (p.calendar[1] - p.calendar[0]).count();
    if (step == 7) p.frequency = Frequency::weekly;
    else if (step == 1) p.frequency = Frequency::daily;
    else
      throw InputError(source + ": cannot infer the frequency from a first step of " +
                       std::to_string(step) + " days; set it explicitly");
  }
  return p;
}

CountPanel load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  return parse_panel(read_file(path), schema, path.filename().string());
}

std::string format_panel(const CountPanel& panel, const PanelSchema& schema) {
  Table t;
  t.header = {schema.date_column, schema.region_column, schema.count_column, schema.infected_column};
  for (std::size_t tt = 0; tt < panel.length(); ++tt)
    for (std::size_t i = 0; i < panel.n(); ++i)
      t.rows.push_back({format_date(panel.calendar[tt]), panel.labels[i], std::to_string(panel.y(i, tt)),
                        std::to_string(panel.infected(i, tt))});
  return format_table(t, schema.delimiter);
}

MomentTable parse_moments(const std::string& text, const CountPanel& panel, const std::string& source) {
  const Table t = parse_table(text, ',', source);
  std::size_t cr, cd, ca, ch, cm, cv;
  try {
    cr = t.column("region");
    cd = t.column("date");
    ca = t.column("agent");
    ch = t.column("horizon");
    cm = t.column("mean");
    cv = t.column("var");
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  std::unordered_map<std::string, std::size_t> series;
  for (std::size_t i = 0; i < panel.n(); ++i) series[panel.labels[i]] = i;
  std::vector<std::string> agents;
  for (const auto& row : t.rows)
    if (std::find(agents.begin(), agents.end(), row[ca]) == agents.end()) agents.push_back(row[ca]);
  if (agents.empty()) throw InputError(source + ": no moment rows");

  MomentTable out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ": row " + std::to_string(r + 1);
    const auto si = series.find(row[cr]);
    if (si == series.end()) throw InputError(where + ": unknown region '" + row[cr] + "'");
    const auto d = parse_date(row[cd]);
    if (!d) throw InputError(where + ": bad date '" + row[cd] + "'");
    const auto it = std::lower_bound(panel.calendar.begin(), panel.calendar.end(), *d);
    if (it == panel.calendar.end() || *it != *d)
      throw InputError(where + ": date " + row[cd] + " is not on the panel calendar");
    const std::int64_t h = parse_integer(row[ch], where);
    if (h < 1) throw InputError(where + ": horizon must be >= 1");
    auto [slot, fresh] = out.try_emplace(static_cast<int>(h));
    if (fresh) {
      slot->second = AgentPredictive(panel.n(), agents.size(), panel.length(), static_cast<int>(h));
      slot->second.agent_names = agents;
      std::fill(slot->second.m.begin(), slot->second.m.end(), nan);
      std::fill(slot->second.s2.begin(), slot->second.s2.end(), nan);
    }
    auto& ap = slot->second;
    const std::size_t j = static_cast<std::size_t>(std::find(agents.begin(), agents.end(), row[ca]) - agents.begin());
    const std::size_t tt = static_cast<std::size_t>(it - panel.calendar.begin());
    if (!std::isnan(ap.mean(si->second, j, tt)))
      throw InputError(where + ": duplicate moment for (" + row[cr] + ", " + row[cd] + ", " + row[ca] +
                       ", " + row[ch] + ")");
    ap.mean(si->second, j, tt) = parse_double(row[cm], where);
    ap.var(si->second, j, tt) = parse_double(row[cv], where);
    // externally supplied moments are taken to follow the horizon convention
    ap.info_index[ap.at(si->second, j, tt)] = static_cast<std::int64_t>(tt) - h;
  }
  return out;
}

MomentTable load_moments(const std::filesystem::path& path, const CountPanel& panel) {
  return parse_moments(read_file(path), panel, path.filename().string());
}

std::string format_moments(const MomentTable& moments, const CountPanel& panel) {
  Table t;
  t.header = {"region", "date", "agent", "horizon", "mean", "var"};
  for (const auto& [h, ap] : moments)
    for (std::size_t i = 0; i < ap.n; ++i)
      for (std::size_t tt = 0; tt < ap.T; ++tt)
        for (std::size_t j = 0; j < ap.J; ++j) {
          const double m = ap.mean(i, j, tt);
          if (std::isnan(m)) continue;
          t.rows.push_back({panel.labels[i], format_date(panel.calendar[ap.offset + tt]), ap.agent_names[j],
                            std::to_string(h), format_double(m), format_double(ap.var(i, j, tt))});
        }
  return format_table(t);
}

}  // namespace mbps
