#include "eqm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "eqm/error.hpp"

namespace eqm::csv {

std::string format(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValidationError("CSV has no column '" + name + "'");
}

namespace {

void append_row(std::string& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    if (row[i].find_first_of(",\"\n") != std::string::npos) {
      out += '"';
      for (char c : row[i]) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += row[i];
    }
  }
  out += '\n';
}

Row split(const std::string& line) {
  Row row;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  row.push_back(std::move(cell));
  return row;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("CSV cell '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

double parse_number(const std::string& s) { return parse_double(s); }

std::string to_string(const Table& table) {
  std::string out;
  append_row(out, table.header);
  for (const Row& r : table.rows) append_row(out, r);
  return out;
}

Table parse(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split(line);
      first = false;
    } else {
      t.rows.push_back(split(line));
      if (t.rows.back().size() != t.header.size()) {
        throw ValidationError("CSV row " + std::to_string(t.rows.size()) + " has " +
                              std::to_string(t.rows.back().size()) + " cells, header has " +
                              std::to_string(t.header.size()));
      }
    }
  }
  if (first) throw ValidationError("CSV is empty (a header row is mandatory)");
  return t;
}

void write(const std::filesystem::path& path, const Table& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << to_string(table);
    if (!out) throw ValidationError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Table points_table(const ad::Tensor& points, const std::vector<int>& labels) {
  if (points.rank() != 2) throw ShapeError("points must be rank 2");
  const std::size_t n = points.dim(0), d = points.dim(1);
  Table t;
  if (!labels.empty()) t.header.push_back("label");
  for (std::size_t j = 0; j < d; ++j) t.header.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    Row r;
    if (!labels.empty()) r.push_back(std::to_string(labels.at(i)));
    for (std::size_t j = 0; j < d; ++j) r.push_back(format(points.at(i, j)));
    t.rows.push_back(std::move(r));
  }
  return t;
}

ad::Tensor points_from_table(const Table& table) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0;; ++j) {
    const std::string name = "x" + std::to_string(j);
    bool found = false;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (table.header[c] == name) {
        cols.push_back(c);
        found = true;
      }
    }
    if (!found) break;
  }
  if (cols.empty()) throw ValidationError("CSV has no x0 column");
  if (table.rows.empty()) throw ValidationError("CSV has no data rows");
  std::vector<double> v;
  v.reserve(table.rows.size() * cols.size());
  for (const Row& r : table.rows)
    for (std::size_t c : cols) v.push_back(parse_double(r[c]));
  return ad::Tensor({table.rows.size(), cols.size()}, std::move(v));
}

}  // namespace eqm::csv
