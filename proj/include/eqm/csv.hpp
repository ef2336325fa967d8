#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eqm/tensor.hpp"

namespace eqm::csv {

/// Shortest-safe round-trip text: 17 significant digits.
std::string format(double value);

/// Strict full-cell parse; throws ValidationError on junk.
double parse_number(const std::string& s);

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Index of a header column; throws ValidationError if absent.
  std::size_t column(const std::string& name) const;
};

std::string to_string(const Table& table);
Table parse(const std::string& text);

/// Writes atomically (temp file + rename).
void write(const std::filesystem::path& path, const Table& table);
Table read(const std::filesystem::path& path);

/// points as columns x0..x{d-1}, preceded by an optional label column.
Table points_table(const ad::Tensor& points, const std::vector<int>& labels = {});
/// Reads x0..x{d-1} columns back into a [n, d] tensor.
ad::Tensor points_from_table(const Table& table);

}  // namespace eqm::csv
