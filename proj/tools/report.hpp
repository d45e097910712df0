#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace gfrag::cli {

using Cell = std::variant<double, long long, std::string>;

// RFC 4180 table: CRLF line ends, quoting only where needed.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<Cell> row);
  size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

std::string csv_escape(const std::string& field);
// Shortest text that round-trips; "nan", "inf", "-inf" otherwise.
std::string format_number(double v);

// Writes to a sibling temp file, then renames over path.
void write_atomic(const std::filesystem::path& path, const std::string& content);

uint64_t fnv1a64(const std::string& data);
std::string hex64(uint64_t v);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

// Minimal SVG line plot. Non-finite points (and non-positive ones on log
// axes) are skipped.
std::string svg_plot(const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace gfrag::cli
