#pragma once

#include <string>
#include <vector>

#include "proxflow/linalg.hpp"

namespace proxflow {

/// A CSV file with a mandatory header. `data` holds one record per column so
/// it can be used directly as a batch of samples.
struct CsvTable {
  std::vector<std::string> header;
  Mat data;

  /// Rows whose header starts with `prefix` followed by digits, in file order.
  Mat block(const std::string& prefix) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

/// Writes records (columns of `data`) as rows. Numbers use the shortest
/// representation that round-trips exactly.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& data);
std::string format_csv(const std::vector<std::string>& header, const Mat& data);

/// x0..x{n-1}, or y0..y{d-1},x0..x{n-1} when y is given.
void write_samples_csv(const std::string& path, const Mat& x, const Mat* y = nullptr);
std::vector<std::string> sample_header(std::size_t n, std::size_t d = 0);

std::string format_double(double v);

/// Writes `text` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace proxflow
