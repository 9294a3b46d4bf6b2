#include "proxflow/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "proxflow/error.hpp"

namespace proxflow {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool has_indexed_prefix(const std::string& name, const std::string& prefix) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return false;
  for (std::size_t i = prefix.size(); i < name.size(); ++i)
    if (name[i] < '0' || name[i] > '9') return false;
  return true;
}

}  // namespace

Mat CsvTable::block(const std::string& prefix) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (has_indexed_prefix(header[i], prefix)) rows.push_back(static_cast<Eigen::Index>(i));
  Mat out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = data.row(rows[r]);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  if (!std::getline(in, line) || line.empty()) throw InvalidArgument("csv: missing header row");
  t.header = split_line(line);
  for (const auto& h : t.header)
    if (h.empty()) throw InvalidArgument("csv: empty column name in header");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw InvalidArgument("csv: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      const auto res = std::from_chars(c.data(), c.data() + c.size(), row[i]);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
        throw InvalidArgument("csv: line " + std::to_string(lineno) + ": cannot parse '" + c + "' as a number");
    }
    rows.push_back(std::move(row));
  }
  t.data.resize(static_cast<Eigen::Index>(t.header.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i)
      t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& path) {
  try {
    return parse_csv(read_file(path));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_csv(const std::vector<std::string>& header, const Mat& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.rows())
    throw InvalidArgument("csv: header has " + std::to_string(header.size()) + " names for " +
                          std::to_string(data.rows()) + " fields");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      if (i) out += ',';
      out += format_double(data(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open '" + tmp + "' for writing");
    out << text;
    if (!out) throw InvalidArgument("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, target);
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& data) {
  write_file_atomic(path, format_csv(header, data));
}

std::vector<std::string> sample_header(std::size_t n, std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t i = 0; i < d; ++i) h.push_back("y" + std::to_string(i));
  for (std::size_t i = 0; i < n; ++i) h.push_back("x" + std::to_string(i));
  return h;
}

void write_samples_csv(const std::string& path, const Mat& x, const Mat* y) {
  if (y == nullptr) {
    write_csv(path, sample_header(static_cast<std::size_t>(x.rows())), x);
    return;
  }
  if (y->cols() != x.cols()) throw InvalidArgument("write_samples_csv: y and x column counts differ");
  Mat joint(y->rows() + x.rows(), x.cols());
  joint << *y, x;
  write_csv(path, sample_header(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(y->rows())), joint);
}

}  // namespace proxflow
