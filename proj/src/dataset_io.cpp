#include "factorlens/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace factorlens {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::vector<std::string>> read_csv_rows(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

double parse_double(const std::string& field) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty())
    throw InputError("cannot parse number '" + field + "'");
  return v;
}

Matrix read_matrix_csv(std::istream& in, bool skip_header) {
  auto rows = read_csv_rows(in);
  if (skip_header && !rows.empty()) rows.erase(rows.begin());
  if (rows.empty()) throw InputError("CSV contains no data rows");
  const std::size_t cols = rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      throw InputError("CSV row " + std::to_string(r + 1) + " has " +
                       std::to_string(rows[r].size()) + " fields, expected " +
                       std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      try {
        m(static_cast<Index>(r), static_cast<Index>(c)) = parse_double(rows[r][c]);
      } catch (const InputError& e) {
        throw InputError("CSV row " + std::to_string(r + 1) + ", column " +
                         std::to_string(c + 1) + ": " + e.what());
      }
    }
  }
  return m;
}

Matrix read_matrix_csv_file(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_matrix_csv(in, skip_header);
}

Dataset read_dataset_csv_file(const std::string& path, bool skip_header) {
  return Dataset(read_matrix_csv_file(path, skip_header));
}

void write_matrix_csv(std::ostream& out, const Matrix& m,
                      const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      out << (i ? "," : "") << header[i];
    out << '\n';
  }
  out << std::setprecision(17);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

void write_matrix_csv_file(const std::string& path, const Matrix& m,
                           const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_matrix_csv(out, m, header);
}

}  // namespace factorlens
