#pragma once

// Plain-text CSV for datasets and matrices: one row per observation,
// comma-separated numbers, optional single header line.

#include "factorlens/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace factorlens {

/// Rows of comma-separated fields. Blank lines are skipped; surrounding
/// whitespace is trimmed from each field.
std::vector<std::vector<std::string>> read_csv_rows(std::istream& in);

/// Numeric matrix from CSV; `skip_header` drops the first non-blank line.
/// Throws InputError on ragged rows or unparsable cells (with line context).
Matrix read_matrix_csv(std::istream& in, bool skip_header = false);
Matrix read_matrix_csv_file(const std::string& path, bool skip_header = false);

Dataset read_dataset_csv_file(const std::string& path, bool skip_header = false);

/// Writes with 17 significant digits so values round-trip exactly.
void write_matrix_csv(std::ostream& out, const Matrix& m,
                      const std::vector<std::string>& header = {});
void write_matrix_csv_file(const std::string& path, const Matrix& m,
                           const std::vector<std::string>& header = {});

/// Strict double parse of a whole field.
double parse_double(const std::string& field);

}  // namespace factorlens
