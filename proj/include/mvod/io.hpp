#pragma once

#include <string>

#include "mvod/matrix.hpp"

namespace mvod {

// Header-free comma-separated numeric matrix. Ragged or non-numeric input is
// a ConfigError naming the file.
Matrix read_csv_matrix(const std::string& path);

// Values are written with %.17g so a round trip is exact.
void write_csv_matrix(const std::string& path, const Matrix& m);

bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

} // namespace mvod
