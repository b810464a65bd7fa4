#include "mvod/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvod/errors.hpp"

namespace mvod {

Matrix read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path);
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t row_cols = 0;
        const char* p = line.c_str();
        for (;;) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p)
                throw ConfigError(path + ": non-numeric value in row " +
                                  std::to_string(rows + 1));
            values.push_back(v);
            ++row_cols;
            while (*end == ' ' || *end == '\t') ++end;
            if (*end == ',') {
                p = end + 1;
            } else if (*end == '\0') {
                break;
            } else {
                throw ConfigError(path + ": malformed row " + std::to_string(rows + 1));
            }
        }
        if (rows == 0) {
            cols = row_cols;
        } else if (row_cols != cols) {
            throw ConfigError(path + ": ragged row " + std::to_string(rows + 1));
        }
        ++rows;
    }
    if (rows == 0)
        throw ConfigError(path + ": empty file");
    Matrix m(rows, cols);
    m.data = std::move(values);
    return m;
}

void write_csv_matrix(const std::string& path, const Matrix& m) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw ConfigError("cannot write " + path);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j)
            std::fprintf(f, j + 1 < m.cols ? "%.17g," : "%.17g", m.at(i, j));
        std::fputc('\n', f);
    }
    std::fclose(f);
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec)
        throw ConfigError("cannot create directory " + path);
}

} // namespace mvod
