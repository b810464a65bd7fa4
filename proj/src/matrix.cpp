#include "mvod/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvod/errors.hpp"

namespace mvod {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ContractViolation("matmul: inner dimensions disagree");
    Matrix c(a.rows, b.cols, 0.0);
    // i-k-j order: the inner loop walks contiguous rows of b and c.
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.data[i * a.cols + k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

double row_cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ContractViolation("row_cosine: length mismatch");
    const double na = std::max(norm2(a), kNormClamp);
    const double nb = std::max(norm2(b), kNormClamp);
    return dot(a, b) / (na * nb);
}

Matrix pairwise_cosine(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ContractViolation("pairwise_cosine: column mismatch");
    Matrix c(a.rows, b.rows);
    std::vector<double> inv_na(a.rows), inv_nb(b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        inv_na[i] = 1.0 / std::max(norm2(a.row(i)), kNormClamp);
    for (std::size_t j = 0; j < b.rows; ++j)
        inv_nb[j] = 1.0 / std::max(norm2(b.row(j)), kNormClamp);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j)
            c.at(i, j) = dot(a.row(i), b.row(j)) * inv_na[i] * inv_nb[j];
    return c;
}

double logsumexp(std::span<const double> values) {
    if (values.empty())
        throw ContractViolation("logsumexp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    if (!std::isfinite(m)) return m; // all -inf
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data)); }

} // namespace mvod
