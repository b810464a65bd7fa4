#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mvod {

// Norms below this are clamped before dividing in cosine similarities.
inline constexpr double kNormClamp = 1e-12;

// Dense row-major matrix of doubles. Rows are contiguous, so row(i) spans
// can be handed to the kernels below without copying.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows * cols entries, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * cols, cols};
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Dot product with split accumulators; the split keeps the loop out of a
// single dependency chain without changing the result run to run. These four
// kernels carry most of the training flops, so they live in the header where
// callers can inline them.
inline double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += pa[i] * pb[i];
        s1 += pa[i + 1] * pb[i + 1];
        s2 += pa[i + 2] * pb[i + 2];
        s3 += pa[i + 3] * pb[i + 3];
    }
    for (; i < n; ++i) s0 += pa[i] * pb[i];
    return (s0 + s1) + (s2 + s3);
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size();
    const double* px = x.data();
    double* py = y.data();
    for (std::size_t i = 0; i < n; ++i) py[i] += alpha * px[i];
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double s0 = 0.0, s1 = 0.0;
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const double d0 = pa[i] - pb[i];
        const double d1 = pa[i + 1] - pb[i + 1];
        s0 += d0 * d0;
        s1 += d1 * d1;
    }
    if (i < n) {
        const double d = pa[i] - pb[i];
        s0 += d * d;
    }
    return s0 + s1;
}

// C = A * B. Throws ContractViolation on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Cosine similarity with both norms clamped at kNormClamp, so zero vectors
// yield 0 rather than NaN.
double row_cosine(std::span<const double> a, std::span<const double> b);

// All-pairs cosine similarities between rows of a and rows of b.
Matrix pairwise_cosine(const Matrix& a, const Matrix& b);

// log(sum(exp(v))) computed against the running maximum. Empty input is a
// contract violation.
double logsumexp(std::span<const double> values);

bool all_finite(std::span<const double> v);
bool all_finite(const Matrix& m);

} // namespace mvod
