#pragma once

#include <cmath>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace graspall {

/// Row-major dense matrix of doubles. Deliberately minimal: the model layers
/// need products, transposed products and row softmax, nothing else.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double v = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, v) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    static Mat random(int r, int c, double scale, Rng& rng) {
        Mat m(r, c);
        for (auto& v : m.a) v = scale * rng.normal();
        return m;
    }
};

inline Mat matmul(const Mat& A, const Mat& B) {
    require(A.cols == B.rows, "matmul: inner dimensions differ");
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int k = 0; k < A.cols; ++k) {
            double aik = A.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
            double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

/// A^T * B with A of shape (k x m), B of shape (k x n).
inline Mat matmul_ta(const Mat& A, const Mat& B) {
    require(A.rows == B.rows, "matmul_ta: leading dimensions differ");
    Mat C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k) {
        for (int i = 0; i < A.cols; ++i) {
            double aki = A.at(k, i);
            if (aki == 0.0) continue;
            const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
            double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return C;
}

/// A * B^T with A of shape (m x k), B of shape (n x k).
inline Mat matmul_tb(const Mat& A, const Mat& B) {
    require(A.cols == B.cols, "matmul_tb: trailing dimensions differ");
    Mat C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            const double* ar = &A.a[static_cast<std::size_t>(i) * A.cols];
            const double* br = &B.a[static_cast<std::size_t>(j) * B.cols];
            for (int k = 0; k < A.cols; ++k) s += ar[k] * br[k];
            C.at(i, j) = s;
        }
    }
    return C;
}

/// In-place row-wise softmax with max subtraction.
inline void softmax_rows(Mat& m) {
    for (int i = 0; i < m.rows; ++i) {
        double* row = &m.a[static_cast<std::size_t>(i) * m.cols];
        double mx = row[0];
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

} // namespace graspall
