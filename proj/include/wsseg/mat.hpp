#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wsseg/errors.hpp"

namespace wsseg {

// Dense row-major matrix of doubles. Used both for parameters/activations
// (rows x cols) and for single-channel images (rows = H, cols = W).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }
};

inline void require_shape(const Mat& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c) {
        throw DataError(std::string(what) + ": expected [" + std::to_string(r) + "x" +
                        std::to_string(c) + "], got " + m.shape_str());
    }
}

inline void require_same_shape(const Mat& x, const Mat& y, const char* what) {
    if (!x.same_shape(y)) {
        throw DataError(std::string(what) + ": shape mismatch " + x.shape_str() + " vs " +
                        y.shape_str());
    }
}

// C = A * B
inline Mat mat_mul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) {
        throw DataError("mat_mul: inner dims " + A.shape_str() + " vs " + B.shape_str());
    }
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        double* crow = &C.a[static_cast<size_t>(i) * C.cols];
        for (int k = 0; k < A.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

// C = A * B^T   (rows of B are dotted against rows of A)
inline Mat mat_mul_nt(const Mat& A, const Mat& B) {
    if (A.cols != B.cols) {
        throw DataError("mat_mul_nt: inner dims " + A.shape_str() + " vs " + B.shape_str());
    }
    Mat C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        for (int j = 0; j < B.rows; ++j) {
            const double* brow = &B.a[static_cast<size_t>(j) * B.cols];
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            C.a[static_cast<size_t>(i) * C.cols + j] = s;
        }
    }
    return C;
}

// C = A^T * B
inline Mat mat_mul_tn(const Mat& A, const Mat& B) {
    if (A.rows != B.rows) {
        throw DataError("mat_mul_tn: inner dims " + A.shape_str() + " vs " + B.shape_str());
    }
    Mat C(A.cols, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        const double* brow = &B.a[static_cast<size_t>(i) * B.cols];
        for (int k = 0; k < A.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            double* crow = &C.a[static_cast<size_t>(k) * C.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

// dst += s * src
inline void add_scaled(Mat& dst, const Mat& src, double s = 1.0) {
    require_same_shape(dst, src, "add_scaled");
    for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += s * src.a[i];
}

inline Mat transpose(const Mat& A) {
    Mat T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
    return T;
}

inline bool all_finite(const Mat& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace wsseg
