#pragma once
// Dense row-major 2-D tensor. Column vectors are [n x 1], scalars [1 x 1].
// Either dimension may be zero; kernels must tolerate empty operands.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace knews {

template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;  // row-major, size rows*cols

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {
        if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
    }
    Tensor(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != numel()) throw std::invalid_argument("Tensor: data/shape mismatch");
    }

    static Tensor col(std::vector<T> d) {
        int n = static_cast<int>(d.size());
        return Tensor(n, 1, std::move(d));
    }
    static Tensor scalar(T v) { return Tensor(1, 1, {v}); }

    size_t numel() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
    bool empty() const { return numel() == 0; }

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    void add_inplace(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

namespace detail {
template <typename T>
using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EigenMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EigenMat<T>>;

template <typename T>
CMap<T> cmap(const Tensor<T>& t) {
    return CMap<T>(t.data.data(), t.rows, t.cols);
}
template <typename T>
Map<T> map(Tensor<T>& t) {
    return Map<T>(t.data.data(), t.rows, t.cols);
}
}  // namespace detail

// C = op(A) * op(B), or C += ... when accumulate is set.
template <typename T>
void gemm(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb, Tensor<T>& c, bool accumulate) {
    const int m = ta ? a.cols : a.rows;
    const int k = ta ? a.rows : a.cols;
    const int kb = tb ? b.cols : b.rows;
    const int n = tb ? b.rows : b.cols;
    if (k != kb) throw std::invalid_argument("gemm: inner dimension mismatch " + a.shape_str() + (ta ? "^T" : "") + " * " + b.shape_str() + (tb ? "^T" : ""));
    if (c.rows != m || c.cols != n) {
        if (accumulate) throw std::invalid_argument("gemm: output shape mismatch");
        c = Tensor<T>(m, n);
    }
    if (m == 0 || n == 0) return;
    auto cm = detail::map(c);
    if (k == 0) {
        if (!accumulate) cm.setZero();
        return;
    }
    auto am = detail::cmap(a);
    auto bm = detail::cmap(b);
    if (!accumulate) {
        if (!ta && !tb) cm.noalias() = am * bm;
        else if (ta && !tb) cm.noalias() = am.transpose() * bm;
        else if (!ta && tb) cm.noalias() = am * bm.transpose();
        else cm.noalias() = am.transpose() * bm.transpose();
    } else {
        if (!ta && !tb) cm.noalias() += am * bm;
        else if (ta && !tb) cm.noalias() += am.transpose() * bm;
        else if (!ta && tb) cm.noalias() += am * bm.transpose();
        else cm.noalias() += am.transpose() * bm.transpose();
    }
}

template <typename T>
Tensor<T> matmul_values(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb) {
    Tensor<T> c;
    gemm(a, ta, b, tb, c, false);
    return c;
}

// Column-wise masked softmax over rows. Masked rows get exactly 0; a column
// whose rows are all masked comes back all zero. mask may be null (no mask),
// a per-row mask (rows x 1) applied to every column, or a full rows x cols mask.
template <typename T>
Tensor<T> masked_softmax_columns(const Tensor<T>& scores, const std::vector<uint8_t>* row_mask,
                                 const Tensor<uint8_t>* full_mask = nullptr) {
    if (row_mask && static_cast<int>(row_mask->size()) != scores.rows)
        throw std::invalid_argument("masked_softmax_columns: row mask length mismatch");
    if (full_mask && (full_mask->rows != scores.rows || full_mask->cols != scores.cols))
        throw std::invalid_argument("masked_softmax_columns: mask shape mismatch");
    Tensor<T> out(scores.rows, scores.cols);
    for (int j = 0; j < scores.cols; ++j) {
        T mx = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (int i = 0; i < scores.rows; ++i) {
            bool live = row_mask ? (*row_mask)[i] != 0 : (full_mask ? full_mask->at(i, j) != 0 : true);
            if (!live) continue;
            any = true;
            if (!std::isfinite(static_cast<double>(scores.at(i, j))))
                throw std::domain_error("masked_softmax_columns: non-finite input");
            if (scores.at(i, j) > mx) mx = scores.at(i, j);
        }
        if (!any) continue;  // fully masked column stays zero
        T denom = T(0);
        for (int i = 0; i < scores.rows; ++i) {
            bool live = row_mask ? (*row_mask)[i] != 0 : (full_mask ? full_mask->at(i, j) != 0 : true);
            if (!live) continue;
            T e = std::exp(scores.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int i = 0; i < scores.rows; ++i) out.at(i, j) /= denom;
    }
    return out;
}

}  // namespace knews
