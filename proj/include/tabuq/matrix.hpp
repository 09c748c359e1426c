#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabuq {

namespace detail {
inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}
}  // namespace detail

// Dense row-major matrix of doubles. Deliberately minimal: exactly what a
// two-hidden-layer network, its gradients and the tabular pipeline need.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require(data_.size() == rows_ * cols_, "Matrix: data length != rows*cols");
    }

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// c = a * b. Throws on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// c = a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double sigmoid_scalar(double x);
double softplus_scalar(double x);

// Elementwise activations, numerically stable for |x| well past 700.
Matrix relu(const Matrix& x);
Matrix sigmoid(const Matrix& x);
Matrix softplus(const Matrix& x);

}  // namespace tabuq
