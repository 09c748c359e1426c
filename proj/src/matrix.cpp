#include "tabuq/matrix.hpp"

#include <cmath>

namespace tabuq {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        detail::require(row.size() == c, "Matrix::from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    detail::require(a.cols() == b.rows(), "matmul: shape mismatch (" + std::to_string(a.rows()) +
                                              "x" + std::to_string(a.cols()) + " * " +
                                              std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()) + ")");
    Matrix c(a.rows(), b.cols(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* bk = b.row_ptr(kk);
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    detail::require(a.cols() == b.cols(), "matmul_nt: shape mismatch");
    Matrix c(a.rows(), b.rows(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    detail::require(a.rows() == b.rows(), "matmul_tn: shape mismatch");
    Matrix c(a.cols(), b.cols(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row_ptr(i);
        const double* bi = b.row_ptr(i);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            double* ck = c.row_ptr(kk);
            for (std::size_t j = 0; j < m; ++j) ck[j] += av * bi[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    // Piecewise form keeps exp() in range; within 1e-12 of log(1+exp(x)).
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

namespace {
template <typename F>
Matrix elementwise(const Matrix& x, F f) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return y;
}
}  // namespace

Matrix relu(const Matrix& x) {
    return elementwise(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Matrix sigmoid(const Matrix& x) { return elementwise(x, sigmoid_scalar); }

Matrix softplus(const Matrix& x) { return elementwise(x, softplus_scalar); }

}  // namespace tabuq
