#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tabuq/matrix.hpp"
#include "tabuq/rng.hpp"

namespace tabuq::testing {

inline double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max({1.0, std::fabs(got), std::fabs(want)});
}

// Central finite difference of a scalar function of one packed parameter
// vector.
inline std::vector<double> central_fd(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> at, double h = 1e-5) {
    std::vector<double> grad(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double keep = at[i];
        at[i] = keep + h;
        const double up = f(at);
        at[i] = keep - h;
        const double down = f(at);
        at[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}

}  // namespace tabuq::testing
