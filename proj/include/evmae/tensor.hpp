#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <vector>

#include "evmae/errors.hpp"
#include "evmae/rng.hpp"

namespace evmae {

/// Dense row-major 2-D array of doubles. Scalars are 1x1; vectors are 1xN.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    std::size_t numel() const { return rows * cols; }
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EMat> emap(const Tensor& t) {
    return {t.v.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}
inline Eigen::Map<EMat> emap(Tensor& t) {
    return {t.v.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}

/// Truncated-normal fill (resampled beyond 2 sigma), the init used for all
/// weight matrices.
inline void fill_truncated_normal(Tensor& t, double sigma, Rng& rng) {
    for (double& x : t.v) x = rng.truncated_normal(sigma);
}

}  // namespace evmae
