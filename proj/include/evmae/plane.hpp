#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "evmae/errors.hpp"

namespace evmae {

/// Least-squares plane dt = a*dx + b*dy + c over a patch in local
/// coordinates, with its mean absolute residual.
struct PlaneFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double residual_mean_abs = 0.0;

    double predict_dt(double dx, double dy) const { return a * dx + b * dy + c; }
};

namespace detail {

/// Solve the symmetric 3x3 system M z = r by Gaussian elimination with
/// partial pivoting. Returns false when M is numerically rank deficient.
inline bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> r,
                   std::array<double, 3>& z) {
    double scale = 0.0;
    for (const auto& row : m)
        for (double v : row) scale = std::max(scale, std::abs(v));
    const double tol = std::max(scale, 1.0) * 1e-12;
    std::array<int, 3> piv = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(m[piv[row]][col]) > std::abs(m[piv[best]][col])) best = row;
        std::swap(piv[col], piv[best]);
        const double pivot = m[piv[col]][col];
        if (std::abs(pivot) < tol) return false;
        for (int row = col + 1; row < 3; ++row) {
            const double f = m[piv[row]][col] / pivot;
            for (int k = col; k < 3; ++k) m[piv[row]][k] -= f * m[piv[col]][k];
            r[piv[row]] -= f * r[piv[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double v = r[piv[col]];
        for (int k = col + 1; k < 3; ++k) v -= m[piv[col]][k] * z[k];
        z[col] = v / m[piv[col]][col];
    }
    return true;
}

}  // namespace detail

/// Fit dt = a*dx + b*dy + c by the normal equations (A^T A) z = A^T B with
/// design rows [dx_i, dy_i, 1] and targets dt_i. Points are a flat k x 3
/// array of local coordinates (dx, dy, dt). Throws DegenerateNeighborhood
/// when the design matrix has rank < 3 (all points on one pixel, collinear
/// pixels, or k < 3).
inline PlaneFit fit_plane(std::span<const double> local_xyz) {
    const std::size_t k = local_xyz.size() / 3;
    require(local_xyz.size() == 3 * k, errc::shape_mismatch, "local points must be k x 3");
    require(k >= 3, errc::degenerate_neighborhood, "plane fit needs at least 3 points");

    // accumulate A^T A and A^T B
    double sxx = 0, sxy = 0, sx = 0, syy = 0, sy = 0;
    double sxt = 0, syt = 0, st = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double dx = local_xyz[3 * i];
        const double dy = local_xyz[3 * i + 1];
        const double dt = local_xyz[3 * i + 2];
        sxx += dx * dx;
        sxy += dx * dy;
        sx += dx;
        syy += dy * dy;
        sy += dy;
        sxt += dx * dt;
        syt += dy * dt;
        st += dt;
    }
    const double n = static_cast<double>(k);
    std::array<std::array<double, 3>, 3> m = {{{sxx, sxy, sx}, {sxy, syy, sy}, {sx, sy, n}}};
    std::array<double, 3> rhs = {sxt, syt, st};
    std::array<double, 3> z{};
    require(detail::solve3(m, rhs, z), errc::degenerate_neighborhood,
            "design matrix rank < 3 in plane fit");

    PlaneFit fit;
    fit.a = z[0];
    fit.b = z[1];
    fit.c = z[2];
    double sum_abs = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sum_abs += std::abs(local_xyz[3 * i + 2] - fit.predict_dt(local_xyz[3 * i], local_xyz[3 * i + 1]));
    }
    fit.residual_mean_abs = sum_abs / n;
    require(std::isfinite(fit.a) && std::isfinite(fit.b) && std::isfinite(fit.c) &&
                std::isfinite(fit.residual_mean_abs),
            errc::degenerate_neighborhood, "non-finite plane coefficients");
    return fit;
}

/// Mean absolute deviation of a patch from a fitted plane. The signed mean
/// residual of a least-squares fit with intercept is identically zero, so the
/// absolute form is what makes a threshold on it meaningful.
inline double patch_error(const PlaneFit& fit, std::span<const double> local_xyz) {
    const std::size_t k = local_xyz.size() / 3;
    require(local_xyz.size() == 3 * k && k > 0, errc::shape_mismatch, "local points must be k x 3");
    double sum_abs = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sum_abs += std::abs(local_xyz[3 * i + 2] - fit.predict_dt(local_xyz[3 * i], local_xyz[3 * i + 1]));
    }
    return sum_abs / static_cast<double>(k);
}

}  // namespace evmae
