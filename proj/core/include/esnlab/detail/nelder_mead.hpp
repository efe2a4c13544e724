#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>

namespace esnlab::detail {

/// Box-clipped Nelder-Mead minimizer. Deterministic; used for the GP marginal
/// likelihood (3-D) and the acquisition polish (2-D).
template <int Dim>
Eigen::Matrix<double, Dim, 1> nelder_mead(
    const std::function<double(const Eigen::Matrix<double, Dim, 1>&)>& f,
    Eigen::Matrix<double, Dim, 1> x0, double step,
    const Eigen::Matrix<double, Dim, 1>& lo, const Eigen::Matrix<double, Dim, 1>& hi,
    int max_iter) {
    using Vec = Eigen::Matrix<double, Dim, 1>;
    auto clip = [&](Vec v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };

    std::array<Vec, Dim + 1> simplex;
    std::array<double, Dim + 1> values;
    simplex[0] = clip(x0);
    values[0] = f(simplex[0]);
    for (int i = 0; i < Dim; ++i) {
        Vec v = simplex[0];
        v[i] = (v[i] + step <= hi[i]) ? v[i] + step : v[i] - step;
        simplex[i + 1] = clip(v);
        values[i + 1] = f(simplex[i + 1]);
    }

    auto order = [&]() {
        for (int i = 0; i <= Dim; ++i)
            for (int j = i + 1; j <= Dim; ++j)
                if (values[j] < values[i]) {
                    std::swap(values[i], values[j]);
                    std::swap(simplex[i], simplex[j]);
                }
    };

    for (int it = 0; it < max_iter; ++it) {
        order();
        if (std::abs(values[Dim] - values[0]) < 1e-12 * (1.0 + std::abs(values[0])))
            break;
        Vec centroid = Vec::Zero();
        for (int i = 0; i < Dim; ++i) centroid += simplex[i];
        centroid /= static_cast<double>(Dim);

        const Vec xr = clip(centroid + (centroid - simplex[Dim]));
        const double fr = f(xr);
        if (fr < values[0]) {
            const Vec xe = clip(centroid + 2.0 * (centroid - simplex[Dim]));
            const double fe = f(xe);
            simplex[Dim] = fe < fr ? xe : xr;
            values[Dim] = std::min(fe, fr);
        } else if (fr < values[Dim - 1]) {
            simplex[Dim] = xr;
            values[Dim] = fr;
        } else {
            const Vec xc = clip(centroid + 0.5 * (simplex[Dim] - centroid));
            const double fc = f(xc);
            if (fc < values[Dim]) {
                simplex[Dim] = xc;
                values[Dim] = fc;
            } else {
                for (int i = 1; i <= Dim; ++i) {
                    simplex[i] = clip(simplex[0] + 0.5 * (simplex[i] - simplex[0]));
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    order();
    return simplex[0];
}

}  // namespace esnlab::detail
