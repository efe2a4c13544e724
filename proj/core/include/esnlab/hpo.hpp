#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "esnlab/gp.hpp"

namespace esnlab {

enum class AxisScale { Linear, Log10 };

/// 2-D hyperparameter box. Optimizers work in scaled unit coordinates
/// ([0,1]^2 after the per-dimension linear/log10 map); objectives receive
/// physical coordinates.
struct SearchSpace {
    std::array<double, 2> lo{0.5, 0.1};
    std::array<double, 2> hi{5.0, 1.0};
    std::array<AxisScale, 2> scale{AxisScale::Linear, AxisScale::Linear};

    void validate() const;
    Eigen::Vector2d to_physical(const Eigen::Vector2d& unit) const;
    Eigen::Vector2d to_unit(const Eigen::Vector2d& physical) const;
};

/// Objective in physical coordinates (sigma_in, rho) -> value to minimize.
using Objective = std::function<double(double, double)>;

struct GridPoint {
    Eigen::Vector2d physical;
    Eigen::Vector2d unit;
    double value = 0.0;
};

struct GridSearchResult {
    Eigen::Vector2d best_physical;
    Eigen::Vector2d best_unit;
    double best_value = 0.0;
    std::vector<GridPoint> table;  // row-major over the tensor grid
};

/// Exhaustive tensor grid, endpoints included, equally spaced in scaled
/// coordinates; ties break to the lowest row-major index.
GridSearchResult grid_search(const Objective& objective, const SearchSpace& space,
                             std::array<int, 2> grid_shape);

/// Acquisition values under the minimization convention. sigma = 0 falls back
/// to the exact limits. The LCB score is -(mu - kappa sigma) with kappa =
/// 1.96, so maximizing it minimizes the lower confidence bound.
struct AcquisitionValues {
    double pi = 0.0;
    double ei = 0.0;
    double lcb = 0.0;
};
AcquisitionValues acquisitions(const GpSurrogate& surrogate, const Eigen::Vector2d& x,
                               double best_y, double kappa = 1.96);
AcquisitionValues acquisitions_from_moments(double mean, double stddev, double best_y,
                                            double kappa = 1.96);

/// Cumulative-reward portfolio over {PI, EI, LCB}.
struct HedgeState {
    std::array<double, 3> gains{0.0, 0.0, 0.0};
    double eta = 1.0;

    std::array<double, 3> probabilities() const;
};

struct BoTracePoint {
    int iteration = 0;               // 0-based over all evaluations
    Eigen::Vector2d physical;
    double value = 0.0;
    std::string acquisition;         // "init", "pi", "ei" or "lcb"
    std::array<double, 3> probabilities{0.0, 0.0, 0.0};
};

struct BoResult {
    Eigen::Vector2d best_physical;
    double best_value = 0.0;
    std::vector<BoTracePoint> trace;
};

/// gp-hedge Bayesian optimization: an n_start tensor lattice of initial
/// evaluations, then n_acquire rounds of fit / propose (one candidate per
/// acquisition, argmax on a 100x100 lattice plus a Nelder-Mead polish) /
/// softmax-select / evaluate. Rewards add the negated posterior mean at each
/// acquisition's own candidate. Failed objective evaluations record the +6
/// cap and the search continues. Bit-reproducible for a fixed seed.
///
/// surrogate_saturation, when set, clips the targets the surrogate sees from
/// above (trace and returned values stay unclipped). Divergence plateaus in a
/// log-MSE objective otherwise collapse the kernel's length scales; the
/// validation objective uses 0.0, i.e. MSE saturated at 1.
BoResult bayesian_optimize(const Objective& objective, const SearchSpace& space,
                           int n_start, int n_acquire, std::uint64_t seed,
                           std::optional<double> surrogate_saturation = {});

}  // namespace esnlab
