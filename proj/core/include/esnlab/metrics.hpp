#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "esnlab/dynamics.hpp"
#include "esnlab/errors.hpp"

namespace esnlab {

/// Mean squared error (1/(N*N_u)) sum_i ||pred_i - truth_i||^2.
double mse(const Eigen::Ref<const Eigen::MatrixXd>& pred,
           const Eigen::Ref<const Eigen::MatrixXd>& truth);

/// Time until the normalized error first reaches the threshold k, in
/// Lyapunov-time units. The normalization denominator is the time-average of
/// ||truth||^2 over the whole interval. `censored` marks runs that never
/// crossed the threshold (PH is then a lower bound equal to the interval).
struct PredictionHorizon {
    double ph_lt = 0.0;
    bool censored = false;
};
PredictionHorizon prediction_horizon(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                                     const Eigen::Ref<const Eigen::MatrixXd>& truth,
                                     double k, double dt_network,
                                     double lyapunov_time);

/// Spearman rank correlation with average ranks over ties.
double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Percentile by linear interpolation on the sorted sample, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Per-test-interval scores aggregated over starting points: MSE as a
/// geometric mean (floored at 1e-16), PH as an arithmetic mean in LT.
struct Aggregate {
    double mse_geo = 0.0;
    double ph_mean_lt = 0.0;
    std::array<double, 3> mse_pct{};  // 25 / 50 / 75
    std::array<double, 3> ph_pct{};
};
Aggregate aggregate(const std::vector<double>& mses,
                    const std::vector<double>& phs_lt);

/// Equally spaced closed-loop test starting points along the attractor.
/// The MSE is scored on fixed intervals of interval_steps; the Prediction
/// Horizon keeps rolling out to ph_interval_steps so it does not censor at
/// the MSE window (ph_interval_steps = 0 disables PH scoring entirely).
struct TestSuite {
    std::vector<Eigen::Index> start_indices;
    Eigen::Index interval_steps = 0;
    Eigen::Index ph_interval_steps = 0;
    double k_threshold = 0.2;
    bool use_ph = true;  // quasiperiodic datasets are scored by MSE only

    Eigen::Index rollout_steps() const {
        return std::max(interval_steps, use_ph ? ph_interval_steps : 0);
    }
};

/// `from_lt` is measured from the dataset origin; starts are spaced by
/// `spacing_lt` and each interval spans `interval_lt`.
TestSuite make_test_suite(const TimeSeriesDataset& ds, int n_starts, double from_lt,
                          double spacing_lt, double interval_lt, double k_threshold,
                          double ph_interval_lt);

/// Per-variant defaults: Lorenz 100 starts from 24 LT spaced 3 LT (3 LT MSE
/// intervals, 6 LT PH rollouts); Kuznetsov chaotic 75 starts (2 LT MSE, 10 LT
/// PH) and quasiperiodic 50 starts (2 LT MSE only) from 7.5 LT spaced 2 LT.
TestSuite default_test_suite(const TimeSeriesDataset& ds, int n_starts_override = -1);

}  // namespace esnlab
