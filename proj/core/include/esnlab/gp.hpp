#pragma once

#include <Eigen/Dense>
#include <vector>

#include "esnlab/errors.hpp"

namespace esnlab {

/// Matern-5/2 kernel with per-dimension length scales (2-D search space).
struct MaternParams {
    Eigen::Vector2d length_scales{0.3, 0.3};
    double signal_var = 1.0;
};

double matern52(const MaternParams& p, const Eigen::Vector2d& a,
                const Eigen::Vector2d& b);

/// Noise-free Gaussian-Process regression over the scaled [0,1]^2 search
/// space. Targets are standardized internally; posteriors are reported in the
/// original units. The covariance is regularized by a 1e-10 diagonal jitter,
/// escalated tenfold (up to 1e-6) if the Cholesky factorization fails.
class GpSurrogate {
public:
    /// Kernel hyperparameters chosen by maximizing the log marginal
    /// likelihood: 10-restart Nelder-Mead over log length scales in
    /// [1e-2, 10] and log signal variance in [1e-4, 1e4]. Deterministic.
    static GpSurrogate fit(const std::vector<Eigen::Vector2d>& x,
                           const Eigen::VectorXd& y);

    /// Conditioning only, with the kernel fixed by the caller.
    static GpSurrogate fit_fixed(const std::vector<Eigen::Vector2d>& x,
                                 const Eigen::VectorXd& y, const MaternParams& params);

    struct Posterior {
        double mean = 0.0;
        double stddev = 0.0;
    };
    Posterior posterior(const Eigen::Vector2d& x) const;

    /// Batched posterior over query rows; the 100x100 acquisition lattice
    /// goes through here.
    void posterior_batch(const Eigen::Ref<const Eigen::MatrixX2d>& queries,
                         Eigen::VectorXd& mean, Eigen::VectorXd& stddev) const;

    const MaternParams& kernel() const { return params_; }
    double jitter() const { return jitter_; }
    Eigen::Index n_train() const { return static_cast<Eigen::Index>(x_.size()); }

private:
    void condition();
    double log_marginal_likelihood() const;

    std::vector<Eigen::Vector2d> x_;
    Eigen::VectorXd y_std_;  // standardized targets
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    MaternParams params_;
    double jitter_ = 1e-10;
    Eigen::MatrixXd chol_l_;
    Eigen::VectorXd alpha_;  // (K + jitter I)^-1 y_std
};

}  // namespace esnlab
