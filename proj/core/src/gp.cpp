#include "esnlab/gp.hpp"

#include <cmath>

#include "esnlab/detail/nelder_mead.hpp"
#include "esnlab/rng.hpp"

namespace esnlab {

double matern52(const MaternParams& p, const Eigen::Vector2d& a,
                const Eigen::Vector2d& b) {
    const Eigen::Vector2d d = (a - b).cwiseQuotient(p.length_scales);
    const double r = d.norm();
    const double s = std::sqrt(5.0) * r;
    return p.signal_var * (1.0 + s + 5.0 / 3.0 * r * r) * std::exp(-s);
}

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-6;

Eigen::MatrixXd kernel_matrix(const MaternParams& p,
                              const std::vector<Eigen::Vector2d>& x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = p.signal_var;
        for (Eigen::Index j = 0; j < i; ++j) {
            k(i, j) = matern52(p, x[i], x[j]);
            k(j, i) = k(i, j);
        }
    }
    return k;
}

}  // namespace

void GpSurrogate::condition() {
    Eigen::MatrixXd k = kernel_matrix(params_, x_);

    jitter_ = kJitterStart;
    while (true) {
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += jitter_;
        Eigen::LLT<Eigen::MatrixXd> llt(kj);
        if (llt.info() == Eigen::Success) {
            chol_l_ = llt.matrixL();
            alpha_ = llt.solve(y_std_);
            return;
        }
        if (jitter_ >= kJitterMax)
            throw FactorizationFailure(
                "GP covariance not positive definite even with jitter " +
                std::to_string(jitter_));
        jitter_ *= 10.0;
    }
}

double GpSurrogate::log_marginal_likelihood() const {
    const auto n = static_cast<double>(y_std_.size());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < chol_l_.rows(); ++i)
        log_det += std::log(chol_l_(i, i));
    return -0.5 * y_std_.dot(alpha_) - log_det - 0.5 * n * std::log(2.0 * M_PI);
}

GpSurrogate GpSurrogate::fit_fixed(const std::vector<Eigen::Vector2d>& x,
                                   const Eigen::VectorXd& y,
                                   const MaternParams& params) {
    if (x.empty() || static_cast<Eigen::Index>(x.size()) != y.size())
        throw ShapeMismatch("GP training inputs and targets disagree");
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j)
            if ((x[i] - x[j]).norm() < 1e-12)
                throw InvalidArgument(
                    "duplicate training points are not allowed in a noise-free GP");

    GpSurrogate gp;
    gp.x_ = x;
    gp.y_mean_ = y.mean();
    const double sd = std::sqrt((y.array() - gp.y_mean_).square().sum() /
                                static_cast<double>(y.size()));
    gp.y_scale_ = (y.size() < 2 || sd < 1e-12) ? 1.0 : sd;
    gp.y_std_ = ((y.array() - gp.y_mean_) / gp.y_scale_).matrix();
    gp.params_ = params;
    gp.condition();
    return gp;
}

GpSurrogate GpSurrogate::fit(const std::vector<Eigen::Vector2d>& x,
                             const Eigen::VectorXd& y) {
    GpSurrogate gp = fit_fixed(x, y, MaternParams{});
    if (x.size() < 2) return gp;  // nothing to learn from one point

    // Maximize the log marginal likelihood over
    // theta = (ln l1, ln l2, ln sigma_f^2) within the documented bounds.
    const Eigen::Vector3d lo(std::log(1e-2), std::log(1e-2), std::log(1e-4));
    const Eigen::Vector3d hi(std::log(10.0), std::log(10.0), std::log(1e4));

    std::function<double(const Eigen::Vector3d&)> negative_lml =
        [&gp](const Eigen::Vector3d& theta) {
            GpSurrogate trial = gp;
            trial.params_.length_scales = theta.head<2>().array().exp();
            trial.params_.signal_var = std::exp(theta[2]);
            try {
                trial.condition();
                return -trial.log_marginal_likelihood();
            } catch (const FactorizationFailure&) {
                return 1e30;
            }
        };

    // Deterministic restarts: a default start plus seeded draws in the box.
    std::vector<Eigen::Vector3d> starts;
    starts.emplace_back(std::log(0.3), std::log(0.3), 0.0);
    Rng rng(0x5eedULL);
    while (starts.size() < 10) {
        Eigen::Vector3d s;
        for (int d = 0; d < 3; ++d) s[d] = rng.uniform(lo[d], hi[d]);
        starts.push_back(s);
    }

    Eigen::Vector3d best = Eigen::Vector3d::Zero();
    double best_val = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        const Eigen::Vector3d opt =
            detail::nelder_mead<3>(negative_lml, s, 0.5, lo, hi, 60);
        const double val = negative_lml(opt);
        if (val < best_val) {
            best_val = val;
            best = opt;
        }
    }

    gp.params_.length_scales = best.head<2>().array().exp();
    gp.params_.signal_var = std::exp(best[2]);
    gp.condition();
    return gp;
}

GpSurrogate::Posterior GpSurrogate::posterior(const Eigen::Vector2d& x) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) k_star[i] = matern52(params_, x_[i], x);

    Posterior post;
    post.mean = y_mean_ + y_scale_ * k_star.dot(alpha_);
    const Eigen::VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(k_star);
    const double var = std::max(params_.signal_var - v.squaredNorm(), 0.0);
    post.stddev = y_scale_ * std::sqrt(var);
    return post;
}

void GpSurrogate::posterior_batch(const Eigen::Ref<const Eigen::MatrixX2d>& queries,
                                  Eigen::VectorXd& mean, Eigen::VectorXd& stddev) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    const Eigen::Index m = queries.rows();
    Eigen::MatrixXd k_star(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Vector2d q = queries.row(j).transpose();
        for (Eigen::Index i = 0; i < n; ++i) k_star(i, j) = matern52(params_, x_[i], q);
    }
    mean = ((k_star.transpose() * alpha_).array() * y_scale_ + y_mean_).matrix();
    const Eigen::MatrixXd v = chol_l_.triangularView<Eigen::Lower>().solve(k_star);
    stddev = (y_scale_ *
              (params_.signal_var - v.colwise().squaredNorm().transpose().array())
                  .max(0.0)
                  .sqrt())
                 .matrix();
}

}  // namespace esnlab
