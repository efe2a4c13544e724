#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "esnlab/gp.hpp"
#include "esnlab/rng.hpp"

using namespace esnlab;

namespace {

// Independent Matern-5/2 evaluation for the oracles.
double matern_oracle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                     const Eigen::Vector2d& ls, double var) {
    double r2 = 0.0;
    for (int d = 0; d < 2; ++d) {
        const double t = (a[d] - b[d]) / ls[d];
        r2 += t * t;
    }
    const double r = std::sqrt(r2);
    return var * (1.0 + std::sqrt(5.0) * r + 5.0 / 3.0 * r2) *
           std::exp(-std::sqrt(5.0) * r);
}

}  // namespace

TEST_CASE("kernel: unit value at zero distance, decays monotonically") {
    MaternParams p;
    p.length_scales << 0.5, 0.25;
    p.signal_var = 2.0;
    const Eigen::Vector2d x(0.3, 0.4);
    CHECK(matern52(p, x, x) == doctest::Approx(2.0));
    double prev = 2.0;
    for (double d : {0.05, 0.1, 0.2, 0.4, 0.8}) {
        const double v = matern52(p, x, x + Eigen::Vector2d(d, 0.0));
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("one training point: exact interpolation and prior reversion") {
    const std::vector<Eigen::Vector2d> x{{0.5, 0.5}};
    Eigen::VectorXd y(1);
    y << -3.7;
    const GpSurrogate gp = GpSurrogate::fit(x, y);

    const auto at = gp.posterior({0.5, 0.5});
    CHECK(at.mean == doctest::Approx(-3.7).epsilon(1e-8));

    // Far away (>= 10 length scales with the bounded scales) the posterior
    // falls back to the training mean.
    const auto far = gp.posterior({150.0, 150.0});
    CHECK(far.mean == doctest::Approx(-3.7).epsilon(1e-6));  // mean of one point
}

TEST_CASE("two points with fixed kernel match the closed-form 2x2 posterior") {
    const std::vector<Eigen::Vector2d> x{{0.2, 0.3}, {0.8, 0.6}};
    Eigen::VectorXd y(2);
    y << 1.0, -2.0;
    MaternParams p;
    p.length_scales << 0.5, 0.7;
    p.signal_var = 1.7;
    const double jitter = 1e-10;
    const GpSurrogate gp = GpSurrogate::fit_fixed(x, y, p);
    REQUIRE(gp.jitter() == doctest::Approx(jitter));

    // Oracle: explicit 2x2 algebra with the standardization replicated.
    const double ym = y.mean();
    const double sd = std::sqrt((y.array() - ym).square().sum() / 2.0);
    const Eigen::Vector2d yt((y[0] - ym) / sd, (y[1] - ym) / sd);

    const double k00 = p.signal_var + jitter;
    const double k11 = p.signal_var + jitter;
    const double k01 = matern_oracle(x[0], x[1], p.length_scales, p.signal_var);
    const double det = k00 * k11 - k01 * k01;

    Rng rng(3);
    for (int t = 0; t < 25; ++t) {
        const Eigen::Vector2d q(rng.next_double(), rng.next_double());
        const double s0 = matern_oracle(q, x[0], p.length_scales, p.signal_var);
        const double s1 = matern_oracle(q, x[1], p.length_scales, p.signal_var);
        // alpha = K^-1 y_t through the adjugate.
        const double a0 = (k11 * yt[0] - k01 * yt[1]) / det;
        const double a1 = (-k01 * yt[0] + k00 * yt[1]) / det;
        const double mean = ym + sd * (s0 * a0 + s1 * a1);
        // var = k(q,q) - k_*^T K^-1 k_*.
        const double q0 = (k11 * s0 - k01 * s1) / det;
        const double q1 = (-k01 * s0 + k00 * s1) / det;
        const double var = p.signal_var - (s0 * q0 + s1 * q1);
        const double sdv = sd * std::sqrt(std::max(var, 0.0));

        const auto post = gp.posterior(q);
        CHECK(post.mean == doctest::Approx(mean).epsilon(1e-10));
        CHECK(post.stddev == doctest::Approx(sdv).epsilon(1e-8));
    }
}

TEST_CASE("noise-free interpolation across a fitted surrogate") {
    Rng rng(9);
    std::vector<Eigen::Vector2d> x;
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
        x.push_back({rng.next_double(), rng.next_double()});
        y[i] = std::sin(3.0 * x.back()[0]) + 0.5 * x.back()[1];
    }
    const GpSurrogate gp = GpSurrogate::fit(x, y);
    for (int i = 0; i < 12; ++i) {
        const auto post = gp.posterior(x[static_cast<std::size_t>(i)]);
        CHECK(std::abs(post.mean - y[i]) < 1e-6);
        CHECK(post.stddev < 1e-4);  // jitter-limited at a training point
        CHECK(post.stddev >= 0.0);
    }
}

TEST_CASE("far-field posterior reverts to the prior spread") {
    std::vector<Eigen::Vector2d> x{{0.4, 0.4}, {0.6, 0.6}, {0.5, 0.3}};
    Eigen::VectorXd y(3);
    y << 1.0, 2.0, 1.5;
    MaternParams p;
    p.length_scales << 0.1, 0.1;
    p.signal_var = 2.5;
    const GpSurrogate gp = GpSurrogate::fit_fixed(x, y, p);
    const double y_sd = std::sqrt((y.array() - y.mean()).square().sum() / 3.0);
    const auto far = gp.posterior({30.0, -30.0});
    CHECK(far.stddev ==
          doctest::Approx(y_sd * std::sqrt(p.signal_var)).epsilon(0.01));
    CHECK(far.mean == doctest::Approx(y.mean()).epsilon(1e-6));
}

TEST_CASE("symmetric two-point configuration pulls the midpoint to the average") {
    std::vector<Eigen::Vector2d> x{{0.3, 0.5}, {0.7, 0.5}};
    Eigen::VectorXd y(2);
    y << 2.0, 4.0;
    MaternParams p;
    p.length_scales << 0.4, 0.4;
    p.signal_var = 1.0;
    const GpSurrogate gp = GpSurrogate::fit_fixed(x, y, p);
    const auto mid = gp.posterior({0.5, 0.5});
    CHECK(mid.mean == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("duplicate training points are rejected") {
    std::vector<Eigen::Vector2d> x{{0.5, 0.5}, {0.5, 0.5}};
    Eigen::VectorXd y(2);
    y << 1.0, 2.0;
    CHECK_THROWS_AS(GpSurrogate::fit(x, y), InvalidArgument);
}

TEST_CASE("batched posterior equals the scalar path") {
    Rng rng(5);
    std::vector<Eigen::Vector2d> x;
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
        x.push_back({rng.next_double(), rng.next_double()});
        y[i] = rng.uniform(-4, 2);
    }
    const GpSurrogate gp = GpSurrogate::fit(x, y);
    Eigen::MatrixX2d queries(50, 2);
    for (int i = 0; i < 50; ++i)
        queries.row(i) << rng.next_double(), rng.next_double();
    Eigen::VectorXd mean, sd;
    gp.posterior_batch(queries, mean, sd);
    for (int i = 0; i < 50; ++i) {
        const auto post = gp.posterior(queries.row(i).transpose());
        CHECK(mean[i] == doctest::Approx(post.mean).epsilon(1e-12));
        CHECK(sd[i] == doctest::Approx(post.stddev).epsilon(1e-12));
    }
}

TEST_CASE("fitted kernel stays within the documented bounds") {
    Rng rng(17);
    std::vector<Eigen::Vector2d> x;
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x.push_back({rng.next_double(), rng.next_double()});
        y[i] = 3.0 * x.back()[0] - x.back()[1] + 0.1 * rng.next_double();
    }
    const GpSurrogate gp = GpSurrogate::fit(x, y);
    for (int d = 0; d < 2; ++d) {
        CHECK(gp.kernel().length_scales[d] >= 1e-2);
        CHECK(gp.kernel().length_scales[d] <= 10.0);
    }
    CHECK(gp.kernel().signal_var >= 1e-4);
    CHECK(gp.kernel().signal_var <= 1e4);
}

TEST_CASE("fit is deterministic") {
    Rng rng(23);
    std::vector<Eigen::Vector2d> x;
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
        x.push_back({rng.next_double(), rng.next_double()});
        y[i] = rng.uniform(-1, 1);
    }
    const GpSurrogate a = GpSurrogate::fit(x, y);
    const GpSurrogate b = GpSurrogate::fit(x, y);
    CHECK(a.kernel().signal_var == b.kernel().signal_var);
    CHECK(a.kernel().length_scales == b.kernel().length_scales);
    const auto pa = a.posterior({0.123, 0.456});
    const auto pb = b.posterior({0.123, 0.456});
    CHECK(pa.mean == pb.mean);
    CHECK(pa.stddev == pb.stddev);
}
