#include "esnlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace esnlab {

double mse(const Eigen::Ref<const Eigen::MatrixXd>& pred,
           const Eigen::Ref<const Eigen::MatrixXd>& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ShapeMismatch("mse: prediction and truth shapes differ");
    if (pred.rows() < 1) throw ShapeMismatch("mse: empty input");
    return (pred - truth).squaredNorm() /
           static_cast<double>(pred.rows() * pred.cols());
}

PredictionHorizon prediction_horizon(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                                     const Eigen::Ref<const Eigen::MatrixXd>& truth,
                                     double k, double dt_network,
                                     double lyapunov_time) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ShapeMismatch("prediction_horizon: shapes differ");
    if (!(k > 0.0)) throw InvalidArgument("threshold k must be > 0");

    const Eigen::Index n = truth.rows();
    const double denom = std::max(
        std::sqrt(truth.squaredNorm() / static_cast<double>(n)), 1e-300);

    for (Eigen::Index i = 0; i < n; ++i) {
        const double err = (pred.row(i) - truth.row(i)).norm() / denom;
        // Non-finite predictions count as an immediate crossing.
        if (!(err < k))
            return {static_cast<double>(i) * dt_network / lyapunov_time, false};
    }
    return {static_cast<double>(n) * dt_network / lyapunov_time, true};
}

namespace {

// Average ranks over ties, 1-based.
Eigen::VectorXd ranks_of(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });

    Eigen::VectorXd ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw ShapeMismatch("spearman: lengths differ");
    if (x.size() < 2) throw ShapeMismatch("spearman: need at least 2 samples");

    const Eigen::VectorXd rx = ranks_of(x);
    const Eigen::VectorXd ry = ranks_of(y);
    const Eigen::VectorXd cx = rx.array() - rx.mean();
    const Eigen::VectorXd cy = ry.array() - ry.mean();
    const double sx = cx.norm();
    const double sy = cy.norm();
    if (sx == 0.0 || sy == 0.0)
        throw ZeroVariance("spearman: a rank vector is constant");
    return cx.dot(cy) / (sx * sy);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw EmptyInput("percentile of an empty sample");
    if (p < 0.0 || p > 100.0) throw InvalidArgument("percentile p outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

Aggregate aggregate(const std::vector<double>& mses,
                    const std::vector<double>& phs_lt) {
    if (mses.empty()) throw EmptyInput("aggregate over an empty result set");

    Aggregate agg;
    double log_sum = 0.0;
    for (double m : mses) log_sum += std::log10(std::max(m, 1e-16));
    agg.mse_geo = std::pow(10.0, log_sum / static_cast<double>(mses.size()));
    agg.mse_pct = {percentile(mses, 25), percentile(mses, 50), percentile(mses, 75)};

    if (!phs_lt.empty()) {
        agg.ph_mean_lt = std::accumulate(phs_lt.begin(), phs_lt.end(), 0.0) /
                         static_cast<double>(phs_lt.size());
        agg.ph_pct = {percentile(phs_lt, 25), percentile(phs_lt, 50),
                      percentile(phs_lt, 75)};
    } else {
        agg.ph_mean_lt = std::numeric_limits<double>::quiet_NaN();
        agg.ph_pct = {agg.ph_mean_lt, agg.ph_mean_lt, agg.ph_mean_lt};
    }
    return agg;
}

TestSuite make_test_suite(const TimeSeriesDataset& ds, int n_starts, double from_lt,
                          double spacing_lt, double interval_lt, double k_threshold,
                          double ph_interval_lt) {
    if (n_starts < 1) throw InvalidArgument("need at least one test start");
    TestSuite suite;
    suite.k_threshold = k_threshold;
    suite.use_ph = ph_interval_lt > 0.0;
    suite.interval_steps =
        static_cast<Eigen::Index>(std::llround(interval_lt * ds.steps_per_lt));
    suite.ph_interval_steps =
        static_cast<Eigen::Index>(std::llround(ph_interval_lt * ds.steps_per_lt));
    const auto from = static_cast<Eigen::Index>(std::llround(from_lt * ds.steps_per_lt));
    const auto spacing =
        static_cast<Eigen::Index>(std::llround(spacing_lt * ds.steps_per_lt));
    for (int i = 0; i < n_starts; ++i) {
        const Eigen::Index s = from + static_cast<Eigen::Index>(i) * spacing;
        if (s - ds.steps_per_lt < 0 || s + suite.rollout_steps() > ds.n_steps())
            throw DatasetTooShort("test interval " + std::to_string(i) +
                                  " falls outside the dataset");
        suite.start_indices.push_back(s);
    }
    return suite;
}

TestSuite default_test_suite(const TimeSeriesDataset& ds, int n_starts_override) {
    switch (ds.variant) {
        case DatasetVariant::LorenzShort:
        case DatasetVariant::LorenzLong:
            return make_test_suite(ds, n_starts_override > 0 ? n_starts_override : 100,
                                   24.0, 3.0, 3.0, 0.2, 6.0);
        case DatasetVariant::KuznetsovChaotic:
            return make_test_suite(ds, n_starts_override > 0 ? n_starts_override : 75,
                                   7.5, 2.0, 2.0, 0.2, 10.0);
        case DatasetVariant::KuznetsovQuasiperiodic:
            return make_test_suite(ds, n_starts_override > 0 ? n_starts_override : 50,
                                   7.5, 2.0, 2.0, 0.2, 0.0);
    }
    throw InvalidArgument("unknown dataset variant");
}

}  // namespace esnlab
