#include "esnlab/hpo.hpp"

#include <cmath>

#include "esnlab/detail/nelder_mead.hpp"
#include "esnlab/errors.hpp"
#include "esnlab/rng.hpp"
#include "esnlab/validation.hpp"

namespace esnlab {

void SearchSpace::validate() const {
    for (int d = 0; d < 2; ++d) {
        if (!(lo[d] < hi[d])) throw InvalidArgument("search space needs lo < hi");
        if (scale[d] == AxisScale::Log10 && !(lo[d] > 0.0))
            throw InvalidArgument("log10-scaled dimension needs lo > 0");
    }
}

Eigen::Vector2d SearchSpace::to_physical(const Eigen::Vector2d& unit) const {
    Eigen::Vector2d out;
    for (int d = 0; d < 2; ++d) {
        const double t = std::clamp(unit[d], 0.0, 1.0);
        if (scale[d] == AxisScale::Linear) {
            out[d] = lo[d] + t * (hi[d] - lo[d]);
        } else {
            const double llo = std::log10(lo[d]);
            const double lhi = std::log10(hi[d]);
            out[d] = std::pow(10.0, llo + t * (lhi - llo));
        }
    }
    return out;
}

Eigen::Vector2d SearchSpace::to_unit(const Eigen::Vector2d& physical) const {
    Eigen::Vector2d out;
    for (int d = 0; d < 2; ++d) {
        if (scale[d] == AxisScale::Linear) {
            out[d] = (physical[d] - lo[d]) / (hi[d] - lo[d]);
        } else {
            const double llo = std::log10(lo[d]);
            const double lhi = std::log10(hi[d]);
            out[d] = (std::log10(physical[d]) - llo) / (lhi - llo);
        }
    }
    return out;
}

namespace {

double safe_eval(const Objective& objective, const Eigen::Vector2d& phys) {
    try {
        const double v = objective(phys[0], phys[1]);
        return std::isfinite(v) ? v : kLogMseCap;
    } catch (const std::exception&) {
        return kLogMseCap;
    }
}

std::vector<Eigen::Vector2d> unit_lattice(int nx, int ny) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(static_cast<std::size_t>(nx) * ny);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            pts.emplace_back(nx > 1 ? static_cast<double>(i) / (nx - 1) : 0.5,
                             ny > 1 ? static_cast<double>(j) / (ny - 1) : 0.5);
    return pts;
}

}  // namespace

GridSearchResult grid_search(const Objective& objective, const SearchSpace& space,
                             std::array<int, 2> grid_shape) {
    space.validate();
    if (grid_shape[0] < 1 || grid_shape[1] < 1)
        throw InvalidArgument("grid shape must be positive per dimension");

    GridSearchResult res;
    std::size_t best_index = 0;
    for (const Eigen::Vector2d& unit : unit_lattice(grid_shape[0], grid_shape[1])) {
        GridPoint p;
        p.unit = unit;
        p.physical = space.to_physical(unit);
        p.value = objective(p.physical[0], p.physical[1]);
        res.table.push_back(p);
        if (res.table.size() == 1 || p.value < res.table[best_index].value)
            best_index = res.table.size() - 1;
    }
    res.best_physical = res.table[best_index].physical;
    res.best_unit = res.table[best_index].unit;
    res.best_value = res.table[best_index].value;
    return res;
}

AcquisitionValues acquisitions(const GpSurrogate& surrogate, const Eigen::Vector2d& x,
                               double best_y, double kappa) {
    const auto post = surrogate.posterior(x);
    return acquisitions_from_moments(post.mean, post.stddev, best_y, kappa);
}

AcquisitionValues acquisitions_from_moments(double mean, double stddev, double best_y,
                                            double kappa) {
    AcquisitionValues a;
    const double improve = best_y - mean;
    if (stddev <= 1e-300) {
        a.pi = improve > 0.0 ? 1.0 : 0.0;
        a.ei = std::max(improve, 0.0);
    } else {
        const double z = improve / stddev;
        const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
        a.pi = cdf;
        a.ei = improve * cdf + stddev * pdf;
    }
    a.lcb = -(mean - kappa * stddev);
    return a;
}

std::array<double, 3> HedgeState::probabilities() const {
    const double m = std::max({gains[0], gains[1], gains[2]});
    std::array<double, 3> p{};
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        p[i] = std::exp(eta * (gains[i] - m));
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace {

constexpr int kAcqLattice = 100;
constexpr int kPolishIters = 50;
constexpr double kKappa = 1.96;

// One acquisition's proposal: lattice argmax then a local polish.
Eigen::Vector2d propose(const GpSurrogate& gp, const Eigen::VectorXd& mean,
                        const Eigen::VectorXd& sd, const Eigen::MatrixX2d& lattice,
                        double best_y, int which) {
    Eigen::Index best_i = 0;
    double best_a = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < lattice.rows(); ++i) {
        const auto a = acquisitions_from_moments(mean[i], sd[i], best_y, kKappa);
        const double v = which == 0 ? a.pi : which == 1 ? a.ei : a.lcb;
        if (v > best_a) {
            best_a = v;
            best_i = i;
        }
    }

    std::function<double(const Eigen::Vector2d&)> neg_acq =
        [&gp, best_y, which](const Eigen::Vector2d& x) {
            const auto a = acquisitions(gp, x, best_y, kKappa);
            return -(which == 0 ? a.pi : which == 1 ? a.ei : a.lcb);
        };
    const Eigen::Vector2d lo = Eigen::Vector2d::Zero();
    const Eigen::Vector2d hi = Eigen::Vector2d::Ones();
    return detail::nelder_mead<2>(neg_acq, lattice.row(best_i).transpose(),
                                  2.0 / kAcqLattice, lo, hi, kPolishIters);
}

}  // namespace

BoResult bayesian_optimize(const Objective& objective, const SearchSpace& space,
                           int n_start, int n_acquire, std::uint64_t seed,
                           std::optional<double> surrogate_saturation) {
    space.validate();
    if (n_start < 2) throw InvalidArgument("bayesian_optimize needs n_start >= 2");
    if (n_acquire < 0) throw InvalidArgument("n_acquire must be >= 0");

    Rng rng(seed);
    std::vector<Eigen::Vector2d> xs;
    Eigen::VectorXd ys;
    BoResult res;

    // Initial design: the largest full tensor lattice, topped up with seeded
    // uniform points when n_start is not a perfect square.
    const int g = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_start))));
    std::vector<Eigen::Vector2d> init = unit_lattice(g, g);
    while (static_cast<int>(init.size()) < n_start)
        init.emplace_back(rng.next_double(), rng.next_double());

    auto record = [&](const Eigen::Vector2d& unit, double value,
                      const std::string& acq, const std::array<double, 3>& probs) {
        xs.push_back(unit);
        ys.conservativeResize(static_cast<Eigen::Index>(xs.size()));
        ys[static_cast<Eigen::Index>(xs.size()) - 1] = value;
        BoTracePoint tp;
        tp.iteration = static_cast<int>(xs.size()) - 1;
        tp.physical = space.to_physical(unit);
        tp.value = value;
        tp.acquisition = acq;
        tp.probabilities = probs;
        res.trace.push_back(tp);
    };

    for (const auto& unit : init)
        record(unit, safe_eval(objective, space.to_physical(unit)), "init",
               {0.0, 0.0, 0.0});

    // Shared evaluation lattice for the three acquisition argmaxes.
    Eigen::MatrixX2d lattice(kAcqLattice * kAcqLattice, 2);
    {
        Eigen::Index r = 0;
        for (const auto& p : unit_lattice(kAcqLattice, kAcqLattice))
            lattice.row(r++) = p.transpose();
    }

    HedgeState hedge;
    static const char* kAcqNames[3] = {"pi", "ei", "lcb"};

    for (int t = 0; t < n_acquire; ++t) {
        const Eigen::VectorXd ys_sat =
            surrogate_saturation ? ys.cwiseMin(*surrogate_saturation).eval() : ys;
        const GpSurrogate gp = GpSurrogate::fit(xs, ys_sat);
        const double best_y = ys_sat.minCoeff();

        Eigen::VectorXd mean, sd;
        gp.posterior_batch(lattice, mean, sd);

        std::array<Eigen::Vector2d, 3> candidates;
        for (int j = 0; j < 3; ++j)
            candidates[j] = propose(gp, mean, sd, lattice, best_y, j);

        const auto probs = hedge.probabilities();
        const double coin = rng.next_double();
        int chosen = 0;
        for (double acc = 0.0; chosen < 2; ++chosen) {
            acc += probs[chosen];
            if (coin < acc) break;
        }

        // A noise-free GP cannot absorb duplicates, and with collapsed length
        // scales the acquisitions re-propose points a hair away from known
        // ones. Re-proposals fall back to the chosen acquisition's best cell
        // at least one lattice cell away from every evaluated point.
        const double novelty = 1.5 / kAcqLattice;
        auto nearest_sample = [&xs](const Eigen::Vector2d& p) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& x : xs) d = std::min(d, (x - p).norm());
            return d;
        };
        Eigen::Vector2d x_new = candidates[chosen];
        if (nearest_sample(x_new) < novelty) {
            double best_a = -std::numeric_limits<double>::infinity();
            bool found = false;
            for (Eigen::Index i = 0; i < lattice.rows(); ++i) {
                const Eigen::Vector2d cell = lattice.row(i).transpose();
                if (nearest_sample(cell) < novelty) continue;
                const auto a =
                    acquisitions_from_moments(mean[i], sd[i], best_y, kKappa);
                const double v = chosen == 0 ? a.pi : chosen == 1 ? a.ei : a.lcb;
                if (v > best_a) {
                    best_a = v;
                    x_new = cell;
                    found = true;
                }
            }
            if (!found)  // space exhausted; perturb deterministically
                x_new = Eigen::Vector2d(std::clamp(x_new[0] + rng.uniform(-1e-4, 1e-4), 0.0, 1.0),
                                        std::clamp(x_new[1] + rng.uniform(-1e-4, 1e-4), 0.0, 1.0));
        }

        // Reward every acquisition with the negated posterior mean at its own
        // candidate, so proposals predicted low grow their gain.
        for (int j = 0; j < 3; ++j)
            hedge.gains[j] += -gp.posterior(candidates[j]).mean;

        record(x_new, safe_eval(objective, space.to_physical(x_new)),
               kAcqNames[chosen], probs);
    }

    Eigen::Index best_i = 0;
    ys.minCoeff(&best_i);
    res.best_physical = space.to_physical(xs[static_cast<std::size_t>(best_i)]);
    res.best_value = ys[best_i];
    return res;
}

}  // namespace esnlab
