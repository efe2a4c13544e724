#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "esnlab/errors.hpp"

namespace esnlab {

enum class SystemName { Lorenz, Kuznetsov };

/// Autonomous 3-D ODE q' = f(q).
/// Lorenz params are [sigma, beta, rho]; Kuznetsov params are [lambda, omega0, mu].
struct OdeSystem {
    SystemName name = SystemName::Lorenz;
    Eigen::VectorXd params;
    int state_dim = 3;

    static OdeSystem lorenz(double sigma = 10.0, double beta = 8.0 / 3.0,
                            double rho = 28.0);
    /// mu = 0.9 gives the quasiperiodic regime, mu = 0.5 the chaotic one.
    static OdeSystem kuznetsov(double mu, double lambda = 0.0, double omega0 = 2.7);
};

Eigen::Vector3d ode_rhs(const OdeSystem& system, const Eigen::Vector3d& q);

struct TrajectoryConfig {
    double dt_integrator = 0.0;
    int subsample = 1;                  // integrator steps per recorded row
    Eigen::Index n_network_steps = 0;   // rows recorded
    Eigen::Vector3d initial_condition = Eigen::Vector3d::Zero();
    Eigen::Index transient_steps = 0;   // recorded-step units, discarded up front

    void validate() const;
};

/// Forward Euler, row k = state after (transient + k*subsample) integrator
/// steps. Throws NonFiniteState (with the integrator step index) on blow-up.
Eigen::MatrixXd integrate_forward_euler(const OdeSystem& system,
                                        const TrajectoryConfig& cfg);

enum class NormMode { Global, Componentwise };

/// Pure scaling u_norm = u_raw / scale, no offsets. Global mode shares the
/// largest component range across components.
struct NormRecord {
    NormMode mode = NormMode::Global;
    Eigen::VectorXd offsets;  // always zero for max-variation normalization
    Eigen::VectorXd scales;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& normalized) const;
    Eigen::VectorXd apply_row(const Eigen::VectorXd& raw) const;
    Eigen::VectorXd invert_row(const Eigen::VectorXd& normalized) const;
};

NormRecord compute_max_variation_norm(const Eigen::MatrixXd& raw, NormMode mode);

enum class DatasetVariant {
    LorenzShort,            // 12 LT train+val span
    LorenzLong,             // 24 LT train+val span
    KuznetsovQuasiperiodic, // mu = 0.9
    KuznetsovChaotic        // mu = 0.5
};

std::string to_string(DatasetVariant v);
DatasetVariant dataset_variant_from_string(const std::string& s);
std::string to_string(SystemName s);

/// Normalized multivariate trajectory plus the bookkeeping every other module
/// needs: the network time step, the Lyapunov time, the normalization record
/// (knowledge functions evaluate physics in raw units) and the number of
/// leading rows reserved for washout+training+validation.
struct TimeSeriesDataset {
    Eigen::MatrixXd u;        // [n_steps x n_u], normalized
    double dt_network = 0.0;
    double lyapunov_time = 0.0;
    NormRecord norm;
    Eigen::Index steps_per_lt = 0;

    OdeSystem system;
    DatasetVariant variant = DatasetVariant::LorenzShort;
    std::uint64_t seed = 0;
    Eigen::Index span_steps = 0;  // the "n" of the validation schedules

    Eigen::Index n_steps() const { return u.rows(); }
    Eigen::Index n_u() const { return u.cols(); }
    double lt_of_step(Eigen::Index step) const {
        return static_cast<double>(step) * dt_network / lyapunov_time;
    }
};

TimeSeriesDataset normalize_max_variation(const Eigen::MatrixXd& raw, NormMode mode,
                                          double dt_network, double lyapunov_time);

/// Deterministic dataset construction for the four study variants. The seed
/// perturbs the canonical initial condition by uniform noise of magnitude
/// 1e-3 per component. When cache_dir is given, a binary cache keyed by
/// (system, variant, seed) is consulted and populated.
TimeSeriesDataset make_dataset(DatasetVariant variant, std::uint64_t seed,
                               const std::optional<std::filesystem::path>& cache_dir = {});

/// CSV with header `t,x,y,z`, time in Lyapunov-time units.
void write_dataset_csv(const TimeSeriesDataset& ds, const std::filesystem::path& path);
/// Reads the numeric columns back; metadata that the CSV cannot carry is
/// supplied by the caller.
Eigen::MatrixXd read_dataset_csv(const std::filesystem::path& path);

std::filesystem::path dataset_cache_path(const std::filesystem::path& cache_dir,
                                         DatasetVariant variant, std::uint64_t seed);
void save_dataset_cache(const TimeSeriesDataset& ds, const std::filesystem::path& path);
TimeSeriesDataset load_dataset_cache(const std::filesystem::path& path);

}  // namespace esnlab
