#pragma once

#include <Eigen/Dense>

#include "esnlab/dynamics.hpp"
#include "esnlab/reservoir.hpp"

namespace esnlab {

/// POD basis of the data covariance matrix C = U^T U / (M-1) after mean
/// removal. Modes are sign-fixed (first nonzero component positive) so the
/// basis is deterministic across platforms.
struct PodModel {
    Eigen::MatrixXd phi;       // [n_u x n_pod], orthonormal columns
    Eigen::VectorXd d;         // column-wise mean of the snapshots
    Eigen::VectorXd energies;  // all eigenvalues of C, descending
    Eigen::Index n_pod = 0;
    double dt = 0.0;           // network step used for the Galerkin rollout

    double captured_energy_fraction() const {
        return energies.head(n_pod).sum() / energies.sum();
    }
};

/// Throws RankDeficient when the requested mode count exceeds the numerical
/// rank (eigenvalue below 1e-14 of the largest).
PodModel compute_pod(const Eigen::Ref<const Eigen::MatrixXd>& snapshots,
                     Eigen::Index n_pod, double dt);

/// One forward-Euler step of the flat Galerkin system xi' = Phi^T f(Phi xi + d).
/// u_in and the POD basis live in the normalized frame; the physical RHS is
/// evaluated by denormalizing through `norm` and the rate is mapped back.
Eigen::VectorXd pod_knowledge(const PodModel& pod, const OdeSystem& system,
                              const NormRecord& norm, const Eigen::VectorXd& u_in);

/// Partial physics for the Kuznetsov oscillator: forward Euler on the y
/// equation only. u_in here is in the physical (denormalized) frame.
double fe_knowledge(const OdeSystem& system, double dt, const Eigen::Vector3d& u_in);

/// Readout-state augmentation K(u_in) of the model-informed architectures.
struct KnowledgeFn {
    enum class Kind { PodGalerkin, ForwardEulerY };

    Kind kind = Kind::PodGalerkin;
    PodModel pod;       // PodGalerkin only
    OdeSystem system;
    NormRecord norm;
    double dt = 0.0;    // ForwardEulerY step
    Eigen::Index out_dim = 0;

    static KnowledgeFn pod_galerkin(PodModel pod, OdeSystem system, NormRecord norm);
    static KnowledgeFn forward_euler_y(OdeSystem system, double dt, NormRecord norm);

    Eigen::VectorXd operator()(const Eigen::VectorXd& u_in_normalized) const;

    /// Adapter for the reservoir update.
    KnowledgeHook hook() const;
};

/// Trained network blob extended with its POD model, so a model-informed
/// network can be reloaded with the basis it was trained against.
void save_pod_network_json(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                           const PodModel& pod, const std::filesystem::path& path);
std::tuple<ReservoirMatrices, EsnHyperparams, PodModel> load_pod_network_json(
    const std::filesystem::path& path);

}  // namespace esnlab
