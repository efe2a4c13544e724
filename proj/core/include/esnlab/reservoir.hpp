#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>

#include "esnlab/errors.hpp"

namespace esnlab {

/// The tunable scalars. sigma_in and rho are the optimized pair; n_r and
/// sparseness require re-initialization and stay fixed across a study.
struct EsnHyperparams {
    double sigma_in = 1.0;   // input scaling
    double rho = 0.9;        // spectral radius applied to the unit-radius W
    double beta_tik = 1e-11; // Tikhonov parameter
    double b_in = 1.0;       // input bias
    Eigen::Index n_r = 100;
    double sparseness = 0.97;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Physics hook appended to the readout state: r_hat = [r; 1; K(u_in)].
/// The hook receives the current (normalized) network input.
struct KnowledgeHook {
    Eigen::Index out_dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;

    bool empty() const { return out_dim == 0; }
};

/// Fixed random matrices plus the trained readout.
/// w_in_hat is dense with exactly one nonzero per row (values U[-1,1]);
/// w_hat is row-compressed sparse with unit spectral radius.
struct ReservoirMatrices {
    Eigen::MatrixXd w_in_hat;                        // [n_r x (n_u+1)]
    Eigen::SparseMatrix<double, Eigen::RowMajor> w_hat;  // [n_r x n_r]
    Eigen::MatrixXd w_out;                           // [n_rhat x n_u], empty before training
    Eigen::Index n_u = 0;

    Eigen::Index n_r() const { return w_in_hat.rows(); }
    bool trained() const { return w_out.size() > 0; }
    Eigen::Index n_rhat(Eigen::Index knowledge_dim = 0) const {
        return n_r() + 1 + knowledge_dim;
    }
};

struct ReservoirState {
    Eigen::VectorXd r;      // [n_r]
    Eigen::VectorXd r_hat;  // [n_r + 1 (+ knowledge_dim)]
};

/// Magnitude of the dominant eigenvalue by power iteration from the all-ones
/// vector. Detects complex-conjugate dominant pairs through a two-term
/// recurrence fit, which random Erdos-Renyi matrices frequently have.
/// Throws SpectralRadiusFailure when the residual does not reach tol within
/// max_iter matrix-vector products.
double spectral_radius_power(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                             double tol = 1e-6, int max_iter = 10000);

/// Seeded construction of w_in_hat and the unit-spectral-radius w_hat.
/// Pathologically sparse draws (vanishing or non-converging spectral radius)
/// are retried with fresh sub-seeds up to 3 times.
ReservoirMatrices init_matrices(const EsnHyperparams& hp, Eigen::Index n_u);

/// One reservoir update: r' = tanh(sigma_in W_in [u;b_in] + rho W r),
/// r_hat = [r'; 1; K(u_in)]. The knowledge output never enters the tanh.
ReservoirState step(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                    const ReservoirState& state, const Eigen::VectorXd& u_in,
                    const KnowledgeHook& knowledge = {});

/// Teacher-forced run over `inputs` (rows are time) from r(t0) = 0; discards
/// the first washout_steps states and returns the remaining r_hat columns
/// plus the final state. Column j of R pairs with the input row
/// washout_steps + j (its ridge target is the next data row).
struct OpenLoopResult {
    Eigen::MatrixXd R;  // [n_rhat x (inputs.rows() - washout_steps)]
    ReservoirState final_state;
};
OpenLoopResult run_open_loop(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             Eigen::Index washout_steps,
                             const KnowledgeHook& knowledge = {});

/// Full teacher-forced pass keeping every r_hat column (no washout discard):
/// column t is the state after feeding input row t. Validation slices this
/// one pass per hyperparameter point instead of re-running per fold.
Eigen::MatrixXd run_state_pass(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                               const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                               const KnowledgeHook& knowledge = {});

/// Ridge regression (R R^T + beta I) W_out = R U_d^T via an SPD solve; with
/// beta = 0 a 1e-12 diagonal jitter retry precedes SingularSystem.
Eigen::MatrixXd train_ridge(const Eigen::Ref<const Eigen::MatrixXd>& R,
                            const Eigen::Ref<const Eigen::MatrixXd>& U_d,
                            double beta_tik);

/// Same solve from a precomputed Gram pair G = R R^T, B = R U_d^T.
Eigen::MatrixXd train_ridge_gram(Eigen::MatrixXd G, const Eigen::MatrixXd& B,
                                 double beta_tik);

/// Autonomous rollout: starting from `state` and the data point u_start,
/// each prediction u_p = r_hat^T W_out is fed back as the next input.
/// Divergence is allowed; the caller scores it.
Eigen::MatrixXd run_closed_loop(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                                ReservoirState state, const Eigen::VectorXd& u_start,
                                Eigen::Index n_steps,
                                const KnowledgeHook& knowledge = {});

ReservoirState zero_state(const ReservoirMatrices& mats,
                          Eigen::Index knowledge_dim = 0);

/// JSON round-trip of a (possibly trained) network.
void save_network_json(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                       const std::filesystem::path& path);
std::pair<ReservoirMatrices, EsnHyperparams> load_network_json(
    const std::filesystem::path& path);

}  // namespace esnlab
