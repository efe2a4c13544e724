#include "esnlab/reservoir.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "esnlab/rng.hpp"
#include "nlohmann/json.hpp"

namespace esnlab {

void EsnHyperparams::validate() const {
    if (!(sigma_in > 0.0)) throw InvalidArgument("sigma_in must be > 0");
    if (!(rho > 0.0)) throw InvalidArgument("rho must be > 0");
    if (beta_tik < 0.0) throw InvalidArgument("beta_tik must be >= 0");
    if (n_r < 1) throw InvalidArgument("n_r must be >= 1");
    if (sparseness < 0.0 || sparseness >= 1.0)
        throw InvalidArgument("sparseness must lie in [0, 1)");
}

namespace {

// One power iteration refinement advancing two matrix-vector products.
// Tracks both the single dominant-eigenvalue estimate (Rayleigh residual)
// and the dominant complex-pair estimate from fitting v2 ~ a v1 + b v0.
std::optional<double> try_spectral_radius(
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, double tol, int max_iter) {
    const Eigen::Index n = m.rows();
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
    x.normalize();

    int mv_count = 0;
    while (mv_count < max_iter) {
        const Eigen::VectorXd v1 = m * x;
        const Eigen::VectorXd v2 = m * v1;
        mv_count += 2;

        const double n1 = v1.norm();
        const double n2 = v2.norm();
        if (n1 < 1e-150) return 0.0;  // (numerically) nilpotent direction

        const double lam = x.dot(v1);  // Rayleigh quotient, ||x|| = 1
        const double res_single = (v1 - lam * x).norm() / n1;
        if (res_single < tol) return std::abs(lam);

        if (n2 >= 1e-150) {
            // 2x2 normal equations for v2 = a v1 + b v0.
            const double g11 = v1.squaredNorm();
            const double g10 = v1.dot(x);
            const double g00 = 1.0;
            const double r1 = v1.dot(v2);
            const double r0 = x.dot(v2);
            const double det = g11 * g00 - g10 * g10;
            if (std::abs(det) > 1e-14 * g11) {
                const double a = (r1 * g00 - r0 * g10) / det;
                const double b = (g11 * r0 - g10 * r1) / det;
                const double res_pair = (v2 - a * v1 - b * x).norm() / n2;
                if (res_pair < tol) {
                    const double disc = a * a + 4.0 * b;
                    if (disc >= 0.0) {
                        const double sq = std::sqrt(disc);
                        return std::max(std::abs(0.5 * (a + sq)),
                                        std::abs(0.5 * (a - sq)));
                    }
                    return std::sqrt(-b);  // conjugate pair: |lambda|^2 = -b
                }
            }
        }
        x = v2 / n2;
    }
    return std::nullopt;
}

}  // namespace

double spectral_radius_power(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                             double tol, int max_iter) {
    if (m.rows() != m.cols()) throw DimensionMismatch("matrix must be square");
    if (m.rows() == 0) return 0.0;
    auto radius = try_spectral_radius(m, tol, max_iter);
    if (!radius)
        throw SpectralRadiusFailure("power iteration did not converge within " +
                                    std::to_string(max_iter) + " products");
    return *radius;
}

ReservoirMatrices init_matrices(const EsnHyperparams& hp, Eigen::Index n_u) {
    hp.validate();
    if (n_u < 1) throw InvalidArgument("n_u must be >= 1");

    ReservoirMatrices mats;
    mats.n_u = n_u;

    Rng in_rng(derive_seed(hp.seed, 1));
    mats.w_in_hat = Eigen::MatrixXd::Zero(hp.n_r, n_u + 1);
    for (Eigen::Index i = 0; i < hp.n_r; ++i) {
        const auto col = static_cast<Eigen::Index>(in_rng.next_below(n_u + 1));
        mats.w_in_hat(i, col) = in_rng.uniform(-1.0, 1.0);
    }

    const int max_attempts = 4;  // first draw + 3 fresh sub-seeds
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Rng w_rng(derive_seed(hp.seed, 2 + static_cast<std::uint64_t>(attempt)));
        std::vector<Eigen::Triplet<double>> triplets;
        const double p_edge = 1.0 - hp.sparseness;
        triplets.reserve(static_cast<std::size_t>(p_edge * hp.n_r * hp.n_r * 1.3) + 8);
        for (Eigen::Index i = 0; i < hp.n_r; ++i) {
            for (Eigen::Index j = 0; j < hp.n_r; ++j) {
                const double coin = w_rng.next_double();
                if (coin < p_edge)
                    triplets.emplace_back(i, j, w_rng.uniform(-1.0, 1.0));
            }
        }
        Eigen::SparseMatrix<double, Eigen::RowMajor> w(hp.n_r, hp.n_r);
        w.setFromTriplets(triplets.begin(), triplets.end());
        w.makeCompressed();

        const auto radius = try_spectral_radius(w, 1e-8, 10000);
        if (radius && *radius > 1e-12) {
            mats.w_hat = (w / *radius).pruned();
            mats.w_hat.makeCompressed();
            return mats;
        }
    }
    throw SpectralRadiusFailure(
        "could not scale reservoir matrix to unit spectral radius after " +
        std::to_string(max_attempts) + " draws (seed " + std::to_string(hp.seed) + ")");
}

namespace {

inline void step_core(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                      const Eigen::VectorXd& r_prev, const Eigen::VectorXd& u_in,
                      Eigen::VectorXd& r_next) {
    const Eigen::Index n_in = mats.w_in_hat.cols();
    if (u_in.size() + 1 != n_in)
        throw DimensionMismatch("input has length " + std::to_string(u_in.size()) +
                                ", expected " + std::to_string(n_in - 1));
    Eigen::VectorXd u_bias(n_in);
    u_bias << u_in, hp.b_in;
    r_next = hp.sigma_in * (mats.w_in_hat * u_bias) + hp.rho * (mats.w_hat * r_prev);
    for (Eigen::Index i = 0; i < r_next.size(); ++i) r_next[i] = std::tanh(r_next[i]);
}

inline void fill_rhat(const Eigen::VectorXd& r, const Eigen::VectorXd& u_in,
                      const KnowledgeHook& knowledge, Eigen::VectorXd& r_hat) {
    const Eigen::Index n_r = r.size();
    r_hat.resize(n_r + 1 + knowledge.out_dim);
    r_hat.head(n_r) = r;
    r_hat[n_r] = 1.0;
    if (!knowledge.empty()) r_hat.tail(knowledge.out_dim) = knowledge.eval(u_in);
}

}  // namespace

ReservoirState zero_state(const ReservoirMatrices& mats, Eigen::Index knowledge_dim) {
    ReservoirState s;
    s.r = Eigen::VectorXd::Zero(mats.n_r());
    s.r_hat = Eigen::VectorXd::Zero(mats.n_rhat(knowledge_dim));
    s.r_hat[mats.n_r()] = 1.0;
    return s;
}

ReservoirState step(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                    const ReservoirState& state, const Eigen::VectorXd& u_in,
                    const KnowledgeHook& knowledge) {
    ReservoirState next;
    step_core(mats, hp, state.r, u_in, next.r);
    fill_rhat(next.r, u_in, knowledge, next.r_hat);
    return next;
}

OpenLoopResult run_open_loop(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             Eigen::Index washout_steps,
                             const KnowledgeHook& knowledge) {
    const Eigen::Index len = inputs.rows();
    if (washout_steps < 0 || len <= washout_steps)
        throw SliceTooShort("slice length " + std::to_string(len) +
                            " must exceed washout " + std::to_string(washout_steps));

    OpenLoopResult out;
    out.R.resize(mats.n_rhat(knowledge.out_dim), len - washout_steps);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mats.n_r());
    Eigen::VectorXd r_next, r_hat;
    for (Eigen::Index t = 0; t < len; ++t) {
        const Eigen::VectorXd u = inputs.row(t).transpose();
        step_core(mats, hp, r, u, r_next);
        r.swap(r_next);
        if (t >= washout_steps) {
            fill_rhat(r, u, knowledge, r_hat);
            out.R.col(t - washout_steps) = r_hat;
        }
    }
    out.final_state.r = r;
    fill_rhat(r, inputs.row(len - 1).transpose(), knowledge, out.final_state.r_hat);
    return out;
}

Eigen::MatrixXd run_state_pass(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                               const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                               const KnowledgeHook& knowledge) {
    const Eigen::Index len = inputs.rows();
    if (len < 1) throw SliceTooShort("state pass needs at least one input row");
    Eigen::MatrixXd rhat(mats.n_rhat(knowledge.out_dim), len);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mats.n_r());
    Eigen::VectorXd r_next, r_hat;
    for (Eigen::Index t = 0; t < len; ++t) {
        const Eigen::VectorXd u = inputs.row(t).transpose();
        step_core(mats, hp, r, u, r_next);
        r.swap(r_next);
        fill_rhat(r, u, knowledge, r_hat);
        rhat.col(t) = r_hat;
    }
    return rhat;
}

Eigen::MatrixXd train_ridge_gram(Eigen::MatrixXd G, const Eigen::MatrixXd& B,
                                 double beta_tik) {
    if (G.rows() != G.cols() || G.rows() != B.rows())
        throw ShapeMismatch("Gram pair dimensions disagree");
    if (beta_tik < 0.0) throw InvalidArgument("beta_tik must be >= 0");

    G.diagonal().array() += beta_tik;
    Eigen::LLT<Eigen::MatrixXd> llt(G.selfadjointView<Eigen::Lower>());
    if (llt.info() == Eigen::Success) return llt.solve(B);

    // The paper's beta (1e-11) sits at rounding level relative to ||G||, so
    // the Cholesky pivot can go negative in floating point even though the
    // system is SPD in exact arithmetic. Escalate a diagonal jitter from
    // 1e-12; with beta = 0 a rank-deficient system that resists the ladder
    // is reported as singular.
    const double scale = std::max(G.diagonal().maxCoeff(), 1.0);
    for (double jitter = 1e-12; jitter <= 1e-6 * scale; jitter *= 10.0) {
        G.diagonal().array() += jitter;
        llt.compute(G.selfadjointView<Eigen::Lower>());
        if (llt.info() == Eigen::Success) return llt.solve(B);
    }
    throw SingularSystem("ridge normal equations are not positive definite");
}

Eigen::MatrixXd train_ridge(const Eigen::Ref<const Eigen::MatrixXd>& R,
                            const Eigen::Ref<const Eigen::MatrixXd>& U_d,
                            double beta_tik) {
    if (R.cols() != U_d.cols())
        throw ShapeMismatch("R has " + std::to_string(R.cols()) + " columns, U_d has " +
                            std::to_string(U_d.cols()));
    if (R.cols() < 1) throw ShapeMismatch("need at least one training column");

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(R.rows(), R.rows());
    G.selfadjointView<Eigen::Lower>().rankUpdate(R);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    return train_ridge_gram(std::move(G), R * U_d.transpose(), beta_tik);
}

Eigen::MatrixXd run_closed_loop(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                                ReservoirState state, const Eigen::VectorXd& u_start,
                                Eigen::Index n_steps, const KnowledgeHook& knowledge) {
    if (!mats.trained()) throw InvalidArgument("w_out has not been trained");
    if (n_steps < 0) throw InvalidArgument("n_steps must be >= 0");
    if (mats.w_out.rows() != mats.n_rhat(knowledge.out_dim))
        throw DimensionMismatch("w_out rows do not match the readout state size");

    Eigen::MatrixXd preds(n_steps, mats.n_u);
    Eigen::VectorXd u = u_start;
    Eigen::VectorXd r = state.r, r_next, r_hat;
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        step_core(mats, hp, r, u, r_next);
        r.swap(r_next);
        fill_rhat(r, u, knowledge, r_hat);
        u = mats.w_out.transpose() * r_hat;
        preds.row(i) = u.transpose();
    }
    return preds;
}

void save_network_json(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                       const std::filesystem::path& path) {
    nlohmann::json j;
    j["hyperparams"] = {{"sigma_in", hp.sigma_in}, {"rho", hp.rho},
                        {"beta_tik", hp.beta_tik}, {"b_in", hp.b_in},
                        {"n_r", hp.n_r},           {"sparseness", hp.sparseness},
                        {"seed", hp.seed}};
    j["n_u"] = mats.n_u;
    j["w_in_hat"] = std::vector<double>(mats.w_in_hat.data(),
                                        mats.w_in_hat.data() + mats.w_in_hat.size());
    nlohmann::json w;
    w["rows"] = mats.w_hat.rows();
    std::vector<Eigen::Index> ri, ci;
    std::vector<double> vals;
    for (int k = 0; k < mats.w_hat.outerSize(); ++k)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(mats.w_hat, k);
             it; ++it) {
            ri.push_back(it.row());
            ci.push_back(it.col());
            vals.push_back(it.value());
        }
    w["row"] = ri;
    w["col"] = ci;
    w["val"] = vals;
    j["w_hat"] = w;
    if (mats.trained()) {
        j["w_out"] = {{"rows", mats.w_out.rows()},
                      {"cols", mats.w_out.cols()},
                      {"data", std::vector<double>(mats.w_out.data(),
                                                   mats.w_out.data() + mats.w_out.size())}};
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

std::pair<ReservoirMatrices, EsnHyperparams> load_network_json(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;

    EsnHyperparams hp;
    const auto& h = j.at("hyperparams");
    hp.sigma_in = h.at("sigma_in");
    hp.rho = h.at("rho");
    hp.beta_tik = h.at("beta_tik");
    hp.b_in = h.at("b_in");
    hp.n_r = h.at("n_r");
    hp.sparseness = h.at("sparseness");
    hp.seed = h.at("seed");

    ReservoirMatrices mats;
    mats.n_u = j.at("n_u");
    const auto win = j.at("w_in_hat").get<std::vector<double>>();
    mats.w_in_hat = Eigen::Map<const Eigen::MatrixXd>(win.data(), hp.n_r, mats.n_u + 1);
    const auto& w = j.at("w_hat");
    const auto ri = w.at("row").get<std::vector<Eigen::Index>>();
    const auto ci = w.at("col").get<std::vector<Eigen::Index>>();
    const auto vals = w.at("val").get<std::vector<double>>();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(vals.size());
    for (std::size_t k = 0; k < vals.size(); ++k)
        trip.emplace_back(ri[k], ci[k], vals[k]);
    mats.w_hat.resize(w.at("rows").get<Eigen::Index>(), w.at("rows").get<Eigen::Index>());
    mats.w_hat.setFromTriplets(trip.begin(), trip.end());
    mats.w_hat.makeCompressed();
    if (j.contains("w_out")) {
        const auto& wo = j.at("w_out");
        const auto data = wo.at("data").get<std::vector<double>>();
        mats.w_out = Eigen::Map<const Eigen::MatrixXd>(
            data.data(), wo.at("rows").get<Eigen::Index>(),
            wo.at("cols").get<Eigen::Index>());
    }
    return {std::move(mats), hp};
}

}  // namespace esnlab
