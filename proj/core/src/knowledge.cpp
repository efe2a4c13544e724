#include "esnlab/knowledge.hpp"

#include <cmath>
#include <fstream>

#include "nlohmann/json.hpp"

namespace esnlab {

PodModel compute_pod(const Eigen::Ref<const Eigen::MatrixXd>& snapshots,
                     Eigen::Index n_pod, double dt) {
    const Eigen::Index m = snapshots.rows();
    const Eigen::Index n_u = snapshots.cols();
    if (m < 2) throw ShapeMismatch("POD needs at least 2 snapshots");
    if (n_pod < 1 || n_pod > n_u)
        throw InvalidArgument("n_pod must lie in [1, n_u]");

    PodModel pod;
    pod.n_pod = n_pod;
    pod.dt = dt;
    pod.d = snapshots.colwise().mean().transpose();

    const Eigen::MatrixXd centered = snapshots.rowwise() - pod.d.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(m - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw FactorizationFailure("covariance eigendecomposition failed");

    // SelfAdjointEigenSolver sorts ascending; flip to descending.
    pod.energies = eig.eigenvalues().reverse();
    Eigen::MatrixXd modes = eig.eigenvectors().rowwise().reverse();

    const double max_energy = pod.energies[0];
    if (!(pod.energies[n_pod - 1] > 1e-14 * max_energy))
        throw RankDeficient("requested " + std::to_string(n_pod) +
                            " POD modes but the data rank is lower");

    // Deterministic sign: first nonzero component of each mode positive.
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
        for (Eigen::Index i = 0; i < modes.rows(); ++i) {
            if (std::abs(modes(i, j)) > 1e-12) {
                if (modes(i, j) < 0.0) modes.col(j) = -modes.col(j);
                break;
            }
        }
    }
    pod.phi = modes.leftCols(n_pod);
    return pod;
}

Eigen::VectorXd pod_knowledge(const PodModel& pod, const OdeSystem& system,
                              const NormRecord& norm, const Eigen::VectorXd& u_in) {
    if (u_in.size() != pod.phi.rows())
        throw DimensionMismatch("POD knowledge input has wrong length");

    const Eigen::VectorXd xi = pod.phi.transpose() * (u_in - pod.d);
    const Eigen::VectorXd point_norm = pod.phi * xi + pod.d;
    const Eigen::Vector3d q_phys = norm.invert_row(point_norm);
    // d(u_norm)/dt = f(q_phys) / scale, componentwise.
    const Eigen::VectorXd rate_norm =
        ode_rhs(system, q_phys).cwiseQuotient(norm.scales);
    return xi + pod.dt * (pod.phi.transpose() * rate_norm);
}

double fe_knowledge(const OdeSystem& system, double dt, const Eigen::Vector3d& u_in) {
    if (system.name != SystemName::Kuznetsov)
        throw InvalidArgument("fe_knowledge is defined for the Kuznetsov oscillator");
    const double lambda = system.params[0];
    const double omega0 = system.params[1];
    const double x = u_in[0], y = u_in[1], z = u_in[2];
    const double x2 = x * x;
    return y + dt * (y * (lambda + z + x2 - 0.5 * x2 * x2) - omega0 * omega0 * x);
}

KnowledgeFn KnowledgeFn::pod_galerkin(PodModel pod, OdeSystem system, NormRecord norm) {
    KnowledgeFn k;
    k.kind = Kind::PodGalerkin;
    k.out_dim = pod.n_pod;
    k.pod = std::move(pod);
    k.system = std::move(system);
    k.norm = std::move(norm);
    return k;
}

KnowledgeFn KnowledgeFn::forward_euler_y(OdeSystem system, double dt, NormRecord norm) {
    KnowledgeFn k;
    k.kind = Kind::ForwardEulerY;
    k.out_dim = 1;
    k.system = std::move(system);
    k.norm = std::move(norm);
    k.dt = dt;
    return k;
}

Eigen::VectorXd KnowledgeFn::operator()(const Eigen::VectorXd& u_in_normalized) const {
    switch (kind) {
        case Kind::PodGalerkin:
            return pod_knowledge(pod, system, norm, u_in_normalized);
        case Kind::ForwardEulerY: {
            const Eigen::Vector3d q_phys = norm.invert_row(u_in_normalized);
            const double y_next = fe_knowledge(system, dt, q_phys);
            Eigen::VectorXd out(1);
            out[0] = (y_next - norm.offsets[1]) / norm.scales[1];
            return out;
        }
    }
    throw InvalidArgument("unknown knowledge kind");
}

KnowledgeHook KnowledgeFn::hook() const {
    KnowledgeHook h;
    h.out_dim = out_dim;
    h.eval = [this](const Eigen::VectorXd& u) { return (*this)(u); };
    return h;
}

namespace {

std::vector<double> flat(const Eigen::MatrixXd& m) {
    return {m.data(), m.data() + m.size()};
}

}  // namespace

void save_pod_network_json(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                           const PodModel& pod, const std::filesystem::path& path) {
    save_network_json(mats, hp, path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    in.close();
    j["pod"] = {{"n_u", pod.phi.rows()},     {"n_pod", pod.n_pod},
                {"dt", pod.dt},              {"phi", flat(pod.phi)},
                {"mean", flat(pod.d)},       {"energies", flat(pod.energies)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

std::tuple<ReservoirMatrices, EsnHyperparams, PodModel> load_pod_network_json(
    const std::filesystem::path& path) {
    auto [mats, hp] = load_network_json(path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    const auto& pj = j.at("pod");
    PodModel pod;
    const Eigen::Index n_u = pj.at("n_u");
    pod.n_pod = pj.at("n_pod");
    pod.dt = pj.at("dt");
    const auto phi = pj.at("phi").get<std::vector<double>>();
    pod.phi = Eigen::Map<const Eigen::MatrixXd>(phi.data(), n_u, pod.n_pod);
    const auto mean = pj.at("mean").get<std::vector<double>>();
    pod.d = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                              static_cast<Eigen::Index>(mean.size()));
    const auto en = pj.at("energies").get<std::vector<double>>();
    pod.energies =
        Eigen::Map<const Eigen::VectorXd>(en.data(), static_cast<Eigen::Index>(en.size()));
    return {std::move(mats), hp, std::move(pod)};
}

}  // namespace esnlab
