#include "esnlab/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "esnlab/rng.hpp"

namespace esnlab {

OdeSystem OdeSystem::lorenz(double sigma, double beta, double rho) {
    OdeSystem s;
    s.name = SystemName::Lorenz;
    s.params = Eigen::Vector3d(sigma, beta, rho);
    return s;
}

OdeSystem OdeSystem::kuznetsov(double mu, double lambda, double omega0) {
    OdeSystem s;
    s.name = SystemName::Kuznetsov;
    s.params = Eigen::Vector3d(lambda, omega0, mu);
    return s;
}

Eigen::Vector3d ode_rhs(const OdeSystem& system, const Eigen::Vector3d& q) {
    const double x = q[0], y = q[1], z = q[2];
    switch (system.name) {
        case SystemName::Lorenz: {
            const double sigma = system.params[0];
            const double beta = system.params[1];
            const double rho = system.params[2];
            return {sigma * (y - x), x * (rho - z) - y, x * y - beta * z};
        }
        case SystemName::Kuznetsov: {
            const double lambda = system.params[0];
            const double omega0 = system.params[1];
            const double mu = system.params[2];
            const double x2 = x * x;
            return {y, y * (lambda + z + x2 - 0.5 * x2 * x2) - omega0 * omega0 * x,
                    mu - x2};
        }
    }
    throw InvalidArgument("unknown ODE system");
}

void TrajectoryConfig::validate() const {
    if (!(dt_integrator > 0.0)) throw InvalidArgument("dt_integrator must be > 0");
    if (subsample < 1) throw InvalidArgument("subsample must be >= 1");
    if (transient_steps < 0) throw InvalidArgument("transient_steps must be >= 0");
    if (n_network_steps < 0) throw InvalidArgument("n_network_steps must be >= 0");
}

Eigen::MatrixXd integrate_forward_euler(const OdeSystem& system,
                                        const TrajectoryConfig& cfg) {
    cfg.validate();
    Eigen::MatrixXd out(cfg.n_network_steps, system.state_dim);
    Eigen::Vector3d q = cfg.initial_condition;

    std::int64_t step_index = 0;
    auto advance = [&](Eigen::Index n_steps) {
        for (Eigen::Index i = 0; i < n_steps; ++i) {
            q += cfg.dt_integrator * ode_rhs(system, q);
            ++step_index;
            if (!q.allFinite()) {
                throw NonFiniteState("trajectory blew up at integrator step " +
                                     std::to_string(step_index));
            }
        }
    };

    advance(cfg.transient_steps * cfg.subsample);
    for (Eigen::Index row = 0; row < cfg.n_network_steps; ++row) {
        if (row > 0) advance(cfg.subsample);
        out.row(row) = q.transpose();
    }
    return out;
}

NormRecord compute_max_variation_norm(const Eigen::MatrixXd& raw, NormMode mode) {
    if (raw.rows() < 2) throw DegenerateSignal("need at least 2 rows to normalize");
    const Eigen::Index n_u = raw.cols();
    Eigen::VectorXd ranges =
        raw.colwise().maxCoeff().transpose() - raw.colwise().minCoeff().transpose();

    NormRecord rec;
    rec.mode = mode;
    rec.offsets = Eigen::VectorXd::Zero(n_u);
    rec.scales = Eigen::VectorXd::Ones(n_u);
    if (mode == NormMode::Global) {
        const double max_range = ranges.maxCoeff();
        if (!(max_range > 0.0))
            throw DegenerateSignal("constant signal: maximum variation is zero");
        rec.scales.setConstant(max_range);
    } else {
        for (Eigen::Index j = 0; j < n_u; ++j) {
            if (!(ranges[j] > 0.0))
                throw DegenerateSignal("component " + std::to_string(j) +
                                       " has zero variation");
            rec.scales[j] = ranges[j];
        }
    }
    return rec;
}

Eigen::MatrixXd NormRecord::apply(const Eigen::MatrixXd& raw) const {
    return (raw.rowwise() - offsets.transpose()).array().rowwise() /
           scales.transpose().array();
}

Eigen::MatrixXd NormRecord::invert(const Eigen::MatrixXd& normalized) const {
    return (normalized.array().rowwise() * scales.transpose().array()).matrix()
               .rowwise() +
           offsets.transpose();
}

Eigen::VectorXd NormRecord::apply_row(const Eigen::VectorXd& raw) const {
    return (raw - offsets).cwiseQuotient(scales);
}

Eigen::VectorXd NormRecord::invert_row(const Eigen::VectorXd& normalized) const {
    return normalized.cwiseProduct(scales) + offsets;
}

TimeSeriesDataset normalize_max_variation(const Eigen::MatrixXd& raw, NormMode mode,
                                          double dt_network, double lyapunov_time) {
    TimeSeriesDataset ds;
    ds.norm = compute_max_variation_norm(raw, mode);
    ds.u = ds.norm.apply(raw);
    if (!ds.u.allFinite()) throw NonFiniteState("normalized trajectory is non-finite");
    ds.dt_network = dt_network;
    ds.lyapunov_time = lyapunov_time;
    ds.steps_per_lt =
        static_cast<Eigen::Index>(std::llround(lyapunov_time / dt_network));
    if (ds.steps_per_lt < 1) throw InvalidArgument("steps_per_lt must be >= 1");
    return ds;
}

std::string to_string(DatasetVariant v) {
    switch (v) {
        case DatasetVariant::LorenzShort: return "lorenz_short";
        case DatasetVariant::LorenzLong: return "lorenz_long";
        case DatasetVariant::KuznetsovQuasiperiodic: return "kuznetsov_quasiperiodic";
        case DatasetVariant::KuznetsovChaotic: return "kuznetsov_chaotic";
    }
    return "?";
}

std::string to_string(SystemName s) {
    return s == SystemName::Lorenz ? "lorenz" : "kuznetsov";
}

DatasetVariant dataset_variant_from_string(const std::string& s) {
    if (s == "lorenz_short") return DatasetVariant::LorenzShort;
    if (s == "lorenz_long") return DatasetVariant::LorenzLong;
    if (s == "kuznetsov_quasiperiodic") return DatasetVariant::KuznetsovQuasiperiodic;
    if (s == "kuznetsov_chaotic") return DatasetVariant::KuznetsovChaotic;
    throw InvalidArgument("unknown dataset variant: " + s);
}

namespace {

struct VariantSpec {
    OdeSystem system;
    double dt_integrator;
    int subsample;
    double lyapunov_time;
    Eigen::Index steps_per_lt;
    Eigen::Index span_steps;
    Eigen::Index n_steps;
    Eigen::Vector3d q0;
    NormMode norm_mode;
};

// Lorenz: network step = integrator step = 0.009 LT with LT = 1.1.
// Datasets cover the 12/24 LT train+val span plus the test region
// (100 starting points from 24 LT, 3 LT apart, 3 LT intervals -> 324 LT).
// Kuznetsov: fine Euler step 0.0025 subsampled by 20 (network step 0.05,
// LT = 25 -> 500 steps/LT); 7.5 LT span plus 75 starts from 7.5 LT,
// 2 LT apart, 2 LT intervals -> 157.5 LT.
VariantSpec variant_spec(DatasetVariant variant) {
    VariantSpec s;
    switch (variant) {
        case DatasetVariant::LorenzShort:
        case DatasetVariant::LorenzLong: {
            s.system = OdeSystem::lorenz();
            s.lyapunov_time = 1.1;
            s.dt_integrator = 0.009 * s.lyapunov_time;
            s.subsample = 1;
            s.steps_per_lt = 111;
            const Eigen::Index span_lt =
                variant == DatasetVariant::LorenzShort ? 12 : 24;
            s.span_steps = span_lt * s.steps_per_lt;
            // Covers 100 test starts from 24 LT spaced 3 LT with PH
            // rollouts up to 12 LT: 24 + 99*3 + 12 = 333 LT plus margin.
            s.n_steps = 336 * s.steps_per_lt + 40;
            s.q0 = Eigen::Vector3d(1.0, 1.0, 1.0);
            s.norm_mode = NormMode::Global;
            break;
        }
        case DatasetVariant::KuznetsovQuasiperiodic:
        case DatasetVariant::KuznetsovChaotic: {
            const double mu =
                variant == DatasetVariant::KuznetsovQuasiperiodic ? 0.9 : 0.5;
            s.system = OdeSystem::kuznetsov(mu);
            s.lyapunov_time = 25.0;
            s.dt_integrator = 0.0025;
            s.subsample = 20;
            s.steps_per_lt = 500;
            s.span_steps = static_cast<Eigen::Index>(7.5 * 500);  // 3750
            // Covers 75 starts from 7.5 LT spaced 2 LT with PH rollouts up
            // to 14 LT: 7.5 + 74*2 + 14 = 169.5 LT plus margin.
            s.n_steps = static_cast<Eigen::Index>(171.0 * 500) + 50;
            s.q0 = Eigen::Vector3d(1.0, 0.0, 0.0);
            s.norm_mode = NormMode::Componentwise;
            break;
        }
    }
    return s;
}

}  // namespace

TimeSeriesDataset make_dataset(DatasetVariant variant, std::uint64_t seed,
                               const std::optional<std::filesystem::path>& cache_dir) {
    if (cache_dir) {
        const auto path = dataset_cache_path(*cache_dir, variant, seed);
        if (std::filesystem::exists(path)) return load_dataset_cache(path);
    }

    const VariantSpec spec = variant_spec(variant);

    TrajectoryConfig cfg;
    cfg.dt_integrator = spec.dt_integrator;
    cfg.subsample = spec.subsample;
    cfg.n_network_steps = spec.n_steps;
    cfg.transient_steps = 100 * spec.steps_per_lt;  // start on the attractor

    Rng rng(derive_seed(seed, 0xDA7Aull));
    cfg.initial_condition = spec.q0;
    for (int i = 0; i < 3; ++i)
        cfg.initial_condition[i] += rng.uniform(-1e-3, 1e-3);

    const Eigen::MatrixXd raw = integrate_forward_euler(spec.system, cfg);
    const double dt_network = spec.dt_integrator * spec.subsample;

    TimeSeriesDataset ds =
        normalize_max_variation(raw, spec.norm_mode, dt_network, spec.lyapunov_time);
    ds.steps_per_lt = spec.steps_per_lt;
    ds.system = spec.system;
    ds.variant = variant;
    ds.seed = seed;
    ds.span_steps = spec.span_steps;

    if (cache_dir) {
        std::filesystem::create_directories(*cache_dir);
        save_dataset_cache(ds, dataset_cache_path(*cache_dir, variant, seed));
    }
    return ds;
}

void write_dataset_csv(const TimeSeriesDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "t,x,y,z\n";
    char buf[128];
    for (Eigen::Index i = 0; i < ds.n_steps(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", ds.lt_of_step(i),
                      ds.u(i, 0), ds.u(i, 1), ds.u(i, 2));
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Eigen::MatrixXd read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV " + path.string());
    std::vector<Eigen::Vector3d> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double t, x, y, z;
        char c;
        if (!(ss >> t >> c >> x >> c >> y >> c >> z))
            throw IoError("malformed CSV row: " + line);
        rows.emplace_back(x, y, z);
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = rows[i].transpose();
    return m;
}

std::filesystem::path dataset_cache_path(const std::filesystem::path& cache_dir,
                                         DatasetVariant variant, std::uint64_t seed) {
    return cache_dir / (to_string(variant) + "_seed" + std::to_string(seed) + ".esnds");
}

namespace {

constexpr char kCacheMagic[8] = {'E', 'S', 'N', 'D', 'S', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_dataset_cache(const TimeSeriesDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kCacheMagic, sizeof(kCacheMagic));
    write_pod(out, static_cast<std::int32_t>(ds.variant));
    write_pod(out, ds.seed);
    write_pod(out, static_cast<std::int64_t>(ds.n_steps()));
    write_pod(out, static_cast<std::int64_t>(ds.n_u()));
    write_pod(out, ds.dt_network);
    write_pod(out, ds.lyapunov_time);
    write_pod(out, static_cast<std::int64_t>(ds.steps_per_lt));
    write_pod(out, static_cast<std::int64_t>(ds.span_steps));
    write_pod(out, static_cast<std::int32_t>(ds.norm.mode));
    write_pod(out, static_cast<std::int32_t>(ds.system.name));
    out.write(reinterpret_cast<const char*>(ds.system.params.data()),
              3 * sizeof(double));
    out.write(reinterpret_cast<const char*>(ds.norm.offsets.data()),
              ds.n_u() * sizeof(double));
    out.write(reinterpret_cast<const char*>(ds.norm.scales.data()),
              ds.n_u() * sizeof(double));
    out.write(reinterpret_cast<const char*>(ds.u.data()),
              ds.u.size() * sizeof(double));
    if (!out) throw IoError("write failed for " + path.string());
}

TimeSeriesDataset load_dataset_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
        throw IoError("bad dataset cache magic in " + path.string());

    TimeSeriesDataset ds;
    std::int32_t variant, mode, sysname;
    std::int64_t n_steps, n_u, steps_per_lt, span_steps;
    read_pod(in, variant);
    read_pod(in, ds.seed);
    read_pod(in, n_steps);
    read_pod(in, n_u);
    read_pod(in, ds.dt_network);
    read_pod(in, ds.lyapunov_time);
    read_pod(in, steps_per_lt);
    read_pod(in, span_steps);
    read_pod(in, mode);
    read_pod(in, sysname);
    ds.variant = static_cast<DatasetVariant>(variant);
    ds.steps_per_lt = steps_per_lt;
    ds.span_steps = span_steps;
    ds.norm.mode = static_cast<NormMode>(mode);
    ds.system.name = static_cast<SystemName>(sysname);
    ds.system.params.resize(3);
    in.read(reinterpret_cast<char*>(ds.system.params.data()), 3 * sizeof(double));
    ds.norm.offsets.resize(n_u);
    ds.norm.scales.resize(n_u);
    in.read(reinterpret_cast<char*>(ds.norm.offsets.data()), n_u * sizeof(double));
    in.read(reinterpret_cast<char*>(ds.norm.scales.data()), n_u * sizeof(double));
    ds.u.resize(n_steps, n_u);
    in.read(reinterpret_cast<char*>(ds.u.data()), n_steps * n_u * sizeof(double));
    if (!in) throw IoError("truncated dataset cache " + path.string());
    return ds;
}

}  // namespace esnlab
