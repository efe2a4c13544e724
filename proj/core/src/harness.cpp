#include "esnlab/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "esnlab/parallel.hpp"
#include "esnlab/rng.hpp"
#include "nlohmann/json.hpp"

namespace esnlab {

using nlohmann::json;

// Divergence plateaus (+6 cap) wreck a stationary surrogate; the optimizer
// sees validation objectives saturated at log10(MSE) = 0 instead.
constexpr double kLogMseCapSurrogate = 0.0;

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::ModelFree: return "model_free";
        case Architecture::PodInformed: return "pod_informed";
        case Architecture::FeInformed: return "fe_informed";
    }
    return "?";
}

std::string to_string(OptimizerKind o) {
    return o == OptimizerKind::GS ? "gs" : "bo";
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "model_free") return Architecture::ModelFree;
    if (s == "pod_informed") return Architecture::PodInformed;
    if (s == "fe_informed") return Architecture::FeInformed;
    throw InvalidArgument("unknown architecture: " + s);
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "gs") return OptimizerKind::GS;
    if (s == "bo") return OptimizerKind::BO;
    throw InvalidArgument("unknown optimizer: " + s);
}

std::string StrategySpec::name() const {
    std::string n = to_string(kind);
    if (chaotic) n += "_c";
    if (star) n += "_star";
    return n;
}

StrategySpec StrategySpec::parse(const std::string& name) {
    for (const StrategySpec& s : all_strategies(true))
        if (s.name() == name) return s;
    throw InvalidArgument("unknown strategy: " + name);
}

std::vector<StrategySpec> all_strategies(bool include_star) {
    std::vector<StrategySpec> out{
        {Strategy::SSV, false, false}, {Strategy::WFV, false, false},
        {Strategy::WFV, true, false},  {Strategy::KFV, false, false},
        {Strategy::KFV, true, false},  {Strategy::RV, false, false},
        {Strategy::RV, true, false}};
    if (include_star) out.insert(out.begin() + 3, {Strategy::WFV, true, true});
    return out;
}

namespace {

bool is_lorenz(DatasetVariant v) {
    return v == DatasetVariant::LorenzShort || v == DatasetVariant::LorenzLong;
}

struct StrategyGeometry {
    Eigen::Index v = 0;
    Eigen::Index ssv_offset = 0;
    Eigen::Index ssv_train = 0;
    Eigen::Index wfv_train = 0;
};

StrategyGeometry geometry_for(DatasetVariant variant, Eigen::Index spl) {
    StrategyGeometry g;
    switch (variant) {
        case DatasetVariant::LorenzShort:
            g = {3 * spl, spl, 8 * spl, 6 * spl};
            break;
        case DatasetVariant::LorenzLong:
            g = {3 * spl, spl, 20 * spl, 9 * spl};
            break;
        case DatasetVariant::KuznetsovQuasiperiodic:
        case DatasetVariant::KuznetsovChaotic:
            g = {2 * spl, spl / 2, 5 * spl, spl * 7 / 2};
            break;
    }
    return g;
}

TestSuite build_suite(const ExperimentConfig& cfg, const TimeSeriesDataset& ds) {
    TestSuite suite = default_test_suite(ds, cfg.n_test_starts);
    if (cfg.test_ph_lt == 0.0) {
        suite.use_ph = false;
        suite.ph_interval_steps = 0;
    } else if (cfg.test_ph_lt > 0.0) {
        suite.use_ph = true;
        suite.ph_interval_steps = static_cast<Eigen::Index>(
            std::llround(cfg.test_ph_lt * static_cast<double>(ds.steps_per_lt)));
        if (suite.start_indices.back() + suite.rollout_steps() > ds.n_steps())
            throw DatasetTooShort("PH rollout override exceeds the dataset");
    }
    return suite;
}

std::optional<std::filesystem::path> resolve_cache_dir(const ExperimentConfig& cfg) {
    if (!cfg.cache_dir.empty()) return std::filesystem::path(cfg.cache_dir);
    if (const char* env = std::getenv("ESNLAB_CACHE_DIR"); env && *env)
        return std::filesystem::path(env);
    return std::nullopt;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

FoldSchedule schedule_for(const StrategySpec& spec, const TimeSeriesDataset& ds,
                          const ExperimentConfig& cfg) {
    const StrategyGeometry geom = geometry_for(ds.variant, ds.steps_per_lt);
    ScheduleConfig sc;
    sc.v_steps = geom.v;
    if (spec.kind == Strategy::SSV) {
        sc.offset = geom.ssv_offset;
        sc.train_steps = geom.ssv_train;
    } else if (spec.kind == Strategy::WFV) {
        sc.train_steps = geom.wfv_train;
    }
    if (spec.star) {
        if (ds.variant != DatasetVariant::LorenzLong)
            throw InvalidArgument("wfv_c_star is defined on the long Lorenz dataset");
        sc.custom_shift =
            cfg.wfv_star_shift > 0 ? cfg.wfv_star_shift : ds.steps_per_lt;
    }
    return build_schedule(spec.kind, spec.chaotic, ds, sc);
}

std::optional<KnowledgeFn> make_knowledge(const ExperimentConfig& cfg,
                                          const TimeSeriesDataset& ds) {
    switch (cfg.arch) {
        case Architecture::ModelFree:
            return std::nullopt;
        case Architecture::PodInformed: {
            if (!is_lorenz(cfg.variant))
                throw InvalidArgument("pod_informed requires a Lorenz dataset");
            const PodModel pod = compute_pod(ds.u.topRows(ds.span_steps), cfg.n_pod,
                                             ds.dt_network);
            return KnowledgeFn::pod_galerkin(pod, ds.system, ds.norm);
        }
        case Architecture::FeInformed: {
            if (is_lorenz(cfg.variant))
                throw InvalidArgument("fe_informed requires a Kuznetsov dataset");
            return KnowledgeFn::forward_euler_y(ds.system, ds.dt_network, ds.norm);
        }
    }
    throw InvalidArgument("unknown architecture");
}

ExperimentConfig ExperimentConfig::defaults_for(DatasetVariant variant,
                                                Architecture arch) {
    ExperimentConfig cfg;
    cfg.variant = variant;
    cfg.arch = arch;
    cfg.strategies = all_strategies(variant == DatasetVariant::LorenzLong);
    cfg.fixed_hp.n_r = 100;
    cfg.fixed_hp.sparseness = 0.97;
    cfg.fixed_hp.beta_tik = 1e-11;
    if (is_lorenz(variant)) {
        cfg.fixed_hp.b_in = 1.0;
        cfg.space.lo = {0.5, 0.1};
        cfg.space.hi = {5.0, 1.0};
        cfg.space.scale = {AxisScale::Linear, AxisScale::Linear};
    } else {
        cfg.fixed_hp.b_in = 0.1;
        cfg.space.lo = {0.5, 0.01};
        cfg.space.hi = {5.0, 1.0};
        cfg.space.scale = {AxisScale::Linear, AxisScale::Log10};
    }
    cfg.fixed_hp.sigma_in = 0.5 * (cfg.space.lo[0] + cfg.space.hi[0]);
    cfg.fixed_hp.rho = 0.5;
    return cfg;
}

void ExperimentConfig::validate() const {
    space.validate();
    if (n_ensemble < 1) throw InvalidArgument("n_ensemble must be >= 1");
    if (strategies.empty()) throw InvalidArgument("no strategies configured");
    if (optimizers.empty()) throw InvalidArgument("no optimizers configured");
    if (arch == Architecture::PodInformed && !is_lorenz(variant))
        throw InvalidArgument("pod_informed requires a Lorenz dataset");
    if (arch == Architecture::FeInformed && is_lorenz(variant))
        throw InvalidArgument("fe_informed requires a Kuznetsov dataset");
    for (const auto& s : strategies)
        if (s.star && variant != DatasetVariant::LorenzLong)
            throw InvalidArgument("wfv_c_star requires the long Lorenz dataset");
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["variant"] = to_string(cfg.variant);
    j["architecture"] = to_string(cfg.arch);
    json strategies = json::array();
    for (const auto& s : cfg.strategies) strategies.push_back(s.name());
    j["strategies"] = strategies;
    json opts = json::array();
    for (const auto& o : cfg.optimizers) opts.push_back(to_string(o));
    j["optimizers"] = opts;
    j["n_ensemble"] = cfg.n_ensemble;
    j["search_space"] = {{"lo", cfg.space.lo},
                         {"hi", cfg.space.hi},
                         {"scale",
                          {cfg.space.scale[0] == AxisScale::Linear ? "linear" : "log10",
                           cfg.space.scale[1] == AxisScale::Linear ? "linear" : "log10"}}};
    j["fixed_hp"] = {{"n_r", cfg.fixed_hp.n_r},
                     {"sparseness", cfg.fixed_hp.sparseness},
                     {"beta_tik", cfg.fixed_hp.beta_tik},
                     {"b_in", cfg.fixed_hp.b_in}};
    j["grid_shape"] = cfg.grid_shape;
    j["bo_n_start"] = cfg.bo_n_start;
    j["bo_n_acquire"] = cfg.bo_n_acquire;
    j["n_test_starts"] = cfg.n_test_starts;
    j["test_ph_lt"] = cfg.test_ph_lt;
    j["n_pod"] = cfg.n_pod;
    j["wfv_star_shift"] = cfg.wfv_star_shift;
    j["master_seed"] = cfg.master_seed;
    j["dataset_seed"] = cfg.dataset_seed;
    j["workers"] = cfg.workers;
    j["out_dir"] = cfg.out_dir;
    j["cache_dir"] = cfg.cache_dir;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg = ExperimentConfig::defaults_for(
        dataset_variant_from_string(j.at("variant").get<std::string>()),
        j.contains("architecture")
            ? architecture_from_string(j.at("architecture").get<std::string>())
            : Architecture::ModelFree);

    if (j.contains("strategies")) {
        cfg.strategies.clear();
        for (const auto& s : j.at("strategies"))
            cfg.strategies.push_back(StrategySpec::parse(s.get<std::string>()));
    }
    if (j.contains("optimizers")) {
        cfg.optimizers.clear();
        for (const auto& o : j.at("optimizers"))
            cfg.optimizers.push_back(optimizer_from_string(o.get<std::string>()));
    }
    if (j.contains("n_ensemble")) cfg.n_ensemble = j.at("n_ensemble");
    if (j.contains("search_space")) {
        const auto& s = j.at("search_space");
        if (s.contains("lo")) cfg.space.lo = s.at("lo");
        if (s.contains("hi")) cfg.space.hi = s.at("hi");
        if (s.contains("scale")) {
            for (int d = 0; d < 2; ++d) {
                const std::string sc = s.at("scale").at(d);
                if (sc != "linear" && sc != "log10")
                    throw InvalidArgument("unknown axis scale: " + sc);
                cfg.space.scale[d] =
                    sc == "linear" ? AxisScale::Linear : AxisScale::Log10;
            }
        }
    }
    if (j.contains("fixed_hp")) {
        const auto& h = j.at("fixed_hp");
        if (h.contains("n_r")) cfg.fixed_hp.n_r = h.at("n_r");
        if (h.contains("sparseness")) cfg.fixed_hp.sparseness = h.at("sparseness");
        if (h.contains("beta_tik")) cfg.fixed_hp.beta_tik = h.at("beta_tik");
        if (h.contains("b_in")) cfg.fixed_hp.b_in = h.at("b_in");
    }
    if (j.contains("grid_shape")) cfg.grid_shape = j.at("grid_shape");
    if (j.contains("bo_n_start")) cfg.bo_n_start = j.at("bo_n_start");
    if (j.contains("bo_n_acquire")) cfg.bo_n_acquire = j.at("bo_n_acquire");
    if (j.contains("n_test_starts")) cfg.n_test_starts = j.at("n_test_starts");
    if (j.contains("test_ph_lt")) cfg.test_ph_lt = j.at("test_ph_lt");
    if (j.contains("n_pod")) cfg.n_pod = j.at("n_pod");
    if (j.contains("wfv_star_shift")) cfg.wfv_star_shift = j.at("wfv_star_shift");
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed");
    if (j.contains("dataset_seed")) cfg.dataset_seed = j.at("dataset_seed");
    if (j.contains("workers")) cfg.workers = j.at("workers");
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir");
    if (j.contains("cache_dir")) cfg.cache_dir = j.at("cache_dir");
    return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::uint64_t ExperimentConfig::config_hash() const {
    const std::string dump = config_to_json(*this);
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

TestEval evaluate_test(const ReservoirMatrices& trained, const EsnHyperparams& hp,
                       const TimeSeriesDataset& ds, const TestSuite& suite,
                       const KnowledgeFn* knowledge) {
    TestEval te;
    te.mses.reserve(suite.start_indices.size());
    const Eigen::Index rollout = suite.rollout_steps();
    for (const Eigen::Index s : suite.start_indices) {
        const Eigen::MatrixXd preds =
            forecast_interval(trained, hp, ds, s, rollout, knowledge);
        const double m = mse(preds.topRows(suite.interval_steps),
                             ds.u.middleRows(s, suite.interval_steps));
        te.mses.push_back(std::isfinite(m) ? m : std::pow(10.0, kLogMseCap));
        if (suite.use_ph)
            te.phs_lt.push_back(
                prediction_horizon(preds.topRows(suite.ph_interval_steps),
                                   ds.u.middleRows(s, suite.ph_interval_steps),
                                   suite.k_threshold, ds.dt_network,
                                   ds.lyapunov_time)
                    .ph_lt);
    }
    te.agg = aggregate(te.mses, te.phs_lt);
    return te;
}

namespace {

CellResult run_cell(const ExperimentConfig& cfg, const StrategySpec& spec,
                    OptimizerKind opt, const ReservoirMatrices& mats,
                    const EsnHyperparams& hp0, const FoldSchedule& schedule,
                    const TimeSeriesDataset& ds, const TestSuite& suite,
                    const KnowledgeFn* kfn, std::uint64_t cell_seed) {
    CellResult cell;
    cell.strategy = spec.name();
    cell.optimizer = to_string(opt);
    const auto t0 = std::chrono::steady_clock::now();
    EvalCounters counters;

    try {
        const Objective objective = [&](double sigma_in, double rho) {
            return evaluate_objective(sigma_in, rho, hp0, mats, schedule, ds, kfn,
                                      &counters);
        };

        Eigen::Vector2d best;
        if (opt == OptimizerKind::GS) {
            const GridSearchResult g =
                grid_search(objective, cfg.space, cfg.grid_shape);
            best = g.best_physical;
            cell.val_objective = g.best_value;
            int it = 0;
            for (const GridPoint& p : g.table)
                cell.trace.push_back(
                    {it++, p.physical[0], p.physical[1], p.value, "grid", {}});
        } else {
            const BoResult b = bayesian_optimize(objective, cfg.space, cfg.bo_n_start,
                                                 cfg.bo_n_acquire, cell_seed,
                                                 kLogMseCapSurrogate);
            best = b.best_physical;
            cell.val_objective = b.best_value;
            for (const BoTracePoint& p : b.trace)
                cell.trace.push_back({p.iteration, p.physical[0], p.physical[1],
                                      p.value, p.acquisition, p.probabilities});
        }
        cell.best_sigma_in = best[0];
        cell.best_rho = best[1];
        cell.val_mse = std::pow(10.0, cell.val_objective);

        EsnHyperparams hp = hp0;
        hp.sigma_in = best[0];
        hp.rho = best[1];
        ReservoirMatrices trained = mats;
        trained.w_out = train_on_span(mats, hp, ds, kfn, &counters);
        const TestEval te = evaluate_test(trained, hp, ds, suite, kfn);
        cell.test_mse_geo = te.agg.mse_geo;
        cell.test_ph_mean_lt = te.agg.ph_mean_lt;
    } catch (const std::exception& e) {
        cell.error = e.what();
    }

    cell.objective_evals = counters.objective_evals;
    cell.ridge_solves = counters.ridge_solves;
    cell.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cell;
}

}  // namespace

ExperimentRecord run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const TimeSeriesDataset ds =
        make_dataset(cfg.variant, cfg.dataset_seed, resolve_cache_dir(cfg));
    const std::optional<KnowledgeFn> kfn = make_knowledge(cfg, ds);
    const KnowledgeFn* kfn_ptr = kfn ? &*kfn : nullptr;
    const TestSuite suite = build_suite(cfg, ds);

    std::vector<FoldSchedule> schedules;
    schedules.reserve(cfg.strategies.size());
    for (const auto& spec : cfg.strategies)
        schedules.push_back(schedule_for(spec, ds, cfg));

    ExperimentRecord record;
    record.config = cfg;
    record.config_hash = cfg.config_hash();
    record.networks.resize(static_cast<std::size_t>(cfg.n_ensemble));

    parallel_for(cfg.n_ensemble, cfg.workers, [&](int i) {
        NetworkRecord& net = record.networks[static_cast<std::size_t>(i)];
        net.network_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
        try {
            EsnHyperparams hp0 = cfg.fixed_hp;
            hp0.seed = net.network_seed;
            const ReservoirMatrices mats = init_matrices(hp0, ds.n_u());

            std::uint64_t cell_ordinal = 0;
            for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
                for (const OptimizerKind opt : cfg.optimizers) {
                    const std::uint64_t cell_seed =
                        derive_seed(net.network_seed, 0xCE11ull + cell_ordinal);
                    net.cells.push_back(run_cell(cfg, cfg.strategies[si], opt, mats,
                                                 hp0, schedules[si], ds, suite,
                                                 kfn_ptr, cell_seed));
                    ++cell_ordinal;
                }
            }
        } catch (const std::exception& e) {
            net.error = e.what();
        }
    });

    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

namespace {

json trace_to_json(const std::vector<TracePoint>& trace) {
    json arr = json::array();
    for (const TracePoint& p : trace)
        arr.push_back({p.iteration, p.sigma_in, p.rho, p.objective, p.acquisition,
                       p.probabilities[0], p.probabilities[1], p.probabilities[2]});
    return arr;
}

std::vector<TracePoint> trace_from_json(const json& arr) {
    std::vector<TracePoint> trace;
    for (const auto& p : arr) {
        TracePoint tp;
        tp.iteration = p.at(0);
        tp.sigma_in = p.at(1);
        tp.rho = p.at(2);
        tp.objective = p.at(3);
        tp.acquisition = p.at(4);
        tp.probabilities = {p.at(5), p.at(6), p.at(7)};
        trace.push_back(tp);
    }
    return trace;
}

}  // namespace

void save_record_json(const ExperimentRecord& record,
                      const std::filesystem::path& path) {
    json j;
    j["config"] = json::parse(config_to_json(record.config));
    j["config_hash"] = record.config_hash;
    j["wall_seconds"] = record.wall_seconds;
    json nets = json::array();
    for (const NetworkRecord& net : record.networks) {
        json nj;
        nj["network_seed"] = net.network_seed;
        nj["error"] = net.error;
        json cells = json::array();
        for (const CellResult& c : net.cells) {
            json cj;
            cj["strategy"] = c.strategy;
            cj["optimizer"] = c.optimizer;
            cj["best_sigma_in"] = c.best_sigma_in;
            cj["best_rho"] = c.best_rho;
            cj["val_objective"] = c.val_objective;
            cj["val_mse"] = c.val_mse;
            cj["test_mse_geo"] = c.test_mse_geo;
            cj["test_ph_mean_lt"] =
                std::isfinite(c.test_ph_mean_lt) ? json(c.test_ph_mean_lt) : json();
            cj["objective_evals"] = c.objective_evals;
            cj["ridge_solves"] = c.ridge_solves;
            cj["wall_seconds"] = c.wall_seconds;
            cj["error"] = c.error;
            cj["trace"] = trace_to_json(c.trace);
            cells.push_back(cj);
        }
        nj["cells"] = cells;
        nets.push_back(nj);
    }
    j["networks"] = nets;

    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump() << "\n";
}

ExperimentRecord load_record_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    in >> j;

    ExperimentRecord record;
    record.config = config_from_json(j.at("config").dump());
    record.config_hash = j.at("config_hash");
    record.wall_seconds = j.at("wall_seconds");
    for (const auto& nj : j.at("networks")) {
        NetworkRecord net;
        net.network_seed = nj.at("network_seed");
        net.error = nj.at("error");
        for (const auto& cj : nj.at("cells")) {
            CellResult c;
            c.strategy = cj.at("strategy");
            c.optimizer = cj.at("optimizer");
            c.best_sigma_in = cj.at("best_sigma_in");
            c.best_rho = cj.at("best_rho");
            c.val_objective = cj.at("val_objective");
            c.val_mse = cj.at("val_mse");
            c.test_mse_geo = cj.at("test_mse_geo");
            c.test_ph_mean_lt = cj.at("test_ph_mean_lt").is_null()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : cj.at("test_ph_mean_lt").get<double>();
            c.objective_evals = cj.at("objective_evals");
            c.ridge_solves = cj.at("ridge_solves");
            c.wall_seconds = cj.at("wall_seconds");
            c.error = cj.at("error");
            c.trace = trace_from_json(cj.at("trace"));
            net.cells.push_back(std::move(c));
        }
        record.networks.push_back(std::move(net));
    }
    return record;
}

namespace {

const CellResult* find_cell(const NetworkRecord& net, const std::string& strategy,
                            const std::string& optimizer) {
    for (const CellResult& c : net.cells)
        if (c.strategy == strategy && c.optimizer == optimizer && c.error.empty())
            return &c;
    return nullptr;
}

double cell_field(const CellResult& c, CellField f) {
    switch (f) {
        case CellField::ValMse: return c.val_mse;
        case CellField::TestMseGeo: return c.test_mse_geo;
        case CellField::TestPhMeanLt: return c.test_ph_mean_lt;
        case CellField::ValObjective: return c.val_objective;
    }
    return 0.0;
}

// Eq.-9 style concatenation: the BO block first, then GS, over networks
// without recorded failures.
Eigen::VectorXd concat_over_optimizers(const ExperimentRecord& record,
                                       const std::string& strategy, CellField field) {
    std::vector<double> values;
    std::vector<OptimizerKind> opts = record.config.optimizers;
    std::sort(opts.begin(), opts.end(), [](OptimizerKind a, OptimizerKind b) {
        return static_cast<int>(a) > static_cast<int>(b);  // BO before GS
    });
    opts.erase(std::unique(opts.begin(), opts.end()), opts.end());
    for (const OptimizerKind opt : opts) {
        for (const NetworkRecord& net : record.networks) {
            if (!net.error.empty()) continue;
            if (const CellResult* c = find_cell(net, strategy, to_string(opt)))
                values.push_back(cell_field(*c, field));
        }
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::vector<double> collect_cell_values(const ExperimentRecord& record,
                                        const std::string& strategy,
                                        OptimizerKind opt, CellField field) {
    std::vector<double> values;
    for (const NetworkRecord& net : record.networks) {
        if (!net.error.empty()) continue;
        if (const CellResult* c = find_cell(net, strategy, to_string(opt)))
            values.push_back(cell_field(*c, field));
    }
    return values;
}

std::map<std::string, double> spearman_table(const ExperimentRecord& record) {
    std::map<std::string, double> table;
    for (const auto& spec : record.config.strategies) {
        const Eigen::VectorXd x =
            concat_over_optimizers(record, spec.name(), CellField::ValMse);
        const Eigen::VectorXd y =
            concat_over_optimizers(record, spec.name(), CellField::TestMseGeo);
        table[spec.name()] =
            x.size() >= 2 ? spearman(x, y) : std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

std::map<std::string, double> mse_ph_spearman_table(const ExperimentRecord& record) {
    std::map<std::string, double> table;
    for (const auto& spec : record.config.strategies) {
        const Eigen::VectorXd x =
            concat_over_optimizers(record, spec.name(), CellField::TestMseGeo);
        const Eigen::VectorXd y =
            concat_over_optimizers(record, spec.name(), CellField::TestPhMeanLt);
        table[spec.name()] =
            x.size() >= 2 ? spearman(x, y) : std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

void export_record(const ExperimentRecord& record, const std::filesystem::path& out_dir,
                   const std::set<std::string>& formats) {
    std::set<std::string> want = formats;
    if (want.empty()) want = {"csv", "json"};
    std::filesystem::create_directories(out_dir);

    if (want.count("csv")) {
        std::ofstream results(out_dir / "results.csv");
        results << "network_seed,strategy,optimizer,sigma_in,rho,val_objective,"
                   "val_mse,test_mse_geo,test_ph_mean_lt,objective_evals,"
                   "ridge_solves,wall_seconds,error\n";
        for (const NetworkRecord& net : record.networks)
            for (const CellResult& c : net.cells)
                results << net.network_seed << ',' << c.strategy << ','
                        << c.optimizer << ',' << fmt_g(c.best_sigma_in) << ','
                        << fmt_g(c.best_rho) << ',' << fmt_g(c.val_objective) << ','
                        << fmt_g(c.val_mse) << ',' << fmt_g(c.test_mse_geo) << ','
                        << fmt_g(c.test_ph_mean_lt) << ',' << c.objective_evals
                        << ',' << c.ridge_solves << ',' << fmt_g(c.wall_seconds)
                        << ',' << c.error << '\n';

        std::ofstream traces(out_dir / "traces.csv");
        traces << "network_seed,strategy,optimizer,iteration,sigma_in,rho,objective,"
                  "acquisition,p_pi,p_ei,p_lcb\n";
        for (const NetworkRecord& net : record.networks)
            for (const CellResult& c : net.cells)
                for (const TracePoint& p : c.trace)
                    traces << net.network_seed << ',' << c.strategy << ','
                           << c.optimizer << ',' << p.iteration << ','
                           << fmt_g(p.sigma_in) << ',' << fmt_g(p.rho) << ','
                           << fmt_g(p.objective) << ',' << p.acquisition << ','
                           << fmt_g(p.probabilities[0]) << ','
                           << fmt_g(p.probabilities[1]) << ','
                           << fmt_g(p.probabilities[2]) << '\n';
    }

    if (want.count("json")) {
        json summary;
        summary["config_hash"] = record.config_hash;
        summary["wall_seconds"] = record.wall_seconds;
        summary["spearman_val_test"] = spearman_table(record);
        summary["spearman_mse_ph"] = mse_ph_spearman_table(record);

        json per_cell = json::object();
        for (const auto& spec : record.config.strategies) {
            for (const OptimizerKind opt : record.config.optimizers) {
                auto val = collect_cell_values(record, spec.name(), opt,
                                               CellField::ValMse);
                auto test = collect_cell_values(record, spec.name(), opt,
                                                CellField::TestMseGeo);
                auto ph = collect_cell_values(record, spec.name(), opt,
                                              CellField::TestPhMeanLt);
                if (val.empty()) continue;
                json stats;
                stats["n"] = val.size();
                stats["median_val_mse"] = percentile(val, 50);
                stats["median_test_mse"] = percentile(test, 50);
                const bool ph_ok =
                    !ph.empty() && std::isfinite(ph.front());
                if (ph_ok)
                    stats["test_ph_pct"] = {percentile(ph, 25), percentile(ph, 50),
                                            percentile(ph, 75)};
                long solves = 0, evals = 0;
                for (const NetworkRecord& net : record.networks)
                    if (const CellResult* c =
                            find_cell(net, spec.name(), to_string(opt))) {
                        solves += c->ridge_solves;
                        evals += c->objective_evals;
                    }
                stats["ridge_solves"] = solves;
                stats["objective_evals"] = evals;
                per_cell[spec.name() + "/" + to_string(opt)] = stats;
            }
        }
        summary["cells"] = per_cell;
        std::ofstream out(out_dir / "summary.json");
        out << summary.dump(2) << "\n";

        save_record_json(record, out_dir / "record.json");
        std::ofstream cfg_out(out_dir / "config.json");
        cfg_out << config_to_json(record.config) << "\n";
    }

    if (want.count("surfaces")) {
        std::ofstream surf(out_dir / "surfaces.csv");
        surf << "network_seed,strategy,optimizer,set,sigma_in,rho,log10_mse\n";
        const int n = 30;
        for (const NetworkRecord& net : record.networks) {
            for (const CellResult& c : net.cells) {
                if (!c.error.empty() || c.trace.size() < 2) continue;
                std::vector<Eigen::Vector2d> xs;
                Eigen::VectorXd ys(static_cast<Eigen::Index>(c.trace.size()));
                Eigen::Index k = 0;
                for (const TracePoint& p : c.trace) {
                    const Eigen::Vector2d unit = record.config.space.to_unit(
                        Eigen::Vector2d(p.sigma_in, p.rho));
                    bool dup = false;
                    for (const auto& x : xs)
                        if ((x - unit).norm() < 1e-12) dup = true;
                    if (dup) continue;
                    xs.push_back(unit);
                    ys[k++] = p.objective;
                }
                ys.conservativeResize(k);
                const GpSurrogate gp = GpSurrogate::fit(xs, ys);
                for (int i = 0; i < n; ++i)
                    for (int jx = 0; jx < n; ++jx) {
                        const Eigen::Vector2d unit(
                            static_cast<double>(i) / (n - 1),
                            static_cast<double>(jx) / (n - 1));
                        const Eigen::Vector2d phys =
                            record.config.space.to_physical(unit);
                        surf << net.network_seed << ',' << c.strategy << ','
                             << c.optimizer << ",validation," << fmt_g(phys[0])
                             << ',' << fmt_g(phys[1]) << ','
                             << fmt_g(gp.posterior(unit).mean) << '\n';
                    }
            }
        }
    }

    if (want.count("schedules")) {
        const TimeSeriesDataset ds = make_dataset(
            record.config.variant, record.config.dataset_seed,
            resolve_cache_dir(record.config));
        json all = json::object();
        for (const auto& spec : record.config.strategies)
            all[spec.name()] = json::parse(
                schedule_to_json(schedule_for(spec, ds, record.config), ds));
        std::ofstream out(out_dir / "schedules.json");
        out << all.dump(2) << "\n";
    }
}

// ---- appendix studies ----

namespace {

struct EnsembleContext {
    TimeSeriesDataset ds;
    std::optional<KnowledgeFn> kfn;
    TestSuite suite;
    FoldSchedule schedule;
    std::vector<ReservoirMatrices> mats;  // one per network, seed order
    std::vector<EsnHyperparams> hp0;
};

EnsembleContext make_context(const ExperimentConfig& cfg) {
    EnsembleContext ctx;
    ctx.ds = make_dataset(cfg.variant, cfg.dataset_seed, resolve_cache_dir(cfg));
    ctx.kfn = make_knowledge(cfg, ctx.ds);
    ctx.suite = build_suite(cfg, ctx.ds);
    ctx.schedule = schedule_for(cfg.strategies.front(), ctx.ds, cfg);
    ctx.mats.resize(static_cast<std::size_t>(cfg.n_ensemble));
    ctx.hp0.resize(static_cast<std::size_t>(cfg.n_ensemble));
    parallel_for(cfg.n_ensemble, cfg.workers, [&](int i) {
        EsnHyperparams hp = cfg.fixed_hp;
        hp.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
        ctx.hp0[static_cast<std::size_t>(i)] = hp;
        ctx.mats[static_cast<std::size_t>(i)] = init_matrices(hp, ctx.ds.n_u());
    });
    return ctx;
}

// Retrains every network at a fixed (sigma_in, rho) and scores the test suite.
FixedHpMode eval_fixed_mode(const std::string& name, double sigma_in, double rho,
                            const ExperimentConfig& cfg, const EnsembleContext& ctx) {
    FixedHpMode mode;
    mode.name = name;
    mode.sigma_in = sigma_in;
    mode.rho = rho;
    mode.test_ph_lt.resize(static_cast<std::size_t>(cfg.n_ensemble));
    mode.test_mse_geo.resize(static_cast<std::size_t>(cfg.n_ensemble));
    const KnowledgeFn* kfn = ctx.kfn ? &*ctx.kfn : nullptr;
    parallel_for(cfg.n_ensemble, cfg.workers, [&](int i) {
        const auto ui = static_cast<std::size_t>(i);
        EsnHyperparams hp = ctx.hp0[ui];
        hp.sigma_in = sigma_in;
        hp.rho = rho;
        ReservoirMatrices trained = ctx.mats[ui];
        trained.w_out = train_on_span(ctx.mats[ui], hp, ctx.ds, kfn, nullptr);
        const TestEval te = evaluate_test(trained, hp, ctx.ds, ctx.suite, kfn);
        mode.test_ph_lt[ui] = te.agg.ph_mean_lt;
        mode.test_mse_geo[ui] = te.agg.mse_geo;
    });
    mode.mse_pct = {percentile(mode.test_mse_geo, 25),
                    percentile(mode.test_mse_geo, 50),
                    percentile(mode.test_mse_geo, 75)};
    if (ctx.suite.use_ph)
        mode.ph_pct = {percentile(mode.test_ph_lt, 25),
                       percentile(mode.test_ph_lt, 50),
                       percentile(mode.test_ph_lt, 75)};
    return mode;
}

}  // namespace

FixedHpStudyResult run_fixed_hp_study(const ExperimentConfig& cfg,
                                      const ExperimentRecord* base,
                                      bool include_mode_i) {
    ExperimentConfig base_cfg = cfg;
    base_cfg.strategies = {cfg.strategies.front()};
    base_cfg.optimizers = {OptimizerKind::BO};

    ExperimentRecord local;
    if (!base) {
        local = run_experiment(base_cfg);
        base = &local;
    }
    const std::string strategy = base_cfg.strategies.front().name();

    FixedHpStudyResult result;
    const EnsembleContext ctx = make_context(base_cfg);
    const KnowledgeFn* kfn = ctx.kfn ? &*ctx.kfn : nullptr;

    // Mode "independent": per-network optima from the base record.
    FixedHpMode ind;
    ind.name = "independent";
    ind.sigma_in = std::numeric_limits<double>::quiet_NaN();
    ind.rho = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<double, std::size_t>> objective_order;
    for (std::size_t i = 0; i < base->networks.size(); ++i) {
        const CellResult* c = find_cell(base->networks[i], strategy, "bo");
        if (!c) continue;
        ind.test_ph_lt.push_back(c->test_ph_mean_lt);
        ind.test_mse_geo.push_back(c->test_mse_geo);
        objective_order.emplace_back(c->val_objective, i);
    }
    if (objective_order.empty())
        throw EmptyInput("fixed-hp study needs at least one successful network");
    ind.mse_pct = {percentile(ind.test_mse_geo, 25), percentile(ind.test_mse_geo, 50),
                   percentile(ind.test_mse_geo, 75)};
    if (ctx.suite.use_ph)
        ind.ph_pct = {percentile(ind.test_ph_lt, 25), percentile(ind.test_ph_lt, 50),
                      percentile(ind.test_ph_lt, 75)};
    result.modes.push_back(std::move(ind));

    // Mode (i): fixed pair minimizing the ensemble geometric-mean validation
    // MSE, searched with the same BO budget on the ensemble-mean objective.
    if (include_mode_i) {
        const Objective ensemble_objective = [&](double s, double r) {
            std::vector<double> vals(ctx.mats.size());
            parallel_for(static_cast<int>(ctx.mats.size()), cfg.workers, [&](int i) {
                const auto ui = static_cast<std::size_t>(i);
                vals[ui] = evaluate_objective(s, r, ctx.hp0[ui], ctx.mats[ui],
                                              ctx.schedule, ctx.ds, kfn, nullptr);
            });
            double sum = 0.0;
            for (double v : vals) sum += v;
            return sum / static_cast<double>(vals.size());
        };
        const BoResult opt = bayesian_optimize(
            ensemble_objective, cfg.space, cfg.bo_n_start, cfg.bo_n_acquire,
            derive_seed(cfg.master_seed, 0xF17ull), kLogMseCapSurrogate);
        result.modes.push_back(eval_fixed_mode("fixed_ensemble_opt",
                                               opt.best_physical[0],
                                               opt.best_physical[1], base_cfg, ctx));
    }

    // Mode (ii): the optimum of the network whose validation objective is the
    // ensemble median.
    std::sort(objective_order.begin(), objective_order.end());
    const std::size_t rep_i = objective_order[(objective_order.size() - 1) / 2].second;
    const CellResult* rep = find_cell(base->networks[rep_i], strategy, "bo");
    result.representative_seed = base->networks[rep_i].network_seed;
    result.modes.push_back(eval_fixed_mode("fixed_single_network", rep->best_sigma_in,
                                           rep->best_rho, base_cfg, ctx));
    return result;
}

ConvergenceSweepResult run_convergence_sweep(const ExperimentConfig& cfg,
                                             SweepAxis axis,
                                             const ExperimentRecord* base) {
    ExperimentConfig base_cfg = cfg;
    base_cfg.strategies = {cfg.strategies.front()};
    base_cfg.optimizers = {OptimizerKind::BO};

    ExperimentRecord local;
    if (!base) {
        local = run_experiment(base_cfg);
        base = &local;
    }
    const std::string strategy = base_cfg.strategies.front().name();

    ConvergenceSweepResult sweep;
    sweep.axis = axis;

    if (axis == SweepAxis::NEnsemble) {
        sweep.metric = "val_mse";
        const auto values =
            collect_cell_values(*base, strategy, OptimizerKind::BO, CellField::ValMse);
        const int n = static_cast<int>(values.size());
        const int step = std::max(1, n / 10);
        for (int m = std::min(step, n); m <= n; m += step) {
            std::vector<double> head(values.begin(), values.begin() + m);
            sweep.sizes.push_back(m);
            sweep.percentiles.push_back(
                {percentile(head, 25), percentile(head, 50), percentile(head, 75)});
            if (m == n) break;
        }
        if (sweep.sizes.back() != n) {
            std::vector<double> all = values;
            sweep.sizes.push_back(n);
            sweep.percentiles.push_back(
                {percentile(all, 25), percentile(all, 50), percentile(all, 75)});
        }
        return sweep;
    }

    // NTestStarts: per-network mean PH over the first m starting points.
    const EnsembleContext ctx = make_context(base_cfg);
    sweep.metric = ctx.suite.use_ph ? "test_ph_lt" : "test_mse";
    const KnowledgeFn* kfn = ctx.kfn ? &*ctx.kfn : nullptr;
    const auto n_nets = static_cast<int>(base->networks.size());
    std::vector<std::vector<double>> per_start(static_cast<std::size_t>(n_nets));
    parallel_for(n_nets, cfg.workers, [&](int i) {
        const auto ui = static_cast<std::size_t>(i);
        const CellResult* c = find_cell(base->networks[ui], strategy, "bo");
        if (!c) return;
        EsnHyperparams hp = ctx.hp0[ui];
        hp.sigma_in = c->best_sigma_in;
        hp.rho = c->best_rho;
        ReservoirMatrices trained = ctx.mats[ui];
        trained.w_out = train_on_span(ctx.mats[ui], hp, ctx.ds, kfn, nullptr);
        const TestEval te = evaluate_test(trained, hp, ctx.ds, ctx.suite, kfn);
        per_start[ui] = ctx.suite.use_ph ? te.phs_lt : te.mses;
    });

    const int n_starts = static_cast<int>(ctx.suite.start_indices.size());
    const int step = std::max(1, n_starts / 10);
    for (int m = std::min(step, n_starts); m <= n_starts; m += step) {
        std::vector<double> means;
        for (const auto& phs : per_start) {
            if (phs.empty()) continue;
            double sum = 0.0;
            for (int k = 0; k < m; ++k) sum += phs[static_cast<std::size_t>(k)];
            means.push_back(sum / m);
        }
        sweep.sizes.push_back(m);
        sweep.percentiles.push_back(
            {percentile(means, 25), percentile(means, 50), percentile(means, 75)});
    }
    return sweep;
}

CostStudyResult run_cost_study(const ExperimentConfig& cfg) {
    const TimeSeriesDataset ds =
        make_dataset(cfg.variant, cfg.dataset_seed, resolve_cache_dir(cfg));
    const std::optional<KnowledgeFn> kfn = make_knowledge(cfg, ds);
    const KnowledgeFn* kfn_ptr = kfn ? &*kfn : nullptr;

    EsnHyperparams hp0 = cfg.fixed_hp;
    hp0.seed = derive_seed(cfg.master_seed, 0);
    const ReservoirMatrices mats = init_matrices(hp0, ds.n_u());

    CostStudyResult res;
    for (const Strategy strat : {Strategy::KFV, Strategy::RV}) {
        const FoldSchedule schedule =
            schedule_for({strat, false, false}, ds, cfg);
        EvalCounters counters;
        const Objective objective = [&](double s, double r) {
            return evaluate_objective(s, r, hp0, mats, schedule, ds, kfn_ptr,
                                      &counters);
        };
        const auto t0 = std::chrono::steady_clock::now();
        grid_search(objective, cfg.space, cfg.grid_shape);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        const double per_eval = static_cast<double>(counters.ridge_solves) /
                                static_cast<double>(counters.objective_evals);
        if (strat == Strategy::KFV) {
            res.kfv_folds = schedule.n_folds();
            res.kfv_solves_per_eval = per_eval;
            res.kfv_seconds = secs;
        } else {
            res.rv_solves_per_eval = per_eval;
            res.rv_seconds = secs;
        }
    }
    return res;
}

void run_surface_study(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       int grid_points) {
    const TimeSeriesDataset ds =
        make_dataset(cfg.variant, cfg.dataset_seed, resolve_cache_dir(cfg));
    const std::optional<KnowledgeFn> kfn = make_knowledge(cfg, ds);
    const KnowledgeFn* kfn_ptr = kfn ? &*kfn : nullptr;
    const TestSuite suite = build_suite(cfg, ds);
    const FoldSchedule schedule = schedule_for(cfg.strategies.front(), ds, cfg);

    EsnHyperparams hp0 = cfg.fixed_hp;
    hp0.seed = derive_seed(cfg.master_seed, 0);
    const ReservoirMatrices mats = init_matrices(hp0, ds.n_u());

    std::filesystem::create_directories(out.parent_path().empty() ? "."
                                                                  : out.parent_path());
    std::ofstream surf(out);
    if (!surf) throw IoError("cannot open " + out.string() + " for writing");
    surf << "set,sigma_in,rho,log10_mse\n";

    const int n = grid_points;
    std::vector<std::array<double, 4>> rows(
        static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * 2);
    parallel_for(n * n, cfg.workers, [&](int idx) {
        const int i = idx / n, j = idx % n;
        const Eigen::Vector2d unit(static_cast<double>(i) / (n - 1),
                                   static_cast<double>(j) / (n - 1));
        const Eigen::Vector2d phys = cfg.space.to_physical(unit);
        const double val_obj = evaluate_objective(phys[0], phys[1], hp0, mats,
                                                  schedule, ds, kfn_ptr, nullptr);

        EsnHyperparams hp = hp0;
        hp.sigma_in = phys[0];
        hp.rho = phys[1];
        ReservoirMatrices trained = mats;
        trained.w_out = train_on_span(mats, hp, ds, kfn_ptr, nullptr);
        const TestEval te = evaluate_test(trained, hp, ds, suite, kfn_ptr);

        rows[static_cast<std::size_t>(idx) * 2] = {0.0, phys[0], phys[1], val_obj};
        rows[static_cast<std::size_t>(idx) * 2 + 1] = {
            1.0, phys[0], phys[1], std::log10(std::max(te.agg.mse_geo, 1e-16))};
    });
    for (const auto& r : rows)
        surf << (r[0] == 0.0 ? "validation" : "test") << ',' << fmt_g(r[1]) << ','
             << fmt_g(r[2]) << ',' << fmt_g(r[3]) << '\n';
}

}  // namespace esnlab
