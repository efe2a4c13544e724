#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "esnlab/dynamics.hpp"
#include "esnlab/hpo.hpp"
#include "esnlab/knowledge.hpp"
#include "esnlab/metrics.hpp"
#include "esnlab/validation.hpp"

namespace esnlab {

enum class Architecture { ModelFree, PodInformed, FeInformed };
enum class OptimizerKind { GS, BO };

std::string to_string(Architecture a);
std::string to_string(OptimizerKind o);
Architecture architecture_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

/// A strategy instance: base kind, chaotic shift, and the starred
/// walk-forward variant with a configurable shift (long Lorenz only).
struct StrategySpec {
    Strategy kind = Strategy::SSV;
    bool chaotic = false;
    bool star = false;

    std::string name() const;
    static StrategySpec parse(const std::string& name);
    bool operator==(const StrategySpec&) const = default;
};

/// All eight named strategies: ssv wfv wfv_c wfv_c_star kfv kfv_c rv rv_c.
std::vector<StrategySpec> all_strategies(bool include_star);

struct ExperimentConfig {
    DatasetVariant variant = DatasetVariant::LorenzShort;
    Architecture arch = Architecture::ModelFree;
    std::vector<StrategySpec> strategies;
    std::vector<OptimizerKind> optimizers{OptimizerKind::BO, OptimizerKind::GS};
    int n_ensemble = 50;

    SearchSpace space;
    EsnHyperparams fixed_hp;  // sigma_in / rho are placeholders, optimized away
    std::array<int, 2> grid_shape{7, 7};
    int bo_n_start = 25;
    int bo_n_acquire = 24;
    int n_test_starts = -1;      // -1: per-variant default
    double test_ph_lt = -1.0;    // PH rollout override; -1 default, 0 disables PH
    int n_pod = 2;
    Eigen::Index wfv_star_shift = -1;  // -1: one Lyapunov time

    std::uint64_t master_seed = 1;
    std::uint64_t dataset_seed = 0;
    int workers = 0;
    std::string out_dir = "results";
    std::string cache_dir;  // empty: ESNLAB_CACHE_DIR if set, else no cache

    /// System-specific defaults (search space, input bias, strategy list).
    static ExperimentConfig defaults_for(DatasetVariant variant,
                                         Architecture arch = Architecture::ModelFree);
    void validate() const;
    std::uint64_t config_hash() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

struct TracePoint {
    int iteration = 0;
    double sigma_in = 0.0;
    double rho = 0.0;
    double objective = 0.0;
    std::string acquisition;  // "grid", "init", "pi", "ei", "lcb"
    std::array<double, 3> probabilities{0.0, 0.0, 0.0};
};

/// One (network, strategy, optimizer) outcome.
struct CellResult {
    std::string strategy;
    std::string optimizer;
    double best_sigma_in = 0.0;
    double best_rho = 0.0;
    double val_objective = 0.0;  // mean log10 MSE at the optimum
    double val_mse = 0.0;        // 10^val_objective
    double test_mse_geo = 0.0;
    double test_ph_mean_lt = 0.0;  // NaN when the suite is MSE-only
    std::vector<TracePoint> trace;
    long objective_evals = 0;
    long ridge_solves = 0;
    double wall_seconds = 0.0;
    std::string error;  // nonempty marks a recorded partial failure
};

struct NetworkRecord {
    std::uint64_t network_seed = 0;
    std::vector<CellResult> cells;
    std::string error;
};

struct ExperimentRecord {
    ExperimentConfig config;
    std::uint64_t config_hash = 0;
    std::vector<NetworkRecord> networks;
    double wall_seconds = 0.0;
};

/// Per-network schedule geometry for a strategy on this dataset.
FoldSchedule schedule_for(const StrategySpec& spec, const TimeSeriesDataset& ds,
                          const ExperimentConfig& cfg);

/// Knowledge function for the configured architecture (nullopt = model-free).
std::optional<KnowledgeFn> make_knowledge(const ExperimentConfig& cfg,
                                          const TimeSeriesDataset& ds);

/// Per-interval test scores for a trained network.
struct TestEval {
    std::vector<double> mses;
    std::vector<double> phs_lt;
    Aggregate agg;
};
TestEval evaluate_test(const ReservoirMatrices& trained, const EsnHyperparams& hp,
                       const TimeSeriesDataset& ds, const TestSuite& suite,
                       const KnowledgeFn* knowledge);

/// The full protocol: per network seed, initialize matrices once; per
/// (strategy, optimizer), optimize (sigma_in, rho) on the validation
/// objective, retrain the readout on the whole train+validation span, and
/// score the test suite. Networks run in parallel and are merged in seed
/// order. Partial failures are recorded and the run continues.
ExperimentRecord run_experiment(const ExperimentConfig& cfg);

void save_record_json(const ExperimentRecord& record, const std::filesystem::path& path);
ExperimentRecord load_record_json(const std::filesystem::path& path);

/// Spearman correlation between validation and test MSE per strategy, over
/// the ensemble with the BO and GS blocks concatenated.
std::map<std::string, double> spearman_table(const ExperimentRecord& record);

/// Spearman between test MSE and test PH per strategy (same concatenation).
std::map<std::string, double> mse_ph_spearman_table(const ExperimentRecord& record);

/// Per-(strategy, optimizer) vector of one per-network value.
enum class CellField { ValMse, TestMseGeo, TestPhMeanLt, ValObjective };
std::vector<double> collect_cell_values(const ExperimentRecord& record,
                                        const std::string& strategy,
                                        OptimizerKind opt, CellField field);

/// CSV/JSON export. formats is a subset of {"csv", "json", "surfaces",
/// "schedules"}; an empty set means {"csv", "json"}.
void export_record(const ExperimentRecord& record, const std::filesystem::path& out_dir,
                   const std::set<std::string>& formats = {});

// ---- appendix studies ----

struct FixedHpMode {
    std::string name;  // "independent", "fixed_ensemble_opt", "fixed_single_network"
    double sigma_in = 0.0;  // NaN for independent (per-network optima)
    double rho = 0.0;
    std::vector<double> test_ph_lt;   // one per network (or test MSE for MSE-only)
    std::vector<double> test_mse_geo;
    std::array<double, 3> ph_pct{};
    std::array<double, 3> mse_pct{};
};
struct FixedHpStudyResult {
    std::vector<FixedHpMode> modes;
    std::uint64_t representative_seed = 0;
};

/// Appendix-E comparison: independent per-network optimization vs (i) the
/// fixed pair minimizing the ensemble geometric-mean validation MSE and (ii)
/// a representative network's optimum reused everywhere. Uses the first
/// configured strategy with BO.
FixedHpStudyResult run_fixed_hp_study(const ExperimentConfig& cfg,
                                      const ExperimentRecord* base = nullptr,
                                      bool include_mode_i = true);

enum class SweepAxis { NEnsemble, NTestStarts };
struct ConvergenceSweepResult {
    SweepAxis axis;
    std::vector<int> sizes;
    std::vector<std::array<double, 3>> percentiles;  // 25/50/75
    std::string metric;  // "val_mse" or "test_ph_lt"
};
ConvergenceSweepResult run_convergence_sweep(const ExperimentConfig& cfg,
                                             SweepAxis axis,
                                             const ExperimentRecord* base = nullptr);

struct CostStudyResult {
    Eigen::Index kfv_folds = 0;
    double kfv_solves_per_eval = 0.0;
    double rv_solves_per_eval = 0.0;
    double kfv_seconds = 0.0;
    double rv_seconds = 0.0;
};
/// Appendix-B relative cost: one network, grid search under KFV vs RV.
CostStudyResult run_cost_study(const ExperimentConfig& cfg);

/// Validation and test log10(MSE) surfaces on an n x n lattice for one
/// representative network, written as CSV (the Fig. 4/5-style data).
void run_surface_study(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       int grid_points = 30);

}  // namespace esnlab
