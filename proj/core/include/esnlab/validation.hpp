#pragma once

#include <optional>
#include <string>
#include <vector>

#include "esnlab/dynamics.hpp"
#include "esnlab/knowledge.hpp"
#include "esnlab/reservoir.hpp"

namespace esnlab {

enum class Strategy { SSV, WFV, KFV, RV };

std::string to_string(Strategy s);

struct IndexRange {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;  // exclusive
    Eigen::Index size() const { return end - begin; }
};

/// One validation fold. `washout` is the data consumed to initialize the
/// closed-loop run and always immediately precedes `val` (truncated when the
/// dataset start is too close). Training teacher-forces each `train` range
/// with up to one Lyapunov time of preceding data as washout.
struct Fold {
    IndexRange washout;
    std::vector<IndexRange> train;
    IndexRange val;
    Eigen::Index val_shift_applied = 0;  // nonzero when val was pushed off index 0
};

struct ScheduleConfig {
    Eigen::Index v_steps = 0;
    Eigen::Index train_steps = 0;  // SSV / WFV only
    Eigen::Index offset = -1;      // SSV leading washout; -1 = one Lyapunov time
    std::optional<Eigen::Index> custom_shift;  // WFV_c* reconstruction hook
};

struct FoldSchedule {
    Strategy strategy = Strategy::SSV;
    bool chaotic = false;
    std::vector<Fold> folds;
    Eigen::Index v_steps = 0;
    Eigen::Index shift_steps = 0;
    Eigen::Index span_steps = 0;    // the dataset span "n" the schedule covers
    Eigen::Index washout_steps = 0; // 1 LT in steps

    Eigen::Index n_folds() const { return static_cast<Eigen::Index>(folds.size()); }
};

/// Fold construction per strategy:
///   SSV  - one fold, washout | train | val consecutive in time;
///   WFV  - train+val window of fixed size slid forward by shift;
///   KFV  - val tiles the span after an initial (n-v) mod shift offset,
///          training on everything outside val;
///   RV   - same val tiling as KFV, training once on the whole span.
/// Regular versions shift by v_steps, chaotic versions by one Lyapunov time.
FoldSchedule build_schedule(Strategy strategy, bool chaotic,
                            const TimeSeriesDataset& ds, const ScheduleConfig& cfg);

/// JSON dump of a schedule with ranges in both steps and LT units.
std::string schedule_to_json(const FoldSchedule& schedule, const TimeSeriesDataset& ds);

struct EvalCounters {
    long objective_evals = 0;
    long ridge_solves = 0;
    long state_pass_steps = 0;
    long closed_loop_steps = 0;
};

/// Validation objective: mean over folds of log10 MSE between the closed-loop
/// prediction and the data on the val interval, floored at -16 and capped at
/// +6 (diverged rollouts score the cap, never throw). Reservoir states are
/// harvested from a single teacher-forced pass over the span and sliced per
/// fold; RV trains the readout once per call, the other strategies per fold.
double evaluate_objective(double sigma_in, double rho, const EsnHyperparams& fixed_hp,
                          const ReservoirMatrices& mats, const FoldSchedule& schedule,
                          const TimeSeriesDataset& ds,
                          const KnowledgeFn* knowledge = nullptr,
                          EvalCounters* counters = nullptr);

/// Closed-loop forecast of `n_steps` rows starting at data row `start`,
/// initialized by teacher-forcing the preceding Lyapunov time of data.
Eigen::MatrixXd forecast_interval(const ReservoirMatrices& mats,
                                  const EsnHyperparams& hp,
                                  const TimeSeriesDataset& ds, Eigen::Index start,
                                  Eigen::Index n_steps,
                                  const KnowledgeFn* knowledge = nullptr);

/// Readout trained on the whole span (washout + training + validation data),
/// as used for test-set evaluation.
Eigen::MatrixXd train_on_span(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                              const TimeSeriesDataset& ds,
                              const KnowledgeFn* knowledge = nullptr,
                              EvalCounters* counters = nullptr);

constexpr double kLogMseFloor = -16.0;
constexpr double kLogMseCap = 6.0;

}  // namespace esnlab
