#include "esnlab/validation.hpp"

#include <cmath>
#include <sstream>

#include "esnlab/metrics.hpp"
#include "nlohmann/json.hpp"

namespace esnlab {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::SSV: return "ssv";
        case Strategy::WFV: return "wfv";
        case Strategy::KFV: return "kfv";
        case Strategy::RV: return "rv";
    }
    return "?";
}

namespace {

// Closed-loop washout for a val interval: up to one LT of data immediately
// before it. A val interval at index 0 has no room at all and is pushed to
// start at one LT instead, recorded on the fold.
Fold make_fold_washout(IndexRange val, Eigen::Index w, Eigen::Index span) {
    Fold fold;
    fold.val = val;
    if (val.begin == 0) {
        fold.val_shift_applied = w;
        fold.val = {w, w + val.size()};
        if (fold.val.end > span)
            throw DatasetTooShort("cannot shift the first val interval to fit washout");
    }
    const Eigen::Index ws = std::max<Eigen::Index>(fold.val.begin - w, 0);
    fold.washout = {ws, fold.val.begin};
    return fold;
}

}  // namespace

FoldSchedule build_schedule(Strategy strategy, bool chaotic,
                            const TimeSeriesDataset& ds, const ScheduleConfig& cfg) {
    const Eigen::Index n = ds.span_steps;
    const Eigen::Index w = ds.steps_per_lt;
    const Eigen::Index v = cfg.v_steps;
    if (v < 1) throw InvalidArgument("v_steps must be >= 1");
    if (n > ds.n_steps()) throw DatasetTooShort("span exceeds the dataset");

    FoldSchedule sched;
    sched.strategy = strategy;
    sched.chaotic = chaotic;
    sched.v_steps = v;
    sched.span_steps = n;
    sched.washout_steps = w;
    sched.shift_steps = chaotic ? w : v;
    if (cfg.custom_shift) sched.shift_steps = *cfg.custom_shift;
    const Eigen::Index shift = sched.shift_steps;
    if (shift < 1) throw InvalidArgument("shift must be >= 1");

    switch (strategy) {
        case Strategy::SSV: {
            const Eigen::Index offset = cfg.offset >= 0 ? cfg.offset : w;
            const Eigen::Index train_end = offset + cfg.train_steps;
            if (cfg.train_steps < 2) throw InvalidArgument("SSV needs train_steps >= 2");
            if (train_end + v > n)
                throw DatasetTooShort("SSV needs " + std::to_string(train_end + v) +
                                      " steps, span has " + std::to_string(n));
            Fold fold = make_fold_washout({train_end, train_end + v}, w, n);
            fold.train = {{offset, train_end}};
            sched.folds.push_back(fold);
            break;
        }
        case Strategy::WFV: {
            const Eigen::Index m = cfg.train_steps + v;
            if (cfg.train_steps < 2) throw InvalidArgument("WFV needs train_steps >= 2");
            if (m > n)
                throw DatasetTooShort("WFV window needs " + std::to_string(m) +
                                      " steps, span has " + std::to_string(n));
            const Eigen::Index k = (n - m) / shift + 1;
            for (Eigen::Index i = 0; i < k; ++i) {
                const Eigen::Index base = i * shift;
                Fold fold =
                    make_fold_washout({base + cfg.train_steps, base + m}, w, n);
                fold.train = {{base, base + cfg.train_steps}};
                sched.folds.push_back(fold);
            }
            break;
        }
        case Strategy::KFV:
        case Strategy::RV: {
            if (v > n) throw DatasetTooShort("val interval exceeds the span");
            // Remainder placed at the start: an initial b*v offset with
            // 0 <= b < 1 so an integer number of intervals fits.
            const Eigen::Index offset = (n - v) % shift;
            const Eigen::Index k = (n - v - offset) / shift + 1;
            for (Eigen::Index i = 0; i < k; ++i) {
                const Eigen::Index s = offset + i * shift;
                Fold fold = make_fold_washout({s, s + v}, w, n);
                if (strategy == Strategy::RV) {
                    fold.train = {{0, n}};
                } else {
                    if (fold.val.begin > 0) fold.train.push_back({0, fold.val.begin});
                    if (fold.val.end < n) fold.train.push_back({fold.val.end, n});
                }
                sched.folds.push_back(fold);
            }
            break;
        }
    }
    if (sched.folds.empty()) throw DatasetTooShort("schedule has no folds");
    for (const Fold& f : sched.folds) {
        if (f.val.begin < 1 || f.val.end > n)
            throw DatasetTooShort("val interval outside the usable span");
    }
    return sched;
}

std::string schedule_to_json(const FoldSchedule& schedule, const TimeSeriesDataset& ds) {
    const double lt = static_cast<double>(ds.steps_per_lt);
    auto range_json = [&](const IndexRange& r) {
        return nlohmann::json{{"begin", r.begin},
                              {"end", r.end},
                              {"begin_lt", static_cast<double>(r.begin) / lt},
                              {"end_lt", static_cast<double>(r.end) / lt}};
    };
    nlohmann::json j;
    j["strategy"] = to_string(schedule.strategy);
    j["chaotic"] = schedule.chaotic;
    j["v_steps"] = schedule.v_steps;
    j["shift_steps"] = schedule.shift_steps;
    j["span_steps"] = schedule.span_steps;
    j["washout_steps"] = schedule.washout_steps;
    j["folds"] = nlohmann::json::array();
    for (const Fold& f : schedule.folds) {
        nlohmann::json fj;
        fj["washout"] = range_json(f.washout);
        fj["val"] = range_json(f.val);
        fj["val_shift_applied"] = f.val_shift_applied;
        fj["train"] = nlohmann::json::array();
        for (const IndexRange& r : f.train) fj["train"].push_back(range_json(r));
        j["folds"].push_back(fj);
    }
    return j.dump(2);
}

namespace {

struct GramPair {
    Eigen::MatrixXd G;  // R R^T over the harvested columns
    Eigen::MatrixXd B;  // R U_d^T
};

// Harvested columns for a train range [ta, tb): pass columns (= input rows)
// [max(ta, w), tb - 1), each paired with the next data row as target.
struct HarvestWindow {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    Eigen::Index size() const { return std::max<Eigen::Index>(end - begin, 0); }
};

HarvestWindow harvest_window(const IndexRange& range, Eigen::Index w,
                             Eigen::Index pass_len) {
    return {std::min(std::max(range.begin, w), pass_len),
            std::min(range.end - 1, pass_len)};
}

void accumulate_gram(const Eigen::MatrixXd& rhat_pass, const Eigen::MatrixXd& u,
                     const HarvestWindow& win, double sign, GramPair& gp) {
    if (win.size() <= 0) return;
    const auto cols = rhat_pass.middleCols(win.begin, win.size());
    const auto targets = u.middleRows(win.begin + 1, win.size());
    gp.G.selfadjointView<Eigen::Lower>().rankUpdate(cols, sign);
    gp.B.noalias() += sign * (cols * targets);
}

double clamp_log10_mse(double m) {
    if (!std::isfinite(m)) return kLogMseCap;
    const double lm = std::log10(std::max(m, 0.0));
    if (!(lm > kLogMseFloor)) return kLogMseFloor;
    return std::min(lm, kLogMseCap);
}

// Closed-loop initialization: teacher-force the washout range from the zero
// state, leaving the last washout row as the loop's seed input.
ReservoirState washout_state(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                             const TimeSeriesDataset& ds, const IndexRange& washout,
                             const KnowledgeHook& hook) {
    if (washout.size() < 2) return zero_state(mats, hook.out_dim);
    const auto open =
        run_open_loop(mats, hp, ds.u.middleRows(washout.begin, washout.size() - 1),
                      washout.size() - 2, hook);
    return open.final_state;
}

}  // namespace

double evaluate_objective(double sigma_in, double rho, const EsnHyperparams& fixed_hp,
                          const ReservoirMatrices& mats, const FoldSchedule& schedule,
                          const TimeSeriesDataset& ds, const KnowledgeFn* knowledge,
                          EvalCounters* counters) {
    EsnHyperparams hp = fixed_hp;
    hp.sigma_in = sigma_in;
    hp.rho = rho;

    const Eigen::Index span = schedule.span_steps;
    const Eigen::Index w = schedule.washout_steps;
    const Eigen::Index pass_len = span - 1;  // last input's target is row span-1
    const KnowledgeHook hook = knowledge ? knowledge->hook() : KnowledgeHook{};
    const Eigen::Index n_rhat = mats.n_rhat(hook.out_dim);

    const Eigen::MatrixXd rhat =
        run_state_pass(mats, hp, ds.u.topRows(pass_len), hook);
    if (counters) {
        ++counters->objective_evals;
        counters->state_pass_steps += pass_len;
    }

    auto solve_ridge = [&](GramPair& gp) {
        gp.G.triangularView<Eigen::StrictlyUpper>() =
            gp.G.transpose().triangularView<Eigen::StrictlyUpper>();
        if (counters) ++counters->ridge_solves;
        return train_ridge_gram(std::move(gp.G), gp.B, hp.beta_tik);
    };

    // RV trains once on the whole span and reuses the readout per fold.
    Eigen::MatrixXd w_out_rv;
    if (schedule.strategy == Strategy::RV) {
        GramPair gp;
        gp.G = Eigen::MatrixXd::Zero(n_rhat, n_rhat);
        gp.B = Eigen::MatrixXd::Zero(n_rhat, ds.n_u());
        accumulate_gram(rhat, ds.u, harvest_window({0, span}, w, pass_len), 1.0, gp);
        w_out_rv = solve_ridge(gp);
    }

    ReservoirMatrices run_mats = mats;  // shares sparse storage, swaps w_out
    double log_mse_sum = 0.0;

    for (const Fold& fold : schedule.folds) {
        if (schedule.strategy == Strategy::RV) {
            run_mats.w_out = w_out_rv;
        } else {
            GramPair gp;
            gp.G = Eigen::MatrixXd::Zero(n_rhat, n_rhat);
            gp.B = Eigen::MatrixXd::Zero(n_rhat, ds.n_u());
            for (const IndexRange& r : fold.train)
                accumulate_gram(rhat, ds.u, harvest_window(r, w, pass_len), 1.0, gp);
            run_mats.w_out = solve_ridge(gp);
        }

        const Eigen::Index vs = fold.val.begin;
        const ReservoirState state = washout_state(mats, hp, ds, fold.washout, hook);
        const Eigen::MatrixXd preds =
            run_closed_loop(run_mats, hp, state, ds.u.row(vs - 1).transpose(),
                            fold.val.size(), hook);
        if (counters) counters->closed_loop_steps += fold.val.size();

        const double fold_mse = mse(preds, ds.u.middleRows(vs, fold.val.size()));
        log_mse_sum += clamp_log10_mse(fold_mse);
    }

    return log_mse_sum / static_cast<double>(schedule.folds.size());
}

Eigen::MatrixXd train_on_span(const ReservoirMatrices& mats, const EsnHyperparams& hp,
                              const TimeSeriesDataset& ds, const KnowledgeFn* knowledge,
                              EvalCounters* counters) {
    const Eigen::Index span = ds.span_steps;
    const Eigen::Index w = ds.steps_per_lt;
    const Eigen::Index pass_len = span - 1;
    const KnowledgeHook hook = knowledge ? knowledge->hook() : KnowledgeHook{};
    const Eigen::Index n_rhat = mats.n_rhat(hook.out_dim);

    const Eigen::MatrixXd rhat =
        run_state_pass(mats, hp, ds.u.topRows(pass_len), hook);
    if (counters) counters->state_pass_steps += pass_len;

    GramPair gp;
    gp.G = Eigen::MatrixXd::Zero(n_rhat, n_rhat);
    gp.B = Eigen::MatrixXd::Zero(n_rhat, ds.n_u());
    accumulate_gram(rhat, ds.u, harvest_window({0, span}, w, pass_len), 1.0, gp);
    gp.G.triangularView<Eigen::StrictlyUpper>() =
        gp.G.transpose().triangularView<Eigen::StrictlyUpper>();
    if (counters) ++counters->ridge_solves;
    return train_ridge_gram(std::move(gp.G), gp.B, hp.beta_tik);
}

Eigen::MatrixXd forecast_interval(const ReservoirMatrices& mats,
                                  const EsnHyperparams& hp,
                                  const TimeSeriesDataset& ds, Eigen::Index start,
                                  Eigen::Index n_steps, const KnowledgeFn* knowledge) {
    const Eigen::Index w = ds.steps_per_lt;
    if (start - w < 0)
        throw SliceTooShort("no washout data before row " + std::to_string(start));
    if (start + n_steps > ds.n_steps())
        throw DatasetTooShort("forecast interval extends past the dataset");

    const KnowledgeHook hook = knowledge ? knowledge->hook() : KnowledgeHook{};
    // Teacher-force rows [start-w, start-1); row start-1 seeds the loop.
    const ReservoirState state =
        washout_state(mats, hp, ds, {start - w, start}, hook);
    return run_closed_loop(mats, hp, state, ds.u.row(start - 1).transpose(), n_steps,
                           hook);
}

}  // namespace esnlab
