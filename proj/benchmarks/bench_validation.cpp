#include <benchmark/benchmark.h>

#include "esnlab/harness.hpp"

using namespace esnlab;

// Objective-evaluation cost per strategy; the RV-vs-KFV gap here is the
// Appendix-B ordering (RV trains the readout once per point, KFV per fold).
static void BM_ObjectiveEval(benchmark::State& state, const char* strategy_name) {
    ExperimentConfig cfg = ExperimentConfig::defaults_for(DatasetVariant::LorenzShort);
    cfg.cache_dir = "bench_cache";
    const TimeSeriesDataset ds = make_dataset(cfg.variant, 0, {"bench_cache"});
    const StrategySpec spec = StrategySpec::parse(strategy_name);
    const FoldSchedule schedule = schedule_for(spec, ds, cfg);

    EsnHyperparams hp = cfg.fixed_hp;
    hp.seed = 3;
    const ReservoirMatrices mats = init_matrices(hp, ds.n_u());

    double sigma = 1.0;
    for (auto _ : state) {
        sigma += 1e-9;  // defeat any caching, keep the eval honest
        benchmark::DoNotOptimize(
            evaluate_objective(sigma, 0.7, hp, mats, schedule, ds));
    }
}
BENCHMARK_CAPTURE(BM_ObjectiveEval, ssv, "ssv");
BENCHMARK_CAPTURE(BM_ObjectiveEval, kfv, "kfv");
BENCHMARK_CAPTURE(BM_ObjectiveEval, kfv_c, "kfv_c");
BENCHMARK_CAPTURE(BM_ObjectiveEval, rv, "rv");
BENCHMARK_CAPTURE(BM_ObjectiveEval, rv_c, "rv_c");
