#include <benchmark/benchmark.h>

#include "esnlab/reservoir.hpp"
#include "esnlab/rng.hpp"

using namespace esnlab;

namespace {

EsnHyperparams bench_hp(Eigen::Index n_r) {
    EsnHyperparams hp;
    hp.n_r = n_r;
    hp.sparseness = 0.97;
    hp.sigma_in = 1.5;
    hp.rho = 0.9;
    hp.seed = 7;
    return hp;
}

Eigen::MatrixXd random_inputs(Eigen::Index rows, Eigen::Index cols,
                              std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

static void BM_InitMatrices(benchmark::State& state) {
    EsnHyperparams hp = bench_hp(state.range(0));
    for (auto _ : state) {
        hp.seed++;
        benchmark::DoNotOptimize(init_matrices(hp, 3));
    }
}
BENCHMARK(BM_InitMatrices)->Arg(100)->Arg(400);

static void BM_StatePass(benchmark::State& state) {
    const EsnHyperparams hp = bench_hp(100);
    const ReservoirMatrices mats = init_matrices(hp, 3);
    const Eigen::MatrixXd inputs = random_inputs(state.range(0), 3, 11);
    for (auto _ : state)
        benchmark::DoNotOptimize(run_state_pass(mats, hp, inputs));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StatePass)->Arg(1331)->Arg(2663);

static void BM_TrainRidge(benchmark::State& state) {
    const EsnHyperparams hp = bench_hp(100);
    const ReservoirMatrices mats = init_matrices(hp, 3);
    const Eigen::MatrixXd inputs = random_inputs(state.range(0) + 1, 3, 13);
    const auto open = run_open_loop(mats, hp, inputs.topRows(state.range(0)), 0);
    const Eigen::MatrixXd targets = inputs.bottomRows(state.range(0)).transpose();
    for (auto _ : state)
        benchmark::DoNotOptimize(train_ridge(open.R, targets, 1e-11));
}
BENCHMARK(BM_TrainRidge)->Arg(888)->Arg(2663);

static void BM_ClosedLoop(benchmark::State& state) {
    const EsnHyperparams hp = bench_hp(100);
    ReservoirMatrices mats = init_matrices(hp, 3);
    const Eigen::MatrixXd inputs = random_inputs(512, 3, 17);
    const auto open = run_open_loop(mats, hp, inputs.topRows(511), 0);
    mats.w_out = train_ridge(open.R, inputs.bottomRows(511).transpose(), 1e-11);
    const ReservoirState s0 = zero_state(mats);
    for (auto _ : state)
        benchmark::DoNotOptimize(run_closed_loop(
            mats, hp, s0, inputs.row(0).transpose(), state.range(0)));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ClosedLoop)->Arg(333);
