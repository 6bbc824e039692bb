// Serial reference vs OpenMP path for the three replicate loops.
// Set OMP_NUM_THREADS to control the parallel width.

#include "trialcea/cea.hpp"
#include "trialcea/comparators.hpp"
#include "trialcea/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace trialcea;

namespace {

SimConfig config(int n) {
    SimConfig c;
    c.n_per_arm = n;
    c.mean_utility = {std::vector<double>{0.67, 0.73, 0.73}, {0.67, 0.75, 0.78}};
    c.mean_cost = {std::vector<double>{500, 1400, 2100}, {500, 1250, 2750}};
    Eigen::MatrixXd R(3, 3);
    R << 1, .6, .5, .6, 1, .7, .5, .7, 1;
    const Eigen::Vector3d su(0.2, 0.2, 0.2), sc(400, 1200, 1800);
    c.cov_utility = su.asDiagonal() * R * su.asDiagonal();
    c.cov_cost = sc.asDiagonal() * R * sc.asDiagonal();
    c.cross_correlation = -0.45;
    mechanism::MarBaseline mb;
    mb.utility = {{-1.25, -1.25}, {0.0, -1.0}, 0.67, 0.2};
    mb.cost = {{-1.25, -1.25}, {0.0, 1.0}, 500, 400};
    c.mechanism = mb;
    c.seed = 2025;
    return c;
}

const TrialDataset& trial() {
    static const TrialDataset d = [] {
        const auto c = config(110);
        return apply_mechanism(gen_trial(c).data, c.mechanism, 2026);
    }();
    return d;
}

Execution policy(const benchmark::State& state) { return state.range(0) ? Execution::Parallel : Execution::Serial; }

void BM_Bootstrap(benchmark::State& state) {
    const auto w = qaly_weights(trial().visit_times);
    MmrmSpec u, c;
    c.outcome = Outcome::Cost;
    BootstrapOptions o;
    o.execution = policy(state);
    for (auto _ : state) benchmark::DoNotOptimize(bootstrap_cea(trial(), u, c, w, 200, 7, o));
    state.SetItemsProcessed(state.iterations() * 200);
}

void BM_MiImpute(benchmark::State& state) {
    MiOptions o;
    o.execution = policy(state);
    for (auto _ : state) benchmark::DoNotOptimize(mi_impute(trial(), 50, 7, o));
    state.SetItemsProcessed(state.iterations() * 50);
}

void BM_BiasStudy(benchmark::State& state) {
    StudyOptions o;
    o.execution = policy(state);
    o.mi_imputations = 5;
    const auto c = config(100);
    for (auto _ : state) benchmark::DoNotOptimize(bias_study(c, 100, o));
    state.SetItemsProcessed(state.iterations() * 100);
}

}  // namespace

// arg 0 = serial reference, 1 = OpenMP
BENCHMARK(BM_Bootstrap)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MiImpute)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BiasStudy)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
