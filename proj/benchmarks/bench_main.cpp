#include "emaxbr/cumulants.hpp"
#include "emaxbr/data_io.hpp"
#include "emaxbr/estimators.hpp"
#include "emaxbr/inference.hpp"
#include "emaxbr/simharness.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <string>

using namespace emaxbr;

namespace {

const ObservationSet& turandot() {
    static const ObservationSet d = read_data_csv(std::string(EMAXBR_DATA_DIR) + "/turandot_4arm.csv");
    return d;
}

SimStudy study(int n_total, int n_reps, EstimatorKind kind) {
    SimStudy s;
    s.doses = {0, 7.5, 22.5, 75, 225};
    s.n_total = n_total;
    s.truth = {-2.197, 3.583, std::log(7.5)};
    s.n_reps = n_reps;
    s.estimators = {kind};
    s.seed = 20240501;
    return s;
}

const EmaxParams kAt{-3.4, 2.0, 1.2};

}  // namespace

static void BM_LikelihoodParts(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(likelihood_parts(kAt, turandot()));
}
BENCHMARK(BM_LikelihoodParts);

static void BM_Cumulants(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cumulants(kAt, turandot()));
}
BENCHMARK(BM_Cumulants);

static void BM_PenalizedScore(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(penalized_score(kAt, turandot()));
}
BENCHMARK(BM_PenalizedScore);

static void BM_FitTurandot(benchmark::State& state) {
    const auto kind = static_cast<EstimatorKind>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(fit(kind, turandot()));
    state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_FitTurandot)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

static void BM_FitSimulatedN50(benchmark::State& state) {
    const auto kind = static_cast<EstimatorKind>(state.range(0));
    const SimStudy s = study(50, 64, kind);
    std::uint64_t rep = 0;
    for (auto _ : state) benchmark::DoNotOptimize(fit(kind, generate_dataset(s, rep++ % 64)));
    state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_FitSimulatedN50)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

static void BM_Bootstrap(benchmark::State& state) {
    const std::vector<double> doses{0, 7.5, 22.5, 75};
    for (auto _ : state)
        benchmark::DoNotOptimize(bootstrap_bands(turandot(), EstimatorKind::MPLE, doses, 200, 1, SolverConfig{}));
}
BENCHMARK(BM_Bootstrap)->Unit(benchmark::kMillisecond);

static void BM_RunStudy(benchmark::State& state) {
    const SimStudy s = study(static_cast<int>(state.range(0)), 100, EstimatorKind::MPLE);
    for (auto _ : state) benchmark::DoNotOptimize(run_study(s, static_cast<std::size_t>(state.range(1))));
    state.SetItemsProcessed(state.iterations() * s.n_reps);
}
BENCHMARK(BM_RunStudy)->Args({50, 1})->Args({200, 1})->Args({200, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
