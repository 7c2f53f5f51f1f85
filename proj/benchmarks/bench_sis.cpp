#include <benchmark/benchmark.h>

#include "mfgdelay/belief.hpp"
#include "mfgdelay/config.hpp"
#include "mfgdelay/dp.hpp"
#include "mfgdelay/fixpoint.hpp"
#include "mfgdelay/nplayer.hpp"

using namespace mfgdelay;

namespace {

// Everything is built once from the bundled SIS configuration.
struct Sis {
    Problem problem = load_problem(std::string(MFGDELAY_BENCH_DATA) + "/sis.json");
    SpaceIndex spaces = build_spaces(problem.model);
    std::vector<double> nu0 = initial_measure(problem.model, spaces, problem.initial);
    Policy pi = random_policy(problem.model.T(), spaces.y_size(), spaces.n_u(), 3);
    MeasureFlow flow = propagate(problem.model, spaces, pi, nu0);
    AugmentedMdp mdp = build_mdp(problem.model, spaces, flow_lags(problem.model, spaces, flow, &pi));
};

const Sis& sis() {
    static const Sis s;
    return s;
}

void BM_BeliefMap(benchmark::State& state) {
    const auto& s = sis();
    const auto& nu = s.flow[s.problem.model.T() / 2];
    for (auto _ : state) benchmark::DoNotOptimize(belief_map(s.problem.model, s.spaces, nu, s.pi.slice(0)));
}
BENCHMARK(BM_BeliefMap);

void BM_Propagate(benchmark::State& state) {
    const auto& s = sis();
    for (auto _ : state) benchmark::DoNotOptimize(propagate(s.problem.model, s.spaces, s.pi, s.nu0));
}
BENCHMARK(BM_Propagate)->Unit(benchmark::kMillisecond);

void BM_BuildMdp(benchmark::State& state) {
    const auto& s = sis();
    for (auto _ : state)
        benchmark::DoNotOptimize(build_mdp(s.problem.model, s.spaces, flow_lags(s.problem.model, s.spaces, s.flow, &s.pi)));
}
BENCHMARK(BM_BuildMdp)->Unit(benchmark::kMillisecond);

void BM_SoftBackward(benchmark::State& state) {
    const auto& s = sis();
    const auto ref = Policy::uniform(s.problem.model.T(), s.spaces.y_size(), s.spaces.n_u());
    for (auto _ : state) benchmark::DoNotOptimize(backward_q_regularized(s.mdp, 0.5, ref));
}
BENCHMARK(BM_SoftBackward)->Unit(benchmark::kMicrosecond);

void BM_FixedPointStep(benchmark::State& state) {
    const auto& s = sis();
    const auto ref = Policy::uniform(s.problem.model.T(), s.spaces.y_size(), s.spaces.n_u());
    for (auto _ : state) benchmark::DoNotOptimize(fixed_point_step(s.problem.model, s.spaces, s.flow, 0.5, ref, &s.pi));
}
BENCHMARK(BM_FixedPointStep)->Unit(benchmark::kMillisecond);

void BM_Episode(benchmark::State& state) {
    const auto& s = sis();
    EpisodeConfig cfg;
    cfg.N = static_cast<int>(state.range(0));
    cfg.crowd_policy = &s.pi;
    cfg.deviator_policy = &s.pi;
    cfg.nu0 = s.nu0;
    std::uint64_t e = 0;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_episode(s.problem.model, s.spaces, cfg, e++));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Episode)->Arg(5)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Philox(benchmark::State& state) {
    Philox4x32::Counter c{0, 0, 0, 0};
    for (auto _ : state) {
        c = Philox4x32::block(c, {1, 2});
        benchmark::DoNotOptimize(c);
    }
}
BENCHMARK(BM_Philox);

}  // namespace
BENCHMARK_MAIN();
