#include <benchmark/benchmark.h>

#include "msrlab/budget.hpp"
#include "msrlab/market.hpp"
#include "msrlab/scoring.hpp"
#include "msrlab/ssm.hpp"

using namespace msrlab;

namespace {

void BM_score_brier_k3(benchmark::State& state) {
    BrierRule rule(3);
    Distribution q({0.5, 0.3, 0.2});
    for (auto _ : state) benchmark::DoNotOptimize(score(rule, q));
}
BENCHMARK(BM_score_brier_k3);

void BM_natural_budget_log_k3(benchmark::State& state) {
    FlooredLogRule rule(3);
    Distribution q0({0.5, 0.3, 0.2});
    Distribution q({0.2, 0.5, 0.3});
    for (auto _ : state) benchmark::DoNotOptimize(natural_budget(rule, q0, q));
}
BENCHMARK(BM_natural_budget_log_k3);

void BM_solve_constrained_brier_k3(benchmark::State& state) {
    BrierRule rule(3);
    Distribution q0({0.4, 0.35, 0.25});
    Distribution p({0.1, 0.2, 0.7});
    double b = 0.4 * natural_budget(rule, q0, p);
    for (auto _ : state) benchmark::DoNotOptimize(solve_constrained(rule, p, q0, b));
}
BENCHMARK(BM_solve_constrained_brier_k3)->Unit(benchmark::kMillisecond);

void BM_solve_constrained_brier_k4(benchmark::State& state) {
    BrierRule rule(4);
    Distribution q0({0.3, 0.3, 0.2, 0.2});
    Distribution p({0.1, 0.15, 0.25, 0.5});
    double b = 0.4 * natural_budget(rule, q0, p);
    for (auto _ : state) benchmark::DoNotOptimize(solve_constrained(rule, p, q0, b));
}
BENCHMARK(BM_solve_constrained_brier_k4)->Unit(benchmark::kMillisecond);

void BM_oracle_constrained_brier_k3(benchmark::State& state) {
    BrierRule rule(3);
    Distribution q0({0.4, 0.35, 0.25});
    Distribution p({0.1, 0.2, 0.7});
    double b = 0.4 * natural_budget(rule, q0, p);
    for (auto _ : state) benchmark::DoNotOptimize(oracle_constrained(rule, p, q0, b, 1e-2));
}
BENCHMARK(BM_oracle_constrained_brier_k3)->Unit(benchmark::kMillisecond);

void BM_ssm_trade_sequence(benchmark::State& state) {
    RulePtr rule = make_rule("brier", 3);
    Distribution initial = Distribution::uniform(3);
    Distribution r1({0.6, 0.25, 0.15});
    Distribution r2({0.2, 0.5, 0.3});
    for (auto _ : state) {
        MarketState market = MarketState::create(rule, initial, Mechanism::ssm);
        for (int t = 0; t < 8; ++t) ssm_trade(market, "a", 0.5 + 0.1 * t, t % 2 ? r1 : r2);
        benchmark::DoNotOptimize(market.reference());
    }
}
BENCHMARK(BM_ssm_trade_sequence)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
