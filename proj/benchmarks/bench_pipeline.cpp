// Microbenchmarks for the hot paths: the LSTM forward/backward passes, ROC
// computation, event-grid assembly, and cohort synthesis. Not wired into
// ctest; run the binary directly.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "icudyn/catalog.hpp"
#include "icudyn/eval.hpp"
#include "icudyn/model.hpp"
#include "icudyn/preprocess.hpp"
#include "icudyn/rng.hpp"
#include "icudyn/synth.hpp"

namespace {

using namespace icudyn;

ModelInput random_input(int input_dim, int steps, std::uint64_t seed) {
    Rng rng(seed);
    ModelInput in;
    in.x = Eigen::MatrixXd::NullaryExpr(input_dim + 1, steps, [&] { return rng.normal(); });
    in.x.row(input_dim).setConstant(12.0);  // horizon row
    in.t_minutes.resize(static_cast<std::size_t>(steps));
    for (int n = 0; n < steps; ++n) in.t_minutes[static_cast<std::size_t>(n)] = 30.0 * n;
    return in;
}

void bm_lstm_forward(benchmark::State& state) {
    const int width = static_cast<int>(state.range(0));
    const int steps = static_cast<int>(state.range(1));
    const int input_dim = 24;
    const auto params = init_params(input_dim + 1, {width, width, width}, 7);
    const auto input = random_input(input_dim, steps, 11);
    for (auto _ : state) {
        auto traj = forward(input, params);
        benchmark::DoNotOptimize(traj.back().risk);
    }
    state.SetItemsProcessed(state.iterations() * steps);
}

void bm_lstm_backward(benchmark::State& state) {
    const int width = static_cast<int>(state.range(0));
    const int steps = static_cast<int>(state.range(1));
    const int input_dim = 24;
    const auto params = init_params(input_dim + 1, {width, width, width}, 7);
    std::vector<LabeledSequence> batch;
    for (int k = 0; k < 8; ++k) {
        LabeledSequence seq;
        seq.input = random_input(input_dim, steps, 100 + static_cast<std::uint64_t>(k));
        seq.label = k % 2;
        batch.push_back(std::move(seq));
    }
    ModelParams grads;
    for (auto _ : state) {
        const double loss = loss_and_grads(batch, params, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()) * steps);
}

void bm_roc_auc(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3);
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.1 ? 1 : 0;
        scores[static_cast<std::size_t>(i)] =
            rng.normal(labels[static_cast<std::size_t>(i)] ? 0.8 : 0.0, 1.0);
    }
    labels[0] = 0;
    labels[1] = 1;  // guarantee both classes
    for (auto _ : state) {
        auto roc = roc_auc(scores, labels);
        benchmark::DoNotOptimize(roc.auc);
    }
    state.SetItemsProcessed(state.iterations() * n);
}

VariableCatalog bench_catalog() {
    VariableCatalog catalog;
    for (int j = 0; j < 20; ++j) {
        const std::string name = "var" + std::to_string(j);
        catalog.add_entry(name, {name, VariableKind::Physiologic, 1.0, 0.0});
    }
    catalog.add_entry("drug", {"drug", VariableKind::Drug, 1.0, 0.0});
    return catalog;
}

void bm_build_event_grid(benchmark::State& state) {
    const int n_events = static_cast<int>(state.range(0));
    const auto catalog = bench_catalog();
    Rng rng(5);
    EventList events;
    for (int i = 0; i < n_events; ++i) {
        MeasurementEvent ev;
        ev.patient_id = "p1";
        ev.encounter_id = "p1-E1";
        ev.variable = rng.uniform() < 0.05 ? "drug" : "var" + std::to_string(rng.uniform_int(20));
        ev.t_minutes = static_cast<double>(rng.uniform_int(2880));
        ev.value = rng.normal();
        events.push_back(std::move(ev));
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.t_minutes < b.t_minutes; });
    for (auto _ : state) {
        auto matrix = build_event_grid(events, catalog, true);
        benchmark::DoNotOptimize(matrix.values.sum());
    }
    state.SetItemsProcessed(state.iterations() * n_events);
}

void bm_generate_cohort(benchmark::State& state) {
    SynthConfig config;
    config.n_patients = static_cast<int>(state.range(0));
    config.max_encounters_per_patient = 2;
    config.n_physiologic = 5;
    config.n_lab = 3;
    config.n_drug = 2;
    config.n_intervention = 1;
    config.latent_dim = 5;
    config.duration_min_hours = 18.0;
    config.duration_max_hours = 30.0;
    config.target_mortality = 0.0;  // skip calibration; measure raw generation
    config.seed = 17;
    for (auto _ : state) {
        auto cohort = generate_cohort(config);
        benchmark::DoNotOptimize(cohort.encounters.size());
    }
}

}  // namespace

BENCHMARK(bm_lstm_forward)->Args({16, 64})->Args({64, 64})->Args({64, 256})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_lstm_backward)->Args({16, 64})->Args({64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_roc_auc)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_build_event_grid)->Arg(200)->Arg(2000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_generate_cohort)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
