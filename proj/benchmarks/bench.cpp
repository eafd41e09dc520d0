// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "pcecal/calibrators.hpp"
#include "pcecal/ensemble.hpp"
#include "pcecal/grouping.hpp"
#include "pcecal/metrics.hpp"
#include "pcecal/synthetic.hpp"

namespace {

using namespace pcecal;

SyntheticData make_data(std::size_t n) {
  SyntheticSpec s;
  s.n_validation = s.n_holdout = s.n_test = n;
  return generate_synthetic(s);
}

void BM_SoftmaxRows(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(softmax_rows(d.test.logits, 1.5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SoftmaxRows)->Arg(1000)->Arg(10000);

void BM_TopLabelEce(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  const Matrix p = softmax_rows(d.test.logits);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ece(p, *d.test.labels, {15, BinMode::kEqualWidth}, EceVariant::kTopLabel));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TopLabelEce)->Arg(1000)->Arg(10000);

void BM_FitTemperature(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_temperature(d.holdout.logits, *d.holdout.labels));
}
BENCHMARK(BM_FitTemperature)->Arg(1000)->Arg(10000);

void BM_GcLossAndGradient(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  const GroupingModel m = make_grouping_model(d.validation.features, 2);
  const GroupTemperatures t{{0.3, -0.4}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        gc_ts_loss(m, t, d.validation.features, d.validation.logits, *d.validation.labels, 0.1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GcLossAndGradient)->Arg(1000)->Arg(5000);

void BM_TrainGrouping(benchmark::State& state) {
  const auto d = make_data(5000);
  GcTrainConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(train_grouping(d.validation, cfg));
}
BENCHMARK(BM_TrainGrouping)->Unit(benchmark::kMillisecond);

void BM_FitEnsemble(benchmark::State& state) {
  const auto d = make_data(5000);
  EnsembleConfig cfg;
  cfg.num_partitions = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_ensemble(d.validation, d.holdout, cfg));
}
BENCHMARK(BM_FitEnsemble)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
