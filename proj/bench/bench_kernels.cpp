// Serial reference kernels against their OpenMP variants on Garnet MDPs of
// increasing size. Run with OMP_NUM_THREADS set to the core count.

#include <benchmark/benchmark.h>

#include "pic/kernels.hpp"
#include "pic/npi.hpp"

namespace {

using namespace pic;

struct Problem {
  MdpSpec spec;
  AugmentedTabularPolicy policy;
  std::vector<double> v_next;
  std::vector<double> w;
  std::vector<double> v;
};

Problem make_problem(std::size_t n_states) {
  const std::size_t A = 5;
  Problem p;
  p.spec = garnet(n_states, A, std::min<std::size_t>(n_states, 10), 0.0, 7);
  Rng rng(1);
  MuTable mu = MuTable::zeros(n_states, A);
  for (auto& m : mu.mu) m = 0.5 * uniform01(rng);
  p.policy = make_mixed_policy(TabularPolicy::uniform(n_states, A), mu);
  p.v_next.resize(n_states * (A + 1));
  for (auto& x : p.v_next) x = uniform01(rng);
  p.w.resize(n_states * A);
  p.v.resize(n_states * (A + 1));
  return p;
}

template <bool Parallel>
void BM_Backup(benchmark::State& state) {
  auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  const kernels::NextValueLayout layout{p.spec.n_actions + 1, true};
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::backup_omp(p.spec, p.v_next, layout, 0.9, 1.0, p.w);
    else
      kernels::backup_serial(p.spec, p.v_next, layout, 0.9, 1.0, p.w);
    benchmark::DoNotOptimize(p.w.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(p.w.size()));
}

template <bool Parallel>
void BM_Expectation(benchmark::State& state) {
  auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  const std::size_t S = p.spec.n_states, A = p.spec.n_actions;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::expectation_omp(p.policy.probs, p.w, S, A, A + 1, {0.1, false}, p.v);
    else
      kernels::expectation_serial(p.policy.probs, p.w, S, A, A + 1, {0.1, false}, p.v);
    benchmark::DoNotOptimize(p.v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(p.v.size()));
}

void BM_Evaluation(benchmark::State& state) {
  auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  EvalOptions opts;
  opts.parallel = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(exact_policy_evaluation(p.spec, p.policy, 0.1, opts).v.data());
}

}  // namespace

BENCHMARK(BM_Backup<false>)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK(BM_Backup<true>)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK(BM_Expectation<false>)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK(BM_Expectation<true>)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK(BM_Evaluation)->ArgsProduct({{256, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
