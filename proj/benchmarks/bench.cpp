#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include <nnstd/matrix.hpp>
#include <nnstd/metric.hpp>
#include <nnstd/network.hpp>
#include <nnstd/rng.hpp>
#include <nnstd/settrain.hpp>
#include <nnstd/topology.hpp>

using namespace nnstd;

namespace {

const std::vector<int> kWidths{784, 784, 784, 784, 10};

NetworkTopology topo(double density, std::uint64_t seed) {
  return er_init_density(kWidths, density, seed);
}

void bm_ned(benchmark::State& state) {
  Rng rng(1);
  const int size = static_cast<int>(state.range(0));
  std::vector<int> a, b;
  for (int i = 0; i < size; ++i) {
    a.push_back(static_cast<int>(rng.below(784)));
    b.push_back(static_cast<int>(rng.below(784)));
  }
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  for (auto _ : state)
    benchmark::DoNotOptimize(ned(std::span<const int>(a), std::span<const int>(b)));
}
BENCHMARK(bm_ned)->Arg(8)->Arg(64);

void bm_solve_assignment(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(2);
  Matrix c(n, n);
  for (double& v : c.data) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(c));
}
BENCHMARK(bm_solve_assignment)->Arg(64)->Arg(256)->Arg(784)->Unit(benchmark::kMillisecond);

void bm_compare_networks(benchmark::State& state) {
  const double density = static_cast<double>(state.range(0)) / 1000.0;
  const auto a = topo(density, 3);
  const auto b = topo(density, 4);
  for (auto _ : state) benchmark::DoNotOptimize(compare_networks(a, b).nnstd);
}
BENCHMARK(bm_compare_networks)->Arg(6)->Arg(50)->Unit(benchmark::kMillisecond);

SparseNet make_net(double density) { return init_weights(topo(density, 5), 6); }

Matrix batch(int rows) {
  Rng rng(7);
  Matrix x(rows, kWidths.front());
  for (double& v : x.data) v = rng.uniform();
  return x;
}

void bm_forward(benchmark::State& state) {
  const auto net = make_net(0.006);
  const auto x = batch(128);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x).logits()(0, 0));
}
BENCHMARK(bm_forward)->Unit(benchmark::kMillisecond);

void bm_backward(benchmark::State& state) {
  const auto net = make_net(0.006);
  const auto x = batch(128);
  std::vector<int> y(128);
  Rng rng(8);
  for (int& v : y) v = static_cast<int>(rng.below(10));
  for (auto _ : state) {
    auto [loss, g] = loss_and_gradients(net, x, y);
    benchmark::DoNotOptimize(loss);
    benchmark::DoNotOptimize(g.weights[0][0]);
  }
}
BENCHMARK(bm_backward)->Unit(benchmark::kMillisecond);

void bm_prune_and_regrow(benchmark::State& state) {
  const auto net = make_net(0.006);
  SetConfig sc;
  std::uint64_t seed = 9;
  for (auto _ : state) {
    auto rw = prune_and_regrow(net, sc, seed++);
    benchmark::DoNotOptimize(rw.net.topology.edge_count());
  }
}
BENCHMARK(bm_prune_and_regrow)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
