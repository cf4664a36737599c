// OpenMP kernels against their serial reference loops.
// Arg 0 selects the implementation (0 = serial, 1 = OpenMP); the remaining
// args are problem sizes. Shapes start at the training workload (batch 32,
// 23 -> 64 -> 32 -> 12) and grow past the parallel cutoff.

#include <benchmark/benchmark.h>

#include <vector>

#include "fedsim/kernels.hpp"
#include "fedsim/rng.hpp"

namespace {

using fedsim::Matrix;
namespace kernels = fedsim::kernels;

Matrix filled(size_t rows, size_t cols, fedsim::Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_AffineForward(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const auto rows = static_cast<size_t>(state.range(1));
  const auto in = static_cast<size_t>(state.range(2));
  const auto out = static_cast<size_t>(state.range(3));
  fedsim::Rng rng(1);
  const Matrix x = filled(rows, in, rng);
  const Matrix w = filled(out, in, rng);
  const std::vector<double> bias(out, 0.1);
  Matrix z(rows, out);
  for (auto _ : state) {
    if (parallel) {
      kernels::affine_forward(x, w, bias, z);
    } else {
      kernels::serial::affine_forward(x, w, bias, z);
    }
    benchmark::DoNotOptimize(z.values().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * in * out);
}

void BM_WeightGradients(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const auto rows = static_cast<size_t>(state.range(1));
  const auto in = static_cast<size_t>(state.range(2));
  const auto out = static_cast<size_t>(state.range(3));
  fedsim::Rng rng(2);
  const Matrix dz = filled(rows, out, rng);
  const Matrix a = filled(rows, in, rng);
  Matrix dw(out, in);
  std::vector<double> db(out);
  for (auto _ : state) {
    if (parallel) {
      kernels::weight_gradients(dz, a, dw, db);
    } else {
      kernels::serial::weight_gradients(dz, a, dw, db);
    }
    benchmark::DoNotOptimize(dw.values().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * in * out);
}

void BM_InputGradients(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const auto rows = static_cast<size_t>(state.range(1));
  const auto in = static_cast<size_t>(state.range(2));
  const auto out = static_cast<size_t>(state.range(3));
  fedsim::Rng rng(3);
  const Matrix dz = filled(rows, out, rng);
  const Matrix w = filled(out, in, rng);
  Matrix da(rows, in);
  for (auto _ : state) {
    if (parallel) {
      kernels::input_gradients(dz, w, da);
    } else {
      kernels::serial::input_gradients(dz, w, da);
    }
    benchmark::DoNotOptimize(da.values().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * in * out);
}

// Merging t client models of `len` parameters.
void BM_WeightedMean(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const auto clients = static_cast<size_t>(state.range(1));
  const auto len = static_cast<size_t>(state.range(2));
  fedsim::Rng rng(4);
  std::vector<std::vector<double>> flats(clients, std::vector<double>(len));
  for (auto& f : flats) {
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
  }
  const std::vector<std::span<const double>> views(flats.begin(), flats.end());
  std::vector<double> out(len);
  for (auto _ : state) {
    if (parallel) {
      kernels::weighted_mean(views, {}, out);
    } else {
      kernels::serial::weighted_mean(views, {}, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * clients * len);
}

void BM_RingAccumulate(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const auto len = static_cast<size_t>(state.range(1));
  fedsim::Rng rng(5);
  std::vector<uint64_t> dst(len), src(len);
  for (uint64_t& v : src) v = rng.next_u64();
  for (auto _ : state) {
    if (parallel) {
      kernels::ring_accumulate(dst, src);
    } else {
      kernels::serial::ring_accumulate(dst, src);
    }
    benchmark::DoNotOptimize(dst.data());
  }
  state.SetItemsProcessed(state.iterations() * len);
}

void both(benchmark::internal::Benchmark* b,
          const std::vector<std::vector<int64_t>>& shapes) {
  for (int64_t impl : {0, 1}) {
    for (auto shape : shapes) {
      shape.insert(shape.begin(), impl);
      b->Args(shape);
    }
  }
}

BENCHMARK(BM_AffineForward)->Apply([](auto* b) {
  both(b, {{32, 23, 64}, {32, 64, 32}, {1200, 23, 64}, {4096, 256, 256}});
});
BENCHMARK(BM_WeightGradients)->Apply([](auto* b) {
  both(b, {{32, 23, 64}, {32, 64, 32}, {4096, 256, 256}});
});
BENCHMARK(BM_InputGradients)->Apply([](auto* b) {
  both(b, {{32, 64, 32}, {4096, 256, 256}});
});
// 4 012 parameters for the default 23-64-32-12 network.
BENCHMARK(BM_WeightedMean)->Apply([](auto* b) {
  both(b, {{3, 4012}, {30, 4012}, {30, 1 << 20}});
});
BENCHMARK(BM_RingAccumulate)->Apply([](auto* b) {
  both(b, {{4012}, {1 << 22}});
});

}  // namespace

BENCHMARK_MAIN();
