#include <benchmark/benchmark.h>

#include "bodygraph/models.hpp"
#include "bodygraph/rng.hpp"
#include "bodygraph/train.hpp"

using namespace bodygraph;

namespace {

// Graph shaped like a decimated body mesh at the given face budget:
// V = F/2 + 2, E = 3F/2.
RegressionGraph mesh_like_graph(int faces, std::uint64_t seed) {
  Rng rng(seed);
  const int n = faces / 2 + 2;
  RegressionGraph g;
  g.x.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) g.x(i, j) = rng.normal();
  const int target_edges = 3 * faces / 2;
  for (int e = 0; e < target_edges; ++e) {
    const auto a = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n)));
    const auto b = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n)));
    if (a != b) g.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.y = {1.0, 2.0};
  g.subject_id = "bench";
  return g;
}

GraphBatch bench_batch(int faces, int graphs) {
  std::vector<RegressionGraph> gs;
  for (int i = 0; i < graphs; ++i) gs.push_back(mesh_like_graph(faces, 100 + i));
  return batch(gs);
}

}  // namespace

static void BM_SageForward(benchmark::State& state) {
  const GraphBatch gb = bench_batch(static_cast<int>(state.range(0)), 16);
  Rng rng(7);
  nn::SageLayer layer(3, 64, nn::Activation::identity, rng);
  const nn::Adjacency adj = nn::Adjacency::build(gb.x.rows(), gb.edges);
  for (auto _ : state) {
    auto out = layer.forward(gb.x, adj);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_SageForward)->Arg(500)->Arg(10000)->Unit(benchmark::kMicrosecond);

static void BM_GnnForwardBackward(benchmark::State& state) {
  const GraphBatch gb = bench_batch(static_cast<int>(state.range(0)), 16);
  nn::GnnModel model(64, 5);
  const ShrinkageCfg loss_cfg;
  for (auto _ : state) {
    const nn::Matrix pred = model.forward(gb, nn::Mode::train);
    auto [loss, grad] = shrinkage_loss(pred, gb.y, loss_cfg);
    benchmark::DoNotOptimize(loss);
    model.backward(grad);
  }
}
BENCHMARK(BM_GnnForwardBackward)->Arg(100)->Arg(500)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_CnnForwardBackward(benchmark::State& state) {
  const std::int64_t h = 133, w = 60;  // 6 mm cohort silhouettes, downsample 2
  nn::CnnModel model(h, w, {16, 32, 64}, 64, 9);
  Rng rng(11);
  nn::ImageBatch images(16, 2, h, w);
  for (std::int64_t i = 0; i < images.data.size(); ++i)
    images.data[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  nn::Matrix target = nn::Matrix::Zero(16, 2);
  const ShrinkageCfg loss_cfg;
  for (auto _ : state) {
    const nn::Matrix pred = model.forward(images, nn::Mode::train);
    auto [loss, grad] = shrinkage_loss(pred, target, loss_cfg);
    benchmark::DoNotOptimize(loss);
    model.backward(grad);
  }
}
BENCHMARK(BM_CnnForwardBackward)->Unit(benchmark::kMillisecond);
