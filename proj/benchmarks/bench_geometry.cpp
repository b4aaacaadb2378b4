#include <benchmark/benchmark.h>

#include "bodygraph/decimate.hpp"
#include "bodygraph/marching_cubes.hpp"
#include "bodygraph/registration.hpp"
#include "bodygraph/synthetic.hpp"
#include "bodygraph/volume.hpp"
#include "support/test_shapes.hpp"

using namespace bodygraph;

namespace {

const GeneratedBody& bench_body() {
  static const GeneratedBody body = [] {
    const auto spec = sample_subject_spec(1, 0);
    const std::array<double, 3> spacing{6, 6, 6};
    return generate_synthetic_body(spec, recommended_dims(spacing), spacing, "bench");
  }();
  return body;
}

const TriangleMesh& bench_mesh() {
  static const TriangleMesh mesh = [] {
    const VoxelVolume seg = largest_component(close(bench_body().volume, 2));
    return marching_cubes(seg, 0.5);
  }();
  return mesh;
}

}  // namespace

static void BM_GenerateSyntheticBody(benchmark::State& state) {
  const auto spec = sample_subject_spec(1, 0);
  const std::array<double, 3> spacing{6, 6, 6};
  const auto dims = recommended_dims(spacing);
  for (auto _ : state) {
    auto body = generate_synthetic_body(spec, dims, spacing, "bench");
    benchmark::DoNotOptimize(body.volume.data.data());
  }
}
BENCHMARK(BM_GenerateSyntheticBody)->Unit(benchmark::kMillisecond);

static void BM_MorphologyClose(benchmark::State& state) {
  const VoxelVolume& v = bench_body().volume;
  for (auto _ : state) {
    auto c = close(v, 2);
    benchmark::DoNotOptimize(c.data.data());
  }
}
BENCHMARK(BM_MorphologyClose)->Unit(benchmark::kMillisecond);

static void BM_MarchingCubesSphere(benchmark::State& state) {
  const VoxelVolume ball = testshapes::voxel_ball(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state) {
    auto mesh = marching_cubes(ball, 0.5);
    benchmark::DoNotOptimize(mesh.vertices.data());
  }
}
BENCHMARK(BM_MarchingCubesSphere)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

static void BM_MarchingCubesBody(benchmark::State& state) {
  const VoxelVolume seg = largest_component(close(bench_body().volume, 2));
  for (auto _ : state) {
    auto mesh = marching_cubes(seg, 0.5);
    benchmark::DoNotOptimize(mesh.vertices.data());
  }
}
BENCHMARK(BM_MarchingCubesBody)->Unit(benchmark::kMillisecond);

static void BM_DecimateBody(benchmark::State& state) {
  const TriangleMesh& mesh = bench_mesh();
  for (auto _ : state) {
    auto res = decimate(mesh, static_cast<std::size_t>(state.range(0)));
    benchmark::DoNotOptimize(res.mesh.vertices.data());
  }
  state.counters["input_faces"] = static_cast<double>(mesh.faces.size());
}
BENCHMARK(BM_DecimateBody)->Arg(10000)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_IcpAlign(benchmark::State& state) {
  const TriangleMesh source = decimate(bench_mesh(), 500).mesh;
  RigidTransform t;
  t.rotation = Mat3::rotation_z(0.2);
  t.translation = {15, -10, 5};
  const TriangleMesh target = apply_transform(source, t);
  for (auto _ : state) {
    auto rep = icp(source, target, 50, 1e-9);
    benchmark::DoNotOptimize(rep.rmsd);
  }
}
BENCHMARK(BM_IcpAlign)->Unit(benchmark::kMillisecond);
