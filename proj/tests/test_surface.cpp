#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bodygraph/decimate.hpp"
#include "bodygraph/marching_cubes.hpp"
#include "bodygraph/mesh.hpp"
#include "bodygraph/mesh_io.hpp"
#include "bodygraph/rng.hpp"
#include "bodygraph/synthetic.hpp"
#include "bodygraph/volume.hpp"
#include "support/test_shapes.hpp"

using namespace bodygraph;

TEST_CASE("validate: tetrahedron") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  m.faces = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
  const MeshStats s = validate(m);
  CHECK(s.v_count == 4);
  CHECK(s.e_count == 6);
  CHECK(s.f_count == 4);
  CHECK(s.euler_characteristic == 2);
  CHECK(s.genus == 0);
  CHECK(s.watertight);
  CHECK(s.oriented);
}

TEST_CASE("validate: a single triangle is not watertight") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  const MeshStats s = validate(m);
  CHECK(!s.watertight);
  CHECK(s.boundary_edges == 3);
}

TEST_CASE("validate: torus has Euler characteristic 0 and genus 1") {
  const TriangleMesh m = testshapes::torus(10.0, 3.0, 8, 8);
  const MeshStats s = validate(m);
  CHECK(s.watertight);
  CHECK(s.euler_characteristic == 0);
  CHECK(s.genus == 1);
  CHECK(s.e_count == 3 * s.f_count / 2);
}

TEST_CASE("mesh_volume: unit cube, orientation sign, icosphere") {
  const TriangleMesh cube = testshapes::unit_cube();
  CHECK(mesh_volume(cube) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mesh_volume(testshapes::flipped(cube)) == doctest::Approx(-1.0).epsilon(1e-12));

  const TriangleMesh sphere = testshapes::icosphere(10.0, 3);
  const double analytic = (4.0 / 3.0) * M_PI * 1000.0;
  CHECK(std::abs(mesh_volume(sphere) - analytic) / analytic < 0.01);

  TriangleMesh open = cube;
  open.faces.pop_back();
  CHECK_THROWS_AS(mesh_volume(open), std::invalid_argument);
}

TEST_CASE("marching cubes: single voxel gives a topological sphere") {
  VoxelVolume v(7, 7, 7, 1, 1, 1);
  v.set(3, 3, 3, true);
  const TriangleMesh m = marching_cubes(v, 0.5);
  const MeshStats s = validate(m);
  CHECK(s.watertight);
  CHECK(s.oriented);
  CHECK(s.euler_characteristic == 2);
  CHECK(mesh_volume(m) > 0.0);
}

TEST_CASE("marching cubes: 2x2x2 block is watertight genus 0 with positive volume") {
  VoxelVolume v(8, 8, 8, 1, 1, 1);
  for (int z = 3; z <= 4; ++z)
    for (int y = 3; y <= 4; ++y)
      for (int x = 3; x <= 4; ++x) v.set(x, y, z, true);
  const TriangleMesh m = marching_cubes(v, 0.5);
  const MeshStats s = validate(m);
  CHECK(s.watertight);
  CHECK(s.genus == 0);
  CHECK(mesh_volume(m) > 0.0);
}

TEST_CASE("marching cubes: voxelized sphere volume within 2% of analytic") {
  const VoxelVolume v = testshapes::voxel_ball(20, 1.0);
  const TriangleMesh m = marching_cubes(v, 0.5);
  const MeshStats s = validate(m);
  CHECK(s.watertight);
  CHECK(s.genus == 0);
  const double analytic = (4.0 / 3.0) * M_PI * 8000.0;  // 33510.3 mm^3
  CHECK(std::abs(mesh_volume(m) - analytic) / analytic < 0.02);
}

TEST_CASE("marching cubes: errors on empty volume and boundary contact") {
  VoxelVolume empty(5, 5, 5, 1, 1, 1);
  CHECK_THROWS_AS(marching_cubes(empty, 0.5), std::invalid_argument);

  VoxelVolume touching(5, 5, 5, 1, 1, 1);
  touching.set(0, 2, 2, true);
  CHECK_THROWS_WITH_AS(marching_cubes(touching, 0.5),
                       doctest::Contains("pad the volume"), std::invalid_argument);
}

TEST_CASE("marching cubes output is watertight on random closed volumes") {
  for (std::uint64_t seed : {3u, 17u, 23u}) {
    Rng rng(seed);
    VoxelVolume v(24, 24, 24, 2, 2, 2);
    for (int z = 6; z < 18; ++z)
      for (int y = 6; y < 18; ++y)
        for (int x = 6; x < 18; ++x)
          if (rng.uniform() < 0.55) v.set(x, y, z, true);
    const VoxelVolume cleaned = largest_component(close(v, 1));
    if (cleaned.set_count() == 0) continue;
    const MeshStats s = validate(marching_cubes(cleaned, 0.5));
    CHECK(s.watertight);
    CHECK(s.oriented);
  }
}

TEST_CASE("decimate: icosphere 5120 -> 1000 faces") {
  const TriangleMesh sphere = testshapes::icosphere(10.0, 4);
  REQUIRE(sphere.faces.size() == 5120);
  const DecimateResult res = decimate(sphere, 1000);
  CHECK(res.reached_target);
  CHECK(res.mesh.faces.size() == 1000);
  const MeshStats s = validate(res.mesh);
  CHECK(s.watertight);
  CHECK(s.genus == 0);
  CHECK(res.mesh.vertices.size() == 502);  // V = F/2 + 2
  const double before = mesh_volume(sphere);
  const double after = mesh_volume(res.mesh);
  CHECK(std::abs(after - before) / before < 0.05);
}

TEST_CASE("decimate: mesh already below target returns unchanged") {
  const TriangleMesh m = testshapes::icosphere(5.0, 2);  // 320 faces
  const DecimateResult res = decimate(m, 1000);
  CHECK(res.reached_target);
  CHECK(res.mesh.vertices == m.vertices);
  CHECK(res.mesh.faces.size() == m.faces.size());
}

TEST_CASE("decimate: preconditions") {
  const TriangleMesh m = testshapes::icosphere(5.0, 2);
  CHECK_THROWS_AS(decimate(m, 10), std::invalid_argument);
  TriangleMesh open = m;
  open.faces.pop_back();
  CHECK_THROWS_AS(decimate(open, 100), std::invalid_argument);
}

TEST_CASE("decimation chain on a synthetic body stays watertight at every level") {
  const auto spec = sample_subject_spec(99, 1);
  const std::array<double, 3> spacing{6, 6, 6};
  const auto body = generate_synthetic_body(spec, recommended_dims(spacing), spacing, "c");
  const VoxelVolume seg = largest_component(close(body.volume, 2));
  TriangleMesh mesh = marching_cubes(seg, 0.5);
  REQUIRE(validate(mesh).watertight);
  const double full_volume = mesh_volume(mesh);
  REQUIRE(mesh.faces.size() > 10000);

  for (const int target : {10000, 5000, 1000, 500, 200, 100}) {
    const DecimateResult res = decimate(mesh, static_cast<std::size_t>(target));
    CHECK(res.reached_target);
    const MeshStats s = validate(res.mesh);
    CHECK(s.watertight);
    CHECK(s.genus == 0);
    CHECK(res.mesh.vertices.size() == res.mesh.faces.size() / 2 + 2);
    mesh = res.mesh;
  }
  // Outer coordinates survive extreme decimation: volume drift stays small.
  CHECK(std::abs(mesh_volume(mesh) - full_volume) / full_volume < 0.10);
}

TEST_CASE("obj io: round trip and strictness") {
  const auto dir = std::filesystem::temp_directory_path() / "bodygraph_obj_io";
  std::filesystem::create_directories(dir);
  const TriangleMesh m = testshapes::icosphere(7.0, 1);
  const std::string path = (dir / "m.obj").string();
  save_obj(path, m);
  const TriangleMesh r = load_obj(path);
  CHECK(r.faces == m.faces);
  REQUIRE(r.vertices.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    CHECK(norm(r.vertices[i] - m.vertices[i]) < 1e-4);  // 6 significant digits

  // Writing is deterministic.
  save_obj((dir / "m2.obj").string(), m);
  std::ifstream a(path), b((dir / "m2.obj").string());
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  {
    std::ofstream bad((dir / "bad.obj").string());
    bad << "v 0 0 0\nvn 1 0 0\n";
  }
  CHECK_THROWS_WITH_AS(load_obj((dir / "bad.obj").string()), doctest::Contains("unsupported"),
                       std::runtime_error);
  {
    std::ofstream bad((dir / "bad2.obj").string());
    bad << "v 0 0 0\nf 1 2 3\n";
  }
  CHECK_THROWS_AS(load_obj((dir / "bad2.obj").string()), std::runtime_error);
}
