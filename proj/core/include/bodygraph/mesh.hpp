// Triangle meshes with watertightness/Euler validation and signed volume.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bodygraph/geom.hpp"

namespace bodygraph {

struct TriangleMesh {
  std::vector<Vec3> vertices;                    // mm
  std::vector<std::array<std::int32_t, 3>> faces;  // CCW seen from outside

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  double bbox_diagonal() const;
};

struct MeshStats {
  std::size_t v_count = 0;
  std::size_t e_count = 0;
  std::size_t f_count = 0;
  bool watertight = false;      // every undirected edge borders exactly 2 faces
  bool oriented = false;        // the 2 faces traverse the edge in opposite directions
  std::int64_t euler_characteristic = 0;
  std::int64_t genus = -1;      // (2 - chi) / 2, only for watertight meshes
  std::size_t boundary_edges = 0;
  std::size_t non_manifold_edges = 0;
  std::size_t degenerate_faces = 0;
  std::size_t out_of_range_faces = 0;
};

// Exact counts and topology flags; never throws, problems land in the stats.
MeshStats validate(const TriangleMesh& m);

// Signed enclosed volume (mm^3), positive for outward orientation.
// Throws std::invalid_argument if the mesh is not watertight.
double mesh_volume(const TriangleMesh& m);

// Deduplicated undirected edge list, each pair with u < v, sorted.
std::vector<std::array<std::int32_t, 2>> undirected_edges(const TriangleMesh& m);

// Drops unreferenced vertices, keeping relative vertex order.
TriangleMesh compact(const TriangleMesh& m);

}  // namespace bodygraph
