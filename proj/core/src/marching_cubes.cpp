#include "bodygraph/marching_cubes.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace bodygraph {

namespace {

#include "mc_tri_table.inc"

// Corner offsets in (dx, dy, dz).
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

// Cell edge -> (corner a, corner b).
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Cell edge -> (base-corner, axis) of the global lattice edge it lies on.
constexpr int kEdgeBase[12][2] = {{0, 0}, {1, 1}, {3, 0}, {0, 1}, {4, 0}, {5, 1},
                                  {7, 0}, {4, 1}, {0, 2}, {1, 2}, {2, 2}, {3, 2}};

}  // namespace

TriangleMesh marching_cubes(const VoxelVolume& v, double isolevel) {
  v.check_invariants();
  if (isolevel <= 0.0 || isolevel >= 1.0)
    throw std::invalid_argument("marching_cubes: isolevel must be in (0,1)");
  if (v.set_count() == 0) throw std::invalid_argument("marching_cubes: empty volume");
  if (v.touches_boundary())
    throw std::invalid_argument(
        "marching_cubes: surface touches the grid boundary; pad the volume first");

  // Vertices are keyed by the global lattice edge they sit on, then compacted
  // in edge-id order, so the output is independent of traversal order.
  std::unordered_map<std::uint64_t, Vec3> edge_vertex;
  std::vector<std::array<std::uint64_t, 3>> tri_edges;
  edge_vertex.reserve(1 << 16);

  const auto point_index = [&](int x, int y, int z) {
    return static_cast<std::uint64_t>(x) +
           static_cast<std::uint64_t>(v.nx) *
               (static_cast<std::uint64_t>(y) + static_cast<std::uint64_t>(v.ny) * z);
  };

  for (int k = 0; k + 1 < v.nz; ++k)
    for (int j = 0; j + 1 < v.ny; ++j)
      for (int i = 0; i + 1 < v.nx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (v.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])) config |= 1 << c;
        if (config == 0 || config == 255) continue;

        const std::int8_t* tri = kTriTable[config];
        for (int t = 0; tri[3 * t] >= 0; ++t) {
          std::array<std::uint64_t, 3> ids;
          for (int corner = 0; corner < 3; ++corner) {
            const int e = tri[3 * t + corner];
            const int bc = kEdgeBase[e][0], axis = kEdgeBase[e][1];
            const int bx = i + kCorner[bc][0], by = j + kCorner[bc][1], bz = k + kCorner[bc][2];
            const std::uint64_t id = 3 * point_index(bx, by, bz) + static_cast<std::uint64_t>(axis);
            ids[corner] = id;
            if (!edge_vertex.count(id)) {
              const int ca = kEdgeCorner[e][0], cb = kEdgeCorner[e][1];
              const Vec3 pa = v.center(i + kCorner[ca][0], j + kCorner[ca][1], k + kCorner[ca][2]);
              const Vec3 pb = v.center(i + kCorner[cb][0], j + kCorner[cb][1], k + kCorner[cb][2]);
              const double va =
                  v.at(i + kCorner[ca][0], j + kCorner[ca][1], k + kCorner[ca][2]) ? 1.0 : 0.0;
              const double vb =
                  v.at(i + kCorner[cb][0], j + kCorner[cb][1], k + kCorner[cb][2]) ? 1.0 : 0.0;
              const double frac = (isolevel - va) / (vb - va);
              edge_vertex.emplace(id, pa + (pb - pa) * frac);
            }
          }
          // The table's winding is inward for the "bit set = inside" corner
          // convention; swap to make normals outward.
          tri_edges.push_back({ids[0], ids[2], ids[1]});
        }
      }

  std::vector<std::uint64_t> ids;
  ids.reserve(edge_vertex.size());
  for (const auto& [id, pos] : edge_vertex) {
    (void)pos;
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  std::unordered_map<std::uint64_t, std::int32_t> vert_index;
  vert_index.reserve(ids.size());
  TriangleMesh mesh;
  mesh.vertices.reserve(ids.size());
  for (const auto id : ids) {
    vert_index.emplace(id, static_cast<std::int32_t>(mesh.vertices.size()));
    mesh.vertices.push_back(edge_vertex.at(id));
  }
  mesh.faces.reserve(tri_edges.size());
  for (const auto& te : tri_edges)
    mesh.faces.push_back({vert_index.at(te[0]), vert_index.at(te[1]), vert_index.at(te[2])});
  return mesh;
}

}  // namespace bodygraph
