#include "bodygraph/mesh.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace bodygraph {

namespace {

inline std::uint64_t edge_key(std::int32_t a, std::int32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

Vec3 TriangleMesh::bbox_min() const {
  Vec3 lo{1e300, 1e300, 1e300};
  for (const auto& v : vertices)
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
  return lo;
}

Vec3 TriangleMesh::bbox_max() const {
  Vec3 hi{-1e300, -1e300, -1e300};
  for (const auto& v : vertices)
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  return hi;
}

double TriangleMesh::bbox_diagonal() const {
  if (vertices.empty()) return 0.0;
  return norm(bbox_max() - bbox_min());
}

MeshStats validate(const TriangleMesh& m) {
  MeshStats s;
  s.v_count = m.vertices.size();
  s.f_count = m.faces.size();

  const auto n = static_cast<std::int32_t>(m.vertices.size());
  // For each undirected edge: total face count and the winding balance
  // (+1 when traversed as (a,b) with a < b, -1 the other way). A consistently
  // oriented closed surface balances every edge to zero.
  std::unordered_map<std::uint64_t, std::pair<std::int32_t, std::int32_t>> edges;
  edges.reserve(m.faces.size() * 2);

  for (const auto& f : m.faces) {
    if (f[0] < 0 || f[0] >= n || f[1] < 0 || f[1] >= n || f[2] < 0 || f[2] >= n) {
      ++s.out_of_range_faces;
      continue;
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      ++s.degenerate_faces;
      continue;
    }
    for (int i = 0; i < 3; ++i) {
      const std::int32_t a = f[i], b = f[(i + 1) % 3];
      auto& e = edges[edge_key(a, b)];
      e.first += 1;
      e.second += a < b ? 1 : -1;
    }
  }

  s.e_count = edges.size();
  bool closed = s.out_of_range_faces == 0 && s.degenerate_faces == 0 && !m.faces.empty();
  bool oriented = true;
  for (const auto& [key, e] : edges) {
    (void)key;
    if (e.first == 1) ++s.boundary_edges;
    if (e.first > 2) ++s.non_manifold_edges;
    if (e.first != 2) closed = false;
    if (e.second != 0) oriented = false;
  }
  s.watertight = closed;
  s.oriented = closed && oriented;
  s.euler_characteristic = static_cast<std::int64_t>(s.v_count) -
                           static_cast<std::int64_t>(s.e_count) +
                           static_cast<std::int64_t>(s.f_count);
  if (s.watertight) s.genus = (2 - s.euler_characteristic) / 2;
  return s;
}

double mesh_volume(const TriangleMesh& m) {
  const MeshStats s = validate(m);
  if (!s.watertight) throw std::invalid_argument("mesh_volume: mesh is not watertight");
  double vol6 = 0.0;
  for (const auto& f : m.faces) {
    const Vec3& a = m.vertices[f[0]];
    const Vec3& b = m.vertices[f[1]];
    const Vec3& c = m.vertices[f[2]];
    vol6 += dot(a, cross(b, c));
  }
  return vol6 / 6.0;
}

std::vector<std::array<std::int32_t, 2>> undirected_edges(const TriangleMesh& m) {
  std::vector<std::array<std::int32_t, 2>> edges;
  edges.reserve(m.faces.size() * 3 / 2);
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i) {
      std::int32_t a = f[i], b = f[(i + 1) % 3];
      if (a > b) std::swap(a, b);
      if (a != b) edges.push_back({a, b});
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

TriangleMesh compact(const TriangleMesh& m) {
  std::vector<std::int32_t> remap(m.vertices.size(), -1);
  TriangleMesh out;
  out.faces.reserve(m.faces.size());
  for (const auto& v : m.vertices) (void)v;
  std::int32_t next = 0;
  for (const auto& f : m.faces)
    for (const auto idx : f)
      if (remap[idx] == -1) remap[idx] = 1;  // referenced marker
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    if (remap[i] == 1) {
      remap[i] = next++;
    }
  out.vertices.resize(next);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    if (remap[i] >= 0) out.vertices[remap[i]] = m.vertices[i];
  for (const auto& f : m.faces)
    out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return out;
}

}  // namespace bodygraph
