#include "bodygraph/decimate.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

namespace bodygraph {

namespace {

// Symmetric 4x4 quadric, upper triangle:
// (a00 a01 a02 a03; . a11 a12 a13; . . a22 a23; . . . a33)
struct Quadric {
  double q[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};

  void add_plane(const Vec3& n, double d) {
    const double p[4] = {n.x, n.y, n.z, d};
    int k = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) q[k++] += p[i] * p[j];
  }
  Quadric& operator+=(const Quadric& o) {
    for (int i = 0; i < 10; ++i) q[i] += o.q[i];
    return *this;
  }
  double eval(const Vec3& p) const {
    const double x = p.x, y = p.y, z = p.z;
    return q[0] * x * x + 2 * q[1] * x * y + 2 * q[2] * x * z + 2 * q[3] * x + q[4] * y * y +
           2 * q[5] * y * z + 2 * q[6] * y + q[7] * z * z + 2 * q[8] * z + q[9];
  }

  // Minimizer of the quadric if the 3x3 block is well conditioned
  // (Frobenius condition estimate < 1e12), otherwise the given midpoint.
  Vec3 minimizer_or(const Vec3& midpoint) const {
    const double a00 = q[0], a01 = q[1], a02 = q[2], a11 = q[4], a12 = q[5], a22 = q[7];
    const double bx = -q[3], by = -q[6], bz = -q[8];
    const double c00 = a11 * a22 - a12 * a12;
    const double c01 = a02 * a12 - a01 * a22;
    const double c02 = a01 * a12 - a02 * a11;
    const double det = a00 * c00 + a01 * c01 + a02 * c02;
    if (det == 0.0) return midpoint;
    const double c11 = a00 * a22 - a02 * a02;
    const double c12 = a01 * a02 - a00 * a12;
    const double c22 = a00 * a11 - a01 * a01;
    const double inv = 1.0 / det;
    const double i00 = c00 * inv, i01 = c01 * inv, i02 = c02 * inv;
    const double i11 = c11 * inv, i12 = c12 * inv, i22 = c22 * inv;
    const double fa = std::sqrt(a00 * a00 + 2 * a01 * a01 + 2 * a02 * a02 + a11 * a11 +
                                2 * a12 * a12 + a22 * a22);
    const double fi = std::sqrt(i00 * i00 + 2 * i01 * i01 + 2 * i02 * i02 + i11 * i11 +
                                2 * i12 * i12 + i22 * i22);
    if (!(fa * fi < 1e12)) return midpoint;
    return {i00 * bx + i01 * by + i02 * bz, i01 * bx + i11 * by + i12 * bz,
            i02 * bx + i12 * by + i22 * bz};
  }
};

struct HeapEntry {
  double cost;
  std::int32_t u, v;            // u < v
  std::uint32_t vu, vv;         // endpoint versions at push time
  bool operator>(const HeapEntry& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (u != o.u) return u > o.u;
    return v > o.v;
  }
};

struct Collapser {
  std::vector<Vec3> pos;
  std::vector<Quadric> quadric;
  std::vector<std::uint32_t> version;
  std::vector<char> vertex_alive;
  std::vector<std::array<std::int32_t, 3>> faces;
  std::vector<char> face_alive;
  std::vector<std::vector<std::int32_t>> vfaces;  // incident alive faces (may hold stale ids)
  std::size_t alive_faces = 0;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;

  explicit Collapser(const TriangleMesh& m) {
    pos = m.vertices;
    quadric.resize(pos.size());
    version.assign(pos.size(), 0);
    vertex_alive.assign(pos.size(), 1);
    faces = m.faces;
    face_alive.assign(faces.size(), 1);
    vfaces.resize(pos.size());
    alive_faces = faces.size();
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const auto& t = faces[f];
      for (int c = 0; c < 3; ++c) vfaces[t[c]].push_back(static_cast<std::int32_t>(f));
      const Vec3 n = cross(pos[t[1]] - pos[t[0]], pos[t[2]] - pos[t[0]]);
      const double len = norm(n);
      if (len > 0.0) {
        const Vec3 un = n / len;
        Quadric k;
        k.add_plane(un, -dot(un, pos[t[0]]));
        // Area weighting keeps sliver triangles from dominating the error.
        const double area = 0.5 * len;
        for (double& q : k.q) q *= area;
        for (int c = 0; c < 3; ++c) quadric[t[c]] += k;
      }
    }
  }

  void prune(std::int32_t v) {
    auto& list = vfaces[v];
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](std::int32_t f) { return !face_alive[f]; }),
               list.end());
  }

  template <typename Fn>
  void for_each_neighbor(std::int32_t v, Fn&& fn) const {
    for (const auto f : vfaces[v]) {
      if (!face_alive[f]) continue;
      for (const auto w : faces[f])
        if (w != v) fn(w);
    }
  }

  std::vector<std::int32_t> neighbors(std::int32_t v) const {
    std::vector<std::int32_t> out;
    for_each_neighbor(v, [&](std::int32_t w) { out.push_back(w); });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void push_edge(std::int32_t a, std::int32_t b) {
    if (a > b) std::swap(a, b);
    Quadric q = quadric[a];
    q += quadric[b];
    const Vec3 mid = (pos[a] + pos[b]) * 0.5;
    const Vec3 p = q.minimizer_or(mid);
    const double cost = std::max(q.eval(p), 0.0);
    heap.push({cost, a, b, version[a], version[b]});
  }

  void seed_all_edges() {
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!face_alive[f]) continue;
      const auto& t = faces[f];
      for (int c = 0; c < 3; ++c) {
        const std::int32_t a = t[c], b = t[(c + 1) % 3];
        if (a < b) push_edge(a, b);  // each undirected edge once
      }
    }
  }

  bool edge_exists(std::int32_t u, std::int32_t v) const {
    bool found = false;
    for_each_neighbor(u, [&](std::int32_t w) { found |= (w == v); });
    return found;
  }

  // Link condition plus a normal-flip guard. Returns the placement if the
  // collapse is admissible.
  bool admissible(std::int32_t u, std::int32_t v, Vec3& placement) const {
    std::size_t shared_faces = 0;
    for (const auto f : vfaces[u]) {
      if (!face_alive[f]) continue;
      const auto& t = faces[f];
      if ((t[0] == v || t[1] == v || t[2] == v)) ++shared_faces;
    }
    if (shared_faces != 2) return false;

    const auto nu = neighbors(u);
    const auto nv = neighbors(v);
    std::size_t common = 0;
    std::size_t i = 0, j = 0;
    while (i < nu.size() && j < nv.size()) {
      if (nu[i] == nv[j]) {
        ++common;
        ++i;
        ++j;
      } else if (nu[i] < nv[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    if (common != 2) return false;

    Quadric q = quadric[u];
    q += quadric[v];
    placement = q.minimizer_or((pos[u] + pos[v]) * 0.5);
    if (!std::isfinite(placement.x) || !std::isfinite(placement.y) ||
        !std::isfinite(placement.z))
      return false;

    // Surviving incident faces must not flip or collapse.
    for (const std::int32_t moved : {u, v}) {
      for (const auto f : vfaces[moved]) {
        if (!face_alive[f]) continue;
        const auto& t = faces[f];
        if ((t[0] == u || t[1] == u || t[2] == u) && (t[0] == v || t[1] == v || t[2] == v))
          continue;  // dies with the collapse
        Vec3 a = pos[t[0]], b = pos[t[1]], c = pos[t[2]];
        const Vec3 n_old = cross(b - a, c - a);
        if (t[0] == moved) a = placement;
        if (t[1] == moved) b = placement;
        if (t[2] == moved) c = placement;
        const Vec3 n_new = cross(b - a, c - a);
        if (norm2(n_new) < 1e-24) return false;
        if (dot(n_old, n_new) <= 0.0) return false;
      }
    }
    return true;
  }

  void collapse(std::int32_t u, std::int32_t v, const Vec3& placement) {
    pos[u] = placement;
    quadric[u] += quadric[v];
    prune(u);
    prune(v);
    for (const auto f : vfaces[v]) {
      auto& t = faces[f];
      if ((t[0] == u || t[1] == u || t[2] == u)) {
        face_alive[f] = 0;
        --alive_faces;
      } else {
        for (int c = 0; c < 3; ++c)
          if (t[c] == v) t[c] = u;
        vfaces[u].push_back(f);
      }
    }
    vfaces[v].clear();
    vertex_alive[v] = 0;
    prune(u);
    ++version[u];
    ++version[v];
    for (const auto w : neighbors(u)) push_edge(u, w);
  }
};

}  // namespace

DecimateResult decimate(const TriangleMesh& m, std::size_t target_faces) {
  if (target_faces < 20) throw std::invalid_argument("decimate: target_faces must be >= 20");
  const MeshStats stats = validate(m);
  if (!stats.watertight) throw std::invalid_argument("decimate: input mesh is not watertight");

  if (m.faces.size() <= target_faces) return {m, true, m.faces.size()};

  Collapser c(m);
  c.seed_all_edges();

  bool progressed = true;
  while (c.alive_faces > target_faces && progressed) {
    progressed = false;
    while (c.alive_faces > target_faces && !c.heap.empty()) {
      const HeapEntry e = c.heap.top();
      c.heap.pop();
      if (!c.vertex_alive[e.u] || !c.vertex_alive[e.v]) continue;
      if (e.vu != c.version[e.u] || e.vv != c.version[e.v]) continue;  // stale
      if (!c.edge_exists(e.u, e.v)) continue;
      Vec3 placement;
      if (!c.admissible(e.u, e.v, placement)) continue;
      c.collapse(e.u, e.v, placement);
      progressed = true;
    }
    // Rejected collapses can become admissible after others; reseed once per
    // round until a full round makes no progress.
    if (c.alive_faces > target_faces && progressed) c.seed_all_edges();
  }

  TriangleMesh out;
  out.vertices = c.pos;
  out.faces.reserve(c.alive_faces);
  for (std::size_t f = 0; f < c.faces.size(); ++f)
    if (c.face_alive[f]) out.faces.push_back(c.faces[f]);
  out = compact(out);
  const std::size_t achieved = out.faces.size();
  return {std::move(out), achieved <= target_faces, achieved};
}

}  // namespace bodygraph
