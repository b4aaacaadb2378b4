#include "bodygraph/volume.hpp"

#include <numeric>
#include <stdexcept>

namespace bodygraph {

std::size_t VoxelVolume::set_count() const {
  std::size_t n = 0;
  for (auto b : data) n += b;
  return n;
}

bool VoxelVolume::touches_boundary() const {
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        if (x > 0 && x < nx - 1 && y > 0 && y < ny - 1 && z > 0 && z < nz - 1) {
          x = nx - 2;  // interior row: skip to the far face
          continue;
        }
        if (at(x, y, z)) return true;
      }
  return false;
}

void VoxelVolume::check_invariants() const {
  if (nx < 0 || ny < 0 || nz < 0) throw std::invalid_argument("volume dims must be non-negative");
  if (sx <= 0.0 || sy <= 0.0 || sz <= 0.0)
    throw std::invalid_argument("volume spacing must be strictly positive");
  if (data.size() != static_cast<std::size_t>(nx) * ny * nz)
    throw std::invalid_argument("volume data length must equal nx*ny*nz");
}

std::size_t Silhouette::set_count() const {
  std::size_t n = 0;
  for (auto b : data) n += b;
  return n;
}

namespace {

// One unit step of 6-connected erosion (keep voxels whose whole cross
// neighborhood is set; outside the grid counts as empty).
VoxelVolume erode_unit(const VoxelVolume& v) {
  VoxelVolume out(v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x) {
        if (!v.at(x, y, z)) continue;
        const bool keep = x > 0 && x < v.nx - 1 && y > 0 && y < v.ny - 1 && z > 0 &&
                          z < v.nz - 1 && v.at(x - 1, y, z) && v.at(x + 1, y, z) &&
                          v.at(x, y - 1, z) && v.at(x, y + 1, z) && v.at(x, y, z - 1) &&
                          v.at(x, y, z + 1);
        if (keep) out.set(x, y, z, true);
      }
  return out;
}

VoxelVolume dilate_unit(const VoxelVolume& v) {
  VoxelVolume out(v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x) {
        if (!v.at(x, y, z)) continue;
        out.set(x, y, z, true);
        if (x > 0) out.set(x - 1, y, z, true);
        if (x < v.nx - 1) out.set(x + 1, y, z, true);
        if (y > 0) out.set(x, y - 1, z, true);
        if (y < v.ny - 1) out.set(x, y + 1, z, true);
        if (z > 0) out.set(x, y, z - 1, true);
        if (z < v.nz - 1) out.set(x, y, z + 1, true);
      }
  return out;
}

}  // namespace

VoxelVolume erode(const VoxelVolume& v, int r) {
  if (r < 0) throw std::invalid_argument("erode: radius must be >= 0");
  VoxelVolume out = v;
  for (int i = 0; i < r; ++i) out = erode_unit(out);
  return out;
}

VoxelVolume dilate(const VoxelVolume& v, int r) {
  if (r < 0) throw std::invalid_argument("dilate: radius must be >= 0");
  VoxelVolume out = v;
  for (int i = 0; i < r; ++i) out = dilate_unit(out);
  return out;
}

VoxelVolume close(const VoxelVolume& v, int r) {
  if (r < 0) throw std::invalid_argument("close: radius must be >= 0");
  return erode(dilate(v, r), r);
}

VoxelVolume largest_component(const VoxelVolume& v) {
  VoxelVolume out(v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
  std::vector<std::int32_t> label(v.data.size(), -1);
  std::vector<std::size_t> stack;
  std::int32_t best_label = -1;
  std::size_t best_count = 0;

  const std::size_t n = v.data.size();
  std::int32_t next = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!v.data[seed] || label[seed] != -1) continue;
    // Scan order is linear order, so the first voxel of a component is its
    // minimal linear index; "first component wins ties" is the tie rule.
    const std::int32_t id = next++;
    std::size_t count = 0;
    stack.clear();
    stack.push_back(seed);
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++count;
      const int x = static_cast<int>(cur % v.nx);
      const int y = static_cast<int>((cur / v.nx) % v.ny);
      const int z = static_cast<int>(cur / (static_cast<std::size_t>(v.nx) * v.ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const int X = x + dx, Y = y + dy, Z = z + dz;
            if (X < 0 || X >= v.nx || Y < 0 || Y >= v.ny || Z < 0 || Z >= v.nz) continue;
            const std::size_t ni = v.index(X, Y, Z);
            if (v.data[ni] && label[ni] == -1) {
              label[ni] = id;
              stack.push_back(ni);
            }
          }
    }
    if (count > best_count) {
      best_count = count;
      best_label = id;
    }
  }

  if (best_label >= 0)
    for (std::size_t i = 0; i < n; ++i)
      if (label[i] == best_label) out.data[i] = 1;
  return out;
}

Silhouette silhouette(const VoxelVolume& v, SilhouetteAxis axis) {
  Silhouette s;
  s.axis = axis;
  if (axis == SilhouetteAxis::coronal) {
    s.w = v.nx;
    s.h = v.nz;
    s.sw = v.sx;
    s.sh = v.sz;
    s.data.assign(static_cast<std::size_t>(s.w) * s.h, 0);
    for (int z = 0; z < v.nz; ++z)
      for (int y = 0; y < v.ny; ++y)
        for (int x = 0; x < v.nx; ++x)
          if (v.at(x, y, z)) s.data[s.index(x, z)] = 1;
  } else {
    s.w = v.ny;
    s.h = v.nz;
    s.sw = v.sy;
    s.sh = v.sz;
    s.data.assign(static_cast<std::size_t>(s.w) * s.h, 0);
    for (int z = 0; z < v.nz; ++z)
      for (int y = 0; y < v.ny; ++y)
        for (int x = 0; x < v.nx; ++x)
          if (v.at(x, y, z)) s.data[s.index(y, z)] = 1;
  }
  return s;
}

Silhouette downsample(const Silhouette& s, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  if (factor == 1) return s;
  Silhouette out;
  out.axis = s.axis;
  out.w = (s.w + factor - 1) / factor;
  out.h = (s.h + factor - 1) / factor;
  out.sw = s.sw * factor;
  out.sh = s.sh * factor;
  out.data.assign(static_cast<std::size_t>(out.w) * out.h, 0);
  for (int j = 0; j < s.h; ++j)
    for (int i = 0; i < s.w; ++i)
      if (s.at(i, j)) out.data[out.index(i / factor, j / factor)] = 1;
  return out;
}

VoxelVolume voxelize(std::array<int, 3> dims, std::array<double, 3> spacing,
                     const std::function<bool(const Vec3&)>& inside) {
  VoxelVolume v(dims[0], dims[1], dims[2], spacing[0], spacing[1], spacing[2]);
  v.check_invariants();
  for (int z = 0; z < v.nz; ++z)
    for (int y = 0; y < v.ny; ++y)
      for (int x = 0; x < v.nx; ++x)
        if (inside(v.center(x, y, z))) v.set(x, y, z, true);
  return v;
}

}  // namespace bodygraph
