// Binary voxel volumes: morphology, connected components, silhouette
// projection and voxelization of implicit solids.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "bodygraph/geom.hpp"

namespace bodygraph {

// 3D binary occupancy grid with physical spacing. Data is one byte per voxel
// (0 or 1), x-fastest linear layout; the on-disk format packs it to bits.
struct VoxelVolume {
  int nx = 0, ny = 0, nz = 0;
  double sx = 1.0, sy = 1.0, sz = 1.0;  // mm per voxel
  std::vector<std::uint8_t> data;

  VoxelVolume() = default;
  VoxelVolume(int nx_, int ny_, int nz_, double sx_, double sy_, double sz_)
      : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_),
        data(static_cast<std::size_t>(nx_) * ny_ * nz_, 0) {}

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
  }
  bool at(int x, int y, int z) const { return data[index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v) { data[index(x, y, z)] = v ? 1 : 0; }
  std::size_t voxel_count() const { return data.size(); }

  // Physical position of the voxel center, in mm.
  Vec3 center(int x, int y, int z) const {
    return {(x + 0.5) * sx, (y + 0.5) * sy, (z + 0.5) * sz};
  }

  std::size_t set_count() const;
  bool empty_mask() const { return set_count() == 0; }

  // True if any set voxel touches the grid boundary.
  bool touches_boundary() const;

  // Throws std::invalid_argument if dims/spacing/data are inconsistent.
  void check_invariants() const;
};

enum class SilhouetteAxis { coronal, sagittal };

// Binary 2D max-projection. Coronal projects along y (anterior-posterior),
// leaving an (nx, nz) image; sagittal projects along x, leaving (ny, nz).
struct Silhouette {
  SilhouetteAxis axis = SilhouetteAxis::coronal;
  int w = 0, h = 0;
  double sw = 1.0, sh = 1.0;  // mm per pixel in the projection plane
  std::vector<std::uint8_t> data;

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) + static_cast<std::size_t>(w) * j; }
  bool at(int i, int j) const { return data[index(i, j)] != 0; }
  std::size_t set_count() const;
};

// Morphological erosion/dilation/closing with the 6-connected discrete ball
// of radius r (r iterations of the unit cross-shaped structuring element).
// Outside the grid counts as empty.
VoxelVolume erode(const VoxelVolume& v, int r);
VoxelVolume dilate(const VoxelVolume& v, int r);
VoxelVolume close(const VoxelVolume& v, int r);

// Keeps only the 26-connected component with the largest voxel count.
// Ties go to the component containing the smallest linear index.
VoxelVolume largest_component(const VoxelVolume& v);

// Max-projection along the anatomical axis.
Silhouette silhouette(const VoxelVolume& v, SilhouetteAxis axis);

// Block max-pool downsample by an integer factor (last partial blocks are
// padded with zeros). factor == 1 returns the input unchanged.
Silhouette downsample(const Silhouette& s, int factor);

// Voxelizes an implicit solid: voxel set iff its center is inside.
VoxelVolume voxelize(std::array<int, 3> dims, std::array<double, 3> spacing,
                     const std::function<bool(const Vec3&)>& inside);

}  // namespace bodygraph
