// Isosurface extraction from binary occupancy volumes.
#pragma once

#include "bodygraph/mesh.hpp"
#include "bodygraph/volume.hpp"

namespace bodygraph {

// Extracts the isolevel surface of the occupancy field, treating occupancy as
// {0,1} samples at voxel centers with linear interpolation along cell edges.
// Output is watertight and consistently oriented (outward normals, positive
// enclosed volume), with coordinates in mm.
//
// The volume must be non-empty and no set voxel may touch the grid boundary;
// throws std::invalid_argument otherwise (pad the volume first).
TriangleMesh marching_cubes(const VoxelVolume& v, double isolevel = 0.5);

}  // namespace bodygraph
