// Volume file format: <name>.volhdr JSON header + <name>.volraw bit-packed
// payload. Bits are packed LSB-first within each byte, every x-row padded to
// a byte boundary, rows ordered y then z. Silhouettes reuse the format with
// nz = 1.
#pragma once

#include <string>

#include "bodygraph/volume.hpp"

namespace bodygraph {

// `base_path` is the path without extension; writes base.volhdr + base.volraw.
void save_volume(const std::string& base_path, const VoxelVolume& v);
VoxelVolume load_volume(const std::string& base_path);

void save_silhouette(const std::string& base_path, const Silhouette& s);
Silhouette load_silhouette(const std::string& base_path, SilhouetteAxis axis);

}  // namespace bodygraph
