// Quadric-error-metric edge-collapse mesh simplification.
#pragma once

#include <cstddef>

#include "bodygraph/mesh.hpp"

namespace bodygraph {

struct DecimateResult {
  TriangleMesh mesh;
  bool reached_target = false;  // false: topology constraints stopped us early
  std::size_t achieved_faces = 0;
};

// Collapses lowest-cost edges until face count <= target_faces. Collapses
// that would break the link condition (and thus change topology) or flip a
// surviving face normal are skipped, so output stays watertight and
// genus-preserving. Deterministic: ties broken by smallest (u, v) edge key.
//
// Preconditions: m watertight, target_faces >= 20 (std::invalid_argument
// otherwise). A mesh already at or below the target is returned unchanged.
DecimateResult decimate(const TriangleMesh& m, std::size_t target_faces);

}  // namespace bodygraph
