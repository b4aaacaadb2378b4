// Rigid registration: point-to-point ICP against a reference subject.
#pragma once

#include <string>
#include <vector>

#include "bodygraph/geom.hpp"
#include "bodygraph/mesh.hpp"
#include "bodygraph/subject.hpp"

namespace bodygraph {

struct RigidTransform {
  Mat3 rotation;      // orthonormal, det +1
  Vec3 translation;   // mm

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  // Composition: result maps p -> this(other(p)).
  RigidTransform after(const RigidTransform& other) const;
};

struct IcpReport {
  RigidTransform transform;
  int iterations = 0;
  double rmsd = 0.0;  // mm, over final nearest-neighbor correspondences
  bool converged = false;
  std::vector<double> rmsd_history;  // one entry per iteration, non-increasing
};

// Aligns source onto target: nearest-neighbor correspondences, closed-form
// SVD rigid fit (reflection corrected), repeated until the RMSD improvement
// drops below tol or max_iters is hit. Starts from centroid alignment.
// Throws std::invalid_argument if either mesh has fewer than 3 non-collinear
// vertices, max_iters < 1, or tol <= 0.
IcpReport icp(const TriangleMesh& source, const TriangleMesh& target, int max_iters = 50,
              double tol = 1e-8);

// v' = R v + t for every vertex; faces unchanged.
TriangleMesh apply_transform(const TriangleMesh& m, const RigidTransform& t);

struct ReferenceChoice {
  std::string subject_id;
  bool degenerate = false;  // all three attributes had zero variance
};

// Subject closest to the cohort mean in z-scored (height, weight, age) space;
// ties go to the lexicographically smallest subject_id.
ReferenceChoice select_reference(const std::vector<SubjectLabels>& cohort);

// JSON {rotation: 9 numbers row-major, translation: 3 numbers}.
std::string transform_to_json(const RigidTransform& t);
RigidTransform transform_from_json(const std::string& json_text);

}  // namespace bodygraph
