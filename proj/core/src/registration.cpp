#include "bodygraph/registration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bodygraph/kdtree.hpp"
#include "json.hpp"

namespace bodygraph {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transposed();
  const Vec3 t = inv.rotation * translation;
  inv.translation = {-t.x, -t.y, -t.z};
  return inv;
}

RigidTransform RigidTransform::after(const RigidTransform& other) const {
  RigidTransform r;
  r.rotation = rotation * other.rotation;
  r.translation = rotation * other.translation + translation;
  return r;
}

namespace {

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c;
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

// Vertices span at least a 2D subspace (three non-collinear points).
bool has_noncollinear(const std::vector<Vec3>& pts) {
  if (pts.size() < 3) return false;
  const Vec3& a = pts[0];
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3 ab = pts[i] - a;
    if (norm2(ab) == 0.0) continue;
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const Vec3 n = cross(ab, pts[j] - a);
      if (norm2(n) > 1e-18 * norm2(ab) * norm2(pts[j] - a)) return true;
    }
    break;  // the inner scan over j covers all candidates against one ab
  }
  return false;
}

// Least-squares rigid fit mapping src[i] -> dst[i] (Kabsch, reflection
// corrected via the SVD determinant).
RigidTransform fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  const Vec3 cs = centroid(src), cd = centroid(dst);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs, b = dst[i] - cd;
    h(0, 0) += a.x * b.x; h(0, 1) += a.x * b.y; h(0, 2) += a.x * b.z;
    h(1, 0) += a.y * b.x; h(1, 1) += a.y * b.y; h(1, 2) += a.y * b.z;
    h(2, 0) += a.z * b.x; h(2, 1) += a.z * b.y; h(2, 2) += a.z * b.z;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();

  RigidTransform t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.rotation(i, j) = r(i, j);
  const Vec3 rc = t.rotation * cs;
  t.translation = cd - rc;
  return t;
}

}  // namespace

IcpReport icp(const TriangleMesh& source, const TriangleMesh& target, int max_iters, double tol) {
  if (max_iters < 1) throw std::invalid_argument("icp: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("icp: tol must be > 0");
  if (!has_noncollinear(source.vertices) || !has_noncollinear(target.vertices))
    throw std::invalid_argument("icp: meshes need at least 3 non-collinear vertices");

  const KdTree3 tree(target.vertices);

  // Centroid alignment as the initial transform.
  RigidTransform current;
  current.translation = centroid(target.vertices) - centroid(source.vertices);

  IcpReport report;
  std::vector<Vec3> moved(source.vertices.size());
  std::vector<Vec3> matched(source.vertices.size());
  double prev_rmsd = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = current.apply(source.vertices[i]);

    double sum2 = 0.0;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      const std::int32_t j = tree.nearest(moved[i]);
      matched[i] = target.vertices[j];
      sum2 += norm2(moved[i] - matched[i]);
    }
    const double rmsd = std::sqrt(sum2 / static_cast<double>(moved.size()));
    report.rmsd_history.push_back(rmsd);
    report.rmsd = rmsd;
    report.iterations = iter + 1;

    if (prev_rmsd - rmsd < tol) {
      report.converged = true;
      break;
    }
    prev_rmsd = rmsd;

    // Re-fit from the original source so the transform stays a single rigid
    // map rather than an accumulated product.
    current = fit_rigid(source.vertices, matched);
  }

  report.transform = current;
  return report;
}

TriangleMesh apply_transform(const TriangleMesh& m, const RigidTransform& t) {
  TriangleMesh out;
  out.vertices.reserve(m.vertices.size());
  for (const auto& v : m.vertices) out.vertices.push_back(t.apply(v));
  out.faces = m.faces;
  return out;
}

ReferenceChoice select_reference(const std::vector<SubjectLabels>& cohort) {
  if (cohort.empty()) throw std::invalid_argument("select_reference: empty cohort");

  const auto n = static_cast<double>(cohort.size());
  double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
  for (const auto& s : cohort) {
    mean[0] += s.height_mm;
    mean[1] += s.weight_kg;
    mean[2] += s.age_years;
  }
  for (auto& m : mean) m /= n;
  for (const auto& s : cohort) {
    const double d[3] = {s.height_mm - mean[0], s.weight_kg - mean[1], s.age_years - mean[2]};
    for (int k = 0; k < 3; ++k) var[k] += d[k] * d[k];
  }
  for (auto& v : var) v /= n;

  const bool degenerate = var[0] == 0.0 && var[1] == 0.0 && var[2] == 0.0;
  ReferenceChoice best;
  best.degenerate = degenerate;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& s : cohort) {
    double d2 = 0.0;
    const double d[3] = {s.height_mm - mean[0], s.weight_kg - mean[1], s.age_years - mean[2]};
    for (int k = 0; k < 3; ++k)
      if (var[k] > 0.0) d2 += d[k] * d[k] / var[k];
    const bool better = best.subject_id.empty() || d2 < best_d2 ||
                        (d2 == best_d2 && s.subject_id < best.subject_id);
    if (better) {
      best_d2 = d2;
      best.subject_id = s.subject_id;
    }
  }
  return best;
}

std::string transform_to_json(const RigidTransform& t) {
  nlohmann::json j;
  j["rotation"] = std::vector<double>(t.rotation.m.begin(), t.rotation.m.end());
  j["translation"] = {t.translation.x, t.translation.y, t.translation.z};
  return j.dump();
}

RigidTransform transform_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || tr.size() != 3)
    throw std::runtime_error("transform JSON must hold 9 rotation and 3 translation numbers");
  RigidTransform t;
  std::copy(rot.begin(), rot.end(), t.rotation.m.begin());
  t.translation = {tr[0], tr[1], tr[2]};
  return t;
}

}  // namespace bodygraph
