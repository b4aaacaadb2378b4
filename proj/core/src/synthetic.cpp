#include "bodygraph/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "bodygraph/rng.hpp"

namespace bodygraph {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTissueDensityKgPerMm3 = 0.985e-6;
constexpr int kMarginVoxels = 4;

// Superellipsoid implicit value sum |q_i/a_i|^e; <= 1 inside. Positively
// homogeneous of degree e in q.
double torso_implicit(const Superellipsoid& t, const Vec3& q) {
  const Vec3 d = q - t.center;
  return std::pow(std::abs(d.x) / t.semi_axes.x, t.exponent) +
         std::pow(std::abs(d.y) / t.semi_axes.y, t.exponent) +
         std::pow(std::abs(d.z) / t.semi_axes.z, t.exponent);
}

struct Aabb {
  Vec3 lo{1e300, 1e300, 1e300};
  Vec3 hi{-1e300, -1e300, -1e300};
  void include(const Vec3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  void pad(double m) {
    lo = lo - Vec3{m, m, m};
    hi = hi + Vec3{m, m, m};
  }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
};

double shell_thickness_upper_bound(const ShellField& s) {
  return s.base_mm * (1.0 + std::abs(s.anterior) + std::abs(s.axial));
}

Aabb body_bbox(const SyntheticBodySpec& spec) {
  Aabb box;
  const double t_max = shell_thickness_upper_bound(spec.shell);
  const Vec3 c = spec.torso.center;
  const Vec3 a = spec.torso.semi_axes;
  box.include(c - Vec3{a.x + t_max, a.y + t_max, a.z + t_max});
  box.include(c + Vec3{a.x + t_max, a.y + t_max, a.z + t_max});
  for (const auto& cap : spec.limbs) {
    box.include(cap.p0 - Vec3{cap.radius, cap.radius, cap.radius});
    box.include(cap.p0 + Vec3{cap.radius, cap.radius, cap.radius});
    box.include(cap.p1 - Vec3{cap.radius, cap.radius, cap.radius});
    box.include(cap.p1 + Vec3{cap.radius, cap.radius, cap.radius});
  }
  return box;
}

void verify_spec(const SyntheticBodySpec& spec) {
  const auto& a = spec.torso.semi_axes;
  if (a.x <= 0 || a.y <= 0 || a.z <= 0)
    throw std::invalid_argument("torso semi-axes must be positive");
  if (spec.torso.exponent < 2.0)
    throw std::invalid_argument("torso exponent must be >= 2");
  if (spec.shell.base_mm <= 0.0 ||
      1.0 - std::abs(spec.shell.anterior) - std::abs(spec.shell.axial) <= 0.0)
    throw ContainmentError("shell thickness is not strictly positive everywhere");

  // Sample the visceral ellipsoid surface on a Fibonacci sphere and check it
  // stays strictly inside the torso.
  const int n = 2048;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vec3 dir{r * std::cos(phi), r * std::sin(phi), z};
    const Vec3 q = spec.visceral.center + Vec3{spec.visceral.semi_axes.x * dir.x,
                                               spec.visceral.semi_axes.y * dir.y,
                                               spec.visceral.semi_axes.z * dir.z};
    if (torso_implicit(spec.torso, q) >= 1.0)
      throw ContainmentError("visceral ellipsoid is not strictly inside the torso");
  }
}

}  // namespace

bool inside_body(const SyntheticBodySpec& spec, const Vec3& p) {
  const Vec3 d = p - spec.torso.center;
  const auto& a = spec.torso.semi_axes;
  const double rho2 = norm2(d);
  const double min_a = std::min({a.x, a.y, a.z});
  // Inscribed sphere: cheaply inside the torso.
  if (rho2 <= min_a * min_a) return true;

  const double s = torso_implicit(spec.torso, p);
  if (s <= 1.0) return true;

  // Shell band: the torso surface along this ray sits at distance
  // B = rho / s^(1/e); inside the shell iff rho <= B + t(dir).
  const double rho = std::sqrt(rho2);
  if (rho > 0.0) {
    const double scale = std::pow(s, 1.0 / spec.torso.exponent);
    const double boundary = rho / scale;
    const Vec3 dir = d / rho;
    if (rho <= boundary + spec.shell.thickness(dir)) return true;
  }

  for (const auto& cap : spec.limbs)
    if (segment_distance(p, cap.p0, cap.p1) <= cap.radius) return true;
  return false;
}

double shell_volume_numeric(const SyntheticBodySpec& spec, double min_patch_mm) {
  const auto& a = spec.torso.semi_axes;
  const double e = spec.torso.exponent;
  const double r_max = std::max({a.x, a.y, a.z}) + shell_thickness_upper_bound(spec.shell);
  const double patch = std::max(min_patch_mm, 1e-3);
  const int n_theta = std::clamp(static_cast<int>(std::ceil(kPi * r_max / patch)), 256, 4096);
  const int n_phi = 2 * n_theta;
  const double d_theta = kPi / n_theta;
  const double d_phi = 2.0 * kPi / n_phi;

  // The superellipsoid term separates over the (theta, phi) grid:
  // |sin t cos p / ax|^e + |sin t sin p / ay|^e + |cos t / az|^e
  //   = sin(t)^e * (pcx[p] + pcy[p]) + pz[t].
  std::vector<double> cos_p(n_phi), sin_p(n_phi), pxy(n_phi);
  for (int j = 0; j < n_phi; ++j) {
    const double phi = (j + 0.5) * d_phi;
    cos_p[j] = std::cos(phi);
    sin_p[j] = std::sin(phi);
    pxy[j] = std::pow(std::abs(cos_p[j]) / a.x, e) + std::pow(std::abs(sin_p[j]) / a.y, e);
  }

  double volume = 0.0;
  for (int i = 0; i < n_theta; ++i) {
    const double theta = (i + 0.5) * d_theta;
    const double sin_t = std::sin(theta), cos_t = std::cos(theta);
    const double sin_e = std::pow(sin_t, e);
    const double pz = std::pow(std::abs(cos_t) / a.z, e);
    const double axial = spec.shell.axial * (2.0 * cos_t * cos_t - 1.0);
    double row = 0.0;
    for (int j = 0; j < n_phi; ++j) {
      const double boundary = std::pow(sin_e * pxy[j] + pz, -1.0 / e);
      const double thickness =
          spec.shell.base_mm * (1.0 + spec.shell.anterior * sin_t * sin_p[j] + axial);
      const double outer = boundary + thickness;
      row += (outer * outer * outer - boundary * boundary * boundary) / 3.0;
    }
    volume += row * sin_t;
  }
  return volume * d_theta * d_phi;
}

GeneratedBody generate_synthetic_body(const SyntheticBodySpec& spec, std::array<int, 3> dims,
                                      std::array<double, 3> spacing,
                                      const std::string& subject_id) {
  verify_spec(spec);

  Aabb box = body_bbox(spec);
  const Vec3 bbox_center = (box.lo + box.hi) * 0.5;
  const Vec3 grid_center{dims[0] * spacing[0] * 0.5, dims[1] * spacing[1] * 0.5,
                         dims[2] * spacing[2] * 0.5};
  const Mat3 rot = Mat3::rotation_z(spec.pose_angle_z);
  // world(q) = rot * (q - bbox_center) + grid_center + pose_offset
  const Vec3 anchor = grid_center + spec.pose_offset;

  // Posed bounding box must keep a margin to every grid face.
  Aabb posed;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 q{(corner & 1) ? box.hi.x : box.lo.x, (corner & 2) ? box.hi.y : box.lo.y,
                 (corner & 4) ? box.hi.z : box.lo.z};
    posed.include(rot * (q - bbox_center) + anchor);
  }
  for (int axis = 0; axis < 3; ++axis) {
    const double margin = kMarginVoxels * spacing[axis];
    if (posed.lo[axis] < margin || posed.hi[axis] > dims[axis] * spacing[axis] - margin)
      throw ContainmentError("body does not fit in the grid with the required margin");
  }

  // Voxelization with the torso field evaluated via per-(x,y) and per-z
  // tables: body-frame x,y depend only on grid x,y (the pose rotation is
  // about z) and body-frame z only on grid z, and the superellipsoid term
  // separates per axis. Semantics match inside_body().
  const Mat3 rot_inv = rot.transposed();
  box.pad(1e-9);
  GeneratedBody out;
  out.volume = VoxelVolume(dims[0], dims[1], dims[2], spacing[0], spacing[1], spacing[2]);
  {
    VoxelVolume& vol = out.volume;
    const auto& torso = spec.torso;
    const auto& a = torso.semi_axes;
    const double e = torso.exponent;
    const double min_a = std::min({a.x, a.y, a.z});
    const double t_max = shell_thickness_upper_bound(spec.shell);
    const double shell_reach2 =
        (norm(a) + t_max) * (norm(a) + t_max);  // loose outer bound for the shell test

    struct XyEntry {
      double qx, qy, txy;
    };
    std::vector<XyEntry> xy(static_cast<std::size_t>(vol.nx) * vol.ny);
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) {
        const double px = (x + 0.5) * vol.sx - anchor.x;
        const double py = (y + 0.5) * vol.sy - anchor.y;
        XyEntry& entry = xy[static_cast<std::size_t>(y) * vol.nx + x];
        entry.qx = rot_inv(0, 0) * px + rot_inv(0, 1) * py + bbox_center.x;
        entry.qy = rot_inv(1, 0) * px + rot_inv(1, 1) * py + bbox_center.y;
        entry.txy = std::pow(std::abs(entry.qx - torso.center.x) / a.x, e) +
                    std::pow(std::abs(entry.qy - torso.center.y) / a.y, e);
      }
    std::vector<double> qz_of(static_cast<std::size_t>(vol.nz)), tz_of(qz_of.size());
    for (int z = 0; z < vol.nz; ++z) {
      qz_of[z] = (z + 0.5) * vol.sz - anchor.z + bbox_center.z;
      tz_of[z] = std::pow(std::abs(qz_of[z] - torso.center.z) / a.z, e);
    }
    std::vector<Aabb> limb_boxes;
    for (const auto& cap : spec.limbs) {
      Aabb lb;
      lb.include(cap.p0 - Vec3{cap.radius, cap.radius, cap.radius});
      lb.include(cap.p0 + Vec3{cap.radius, cap.radius, cap.radius});
      lb.include(cap.p1 - Vec3{cap.radius, cap.radius, cap.radius});
      lb.include(cap.p1 + Vec3{cap.radius, cap.radius, cap.radius});
      lb.pad(1e-9);
      limb_boxes.push_back(lb);
    }

    std::size_t idx = 0;
    for (int z = 0; z < vol.nz; ++z) {
      const double qz = qz_of[z], tz = tz_of[z];
      if (qz < box.lo.z || qz > box.hi.z) {
        idx += static_cast<std::size_t>(vol.nx) * vol.ny;
        continue;
      }
      const std::size_t xy_base = 0;
      for (int y = 0; y < vol.ny; ++y)
        for (int x = 0; x < vol.nx; ++x, ++idx) {
          const XyEntry& entry = xy[xy_base + static_cast<std::size_t>(y) * vol.nx + x];
          const Vec3 q{entry.qx, entry.qy, qz};
          if (q.x < box.lo.x || q.x > box.hi.x || q.y < box.lo.y || q.y > box.hi.y) continue;

          const double s = entry.txy + tz;
          bool inside = s <= 1.0;
          if (!inside) {
            const Vec3 d = q - torso.center;
            const double rho2 = norm2(d);
            if (rho2 <= shell_reach2 && rho2 > min_a * min_a * 1e-12) {
              const double rho = std::sqrt(rho2);
              const double boundary = rho * std::pow(s, -1.0 / e);
              inside = rho <= boundary + spec.shell.thickness(d / rho);
            }
          }
          if (!inside)
            for (std::size_t c = 0; c < spec.limbs.size(); ++c) {
              if (!limb_boxes[c].contains(q)) continue;
              if (segment_distance(q, spec.limbs[c].p0, spec.limbs[c].p1) <=
                  spec.limbs[c].radius) {
                inside = true;
                break;
              }
            }
          if (inside) vol.data[idx] = 1;
        }
    }
  }

  auto& l = out.labels;
  l.subject_id = subject_id.empty() ? "s" + std::to_string(spec.seed) : subject_id;
  const auto& v = spec.visceral.semi_axes;
  l.vat_mm3 = (4.0 / 3.0) * kPi * v.x * v.y * v.z;
  l.asat_mm3 = shell_volume_numeric(spec, *std::min_element(spacing.begin(), spacing.end()) / 4.0);
  l.sex_tag = spec.sex_tag;
  l.height_mm = spec.height_mm;
  l.weight_kg = spec.weight_kg;
  l.age_years = spec.age_years;
  return out;
}

namespace {

struct SexDistribution {
  double h_mean, h_sd;
  double ax_mean, ax_sd;
  double ay_mean, ay_sd;
  double fv_mean, fv_sd;   // visceral fraction of torso semi-axes
  double t0_mean, t0_sd;   // shell base thickness, mm
  double leg_r_mean;
};

// M-tagged bodies: larger, more visceral volume; F-tagged: thicker shell.
constexpr SexDistribution kFemale{1620, 55, 148, 13, 102, 10, 0.335, 0.004, 24.0, 6.0, 53};
constexpr SexDistribution kMale{1760, 60, 158, 13, 110, 10, 0.425, 0.004, 16.5, 5.0, 56};

double clamp_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  return std::clamp(rng.normal(mean, sd), lo, hi);
}

double superellipsoid_volume(const Vec3& a, double e) {
  const double g1 = std::tgamma(1.0 + 1.0 / e);
  return 8.0 * a.x * a.y * a.z * g1 * g1 * g1 / std::tgamma(1.0 + 3.0 / e);
}

double capsule_volume(const Capsule& c) {
  const double len = norm(c.p1 - c.p0);
  return kPi * c.radius * c.radius * len + (4.0 / 3.0) * kPi * c.radius * c.radius * c.radius;
}

}  // namespace

SyntheticBodySpec sample_subject_spec(std::uint64_t master_seed, std::uint64_t index,
                                      double female_fraction) {
  Rng rng(derive_seed(master_seed, index));
  SyntheticBodySpec spec;
  spec.seed = derive_seed(master_seed, index);
  spec.sex_tag = rng.uniform() < female_fraction ? SexTag::F : SexTag::M;
  const SexDistribution& d = spec.sex_tag == SexTag::F ? kFemale : kMale;

  const double height = clamp_normal(rng, d.h_mean, d.h_sd, d.h_mean - 3.5 * d.h_sd,
                                     d.h_mean + 3.5 * d.h_sd);
  spec.height_mm = height;
  spec.age_years = clamp_normal(rng, 62.95, 7.5, 45, 82);

  const double ax = clamp_normal(rng, d.ax_mean, d.ax_sd, d.ax_mean - 3.5 * d.ax_sd,
                                 d.ax_mean + 3.5 * d.ax_sd);
  const double ay = clamp_normal(rng, d.ay_mean, d.ay_sd, d.ay_mean - 3.5 * d.ay_sd,
                                 d.ay_mean + 3.5 * d.ay_sd);
  const double az = 0.285 * height * (1.0 + clamp_normal(rng, 0.0, 0.02, -0.05, 0.05));
  spec.torso = {{0, 0, 0}, {ax, ay, az}, rng.uniform(2.4, 2.6)};

  const double fv = clamp_normal(rng, d.fv_mean, d.fv_sd, 0.28, 0.48);
  const double vz_off = clamp_normal(rng, 0.0, 0.03, -0.08, 0.08) * az;
  spec.visceral = {{0, 0, vz_off}, {fv * ax, fv * ay, fv * az}};

  // The torso implicit is front-back symmetric, so the anterior shell term is
  // the sole front-back asymmetry of the outer surface. Keeping its
  // coefficient in a narrow band makes shell thickness (the ASAT label)
  // recoverable from that asymmetry.
  spec.shell.base_mm = clamp_normal(rng, d.t0_mean, d.t0_sd, 7.0, 42.0);
  spec.shell.anterior = clamp_normal(rng, 0.26, 0.015, 0.20, 0.32);
  spec.shell.axial = clamp_normal(rng, -0.08, 0.02, -0.14, -0.02);

  // Limbs. Head overlaps the torso top; arms hang outward from inside the
  // shoulder, hands clear of the hips; legs splay slightly so nothing but the
  // torso connects them (keeps the body genus 0).
  const double head_r = 0.064 * height * (1.0 + clamp_normal(rng, 0.0, 0.04, -0.1, 0.1));
  // Limb girth tracks shell thickness, so the limbs carry ASAT signal too.
  const double t0_excess = spec.shell.base_mm - d.t0_mean;
  const double leg_r =
      std::clamp(rng.normal(d.leg_r_mean, 4.0) + 0.35 * t0_excess, 40.0, 75.0);
  const double arm_r = std::clamp(rng.normal(37.0, 3.0) + 0.25 * t0_excess, 28.0, 52.0);
  const double foot_z = -(height - az - 1.5 * head_r);
  const double hip_x = 0.5 * ax + 0.35 * leg_r;
  const double splay = clamp_normal(rng, 35.0, 8.0, 18.0, 55.0);
  const double hand_x = ax + 1.5 * spec.shell.base_mm + arm_r + 35.0;

  spec.limbs.push_back({{0, 0, az + 0.55 * head_r}, {0, 0, az + 0.55 * head_r}, head_r});
  for (const double side : {-1.0, 1.0}) {
    spec.limbs.push_back(
        {{side * hip_x, 0, -0.55 * az}, {side * (hip_x + splay), 0, foot_z + leg_r}, leg_r});
    spec.limbs.push_back(
        {{side * 0.66 * ax, 0, 0.62 * az}, {side * hand_x, 0, -0.50 * az}, arm_r});
  }

  spec.pose_angle_z = rng.uniform(-0.20, 0.20);
  spec.pose_offset = {rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0), 0.0};

  // Weight from an analytic volume estimate at typical tissue density.
  const double torso_vol = superellipsoid_volume(spec.torso.semi_axes, spec.torso.exponent);
  const Vec3 outer_axes = spec.torso.semi_axes + Vec3{spec.shell.base_mm, spec.shell.base_mm,
                                                      spec.shell.base_mm};
  const double shell_vol = superellipsoid_volume(outer_axes, spec.torso.exponent) - torso_vol;
  double limb_vol = 0.0;
  for (const auto& c : spec.limbs) limb_vol += capsule_volume(c);
  spec.weight_kg = kTissueDensityKgPerMm3 * (torso_vol + shell_vol + limb_vol);
  return spec;
}

std::array<int, 3> recommended_dims(std::array<double, 3> spacing) {
  // Worst case over the sampler distributions (3.5 sigma plus clamps), with
  // pose jitter and a 4-voxel margin per side.
  const double x_half = 470.0, y_half = 290.0, z_span = 2120.0;
  auto cells = [](double extent, double s) { return static_cast<int>(std::ceil(extent / s)) + 2 * kMarginVoxels + 2; };
  return {cells(2 * x_half, spacing[0]), cells(2 * y_half, spacing[1]), cells(z_span, spacing[2])};
}

}  // namespace bodygraph
