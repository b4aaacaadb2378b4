// Synthetic body generator. Builds watertight, genus-0 body shapes from a
// superellipsoid torso, capsule limbs and a radially offset subcutaneous
// shell, with analytically known visceral ("VAT") and shell ("ASAT") volumes
// as regression ground truth.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodygraph/geom.hpp"
#include "bodygraph/subject.hpp"
#include "bodygraph/volume.hpp"

namespace bodygraph {

struct ContainmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// |x/a|^e + |y/b|^e + |z/c|^e <= 1, exponent >= 2.
struct Superellipsoid {
  Vec3 center;
  Vec3 semi_axes;
  double exponent = 2.5;
};

struct Capsule {
  Vec3 p0, p1;
  double radius = 0.0;
};

struct Ellipsoid {
  Vec3 center;
  Vec3 semi_axes;
};

// Radial shell thickness around the torso, measured from the torso surface
// along the ray from the torso center:
//   t(d) = base * (1 + anterior * d_y + axial * (2 d_z^2 - 1))
// with d the unit direction. Positive everywhere when the coefficients are
// small; the generator verifies this.
struct ShellField {
  double base_mm = 0.0;
  double anterior = 0.0;
  double axial = 0.0;

  double thickness(const Vec3& unit_dir) const {
    return base_mm * (1.0 + anterior * unit_dir.y + axial * (2.0 * unit_dir.z * unit_dir.z - 1.0));
  }
};

struct SyntheticBodySpec {
  std::uint64_t seed = 0;
  Superellipsoid torso;
  std::vector<Capsule> limbs;
  Ellipsoid visceral;       // strictly inside the torso
  ShellField shell;
  SexTag sex_tag = SexTag::F;
  double height_mm = 0.0;
  double weight_kg = 0.0;
  double age_years = 0.0;
  // Whole-body pose jitter (rotation about z, then offset), applied before
  // voxelization so registration has real work to do.
  double pose_angle_z = 0.0;
  Vec3 pose_offset;
};

struct GeneratedBody {
  VoxelVolume volume;
  SubjectLabels labels;
};

// True if the point (body frame, mm) lies in torso ∪ shell ∪ limbs.
bool inside_body(const SyntheticBodySpec& spec, const Vec3& p);

// Shell volume by spherical quadrature of [(B+t)^3 - B^3] / 3 over directions,
// where B is the torso boundary distance along the ray. `min_patch_mm` bounds
// the surface patch size of the quadrature grid.
double shell_volume_numeric(const SyntheticBodySpec& spec, double min_patch_mm);

// Voxelizes the body into a grid of `dims` voxels at `spacing` mm and returns
// the analytic labels. Throws ContainmentError if the visceral ellipsoid is
// not strictly inside the torso, if the shell thickness is not positive, or
// if the posed body does not fit in the grid with a 3-voxel margin.
// Deterministic given the spec.
GeneratedBody generate_synthetic_body(const SyntheticBodySpec& spec, std::array<int, 3> dims,
                                      std::array<double, 3> spacing,
                                      const std::string& subject_id = "");

// Samples one subject's body spec from per-sex parameter distributions.
// Deterministic given (master_seed, index). M-tagged subjects tend to more
// visceral volume, F-tagged to more shell volume.
SyntheticBodySpec sample_subject_spec(std::uint64_t master_seed, std::uint64_t index,
                                      double female_fraction = 0.5);

// Grid large enough for any subject this sampler produces at the given
// spacing (includes pose jitter and margins).
std::array<int, 3> recommended_dims(std::array<double, 3> spacing);

}  // namespace bodygraph
