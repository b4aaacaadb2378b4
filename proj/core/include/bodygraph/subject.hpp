// Subject labels and the dataset manifest shared across pipeline stages.
#pragma once

#include <string>
#include <vector>

namespace bodygraph {

enum class SexTag : char { F = 'F', M = 'M' };

inline char to_char(SexTag s) { return static_cast<char>(s); }
SexTag sex_from_char(char c);

// Regression targets plus the attributes used for reference selection.
struct SubjectLabels {
  std::string subject_id;
  double vat_mm3 = 0.0;
  double asat_mm3 = 0.0;
  SexTag sex_tag = SexTag::F;
  double height_mm = 0.0;
  double weight_kg = 0.0;
  double age_years = 0.0;
};

// One manifest row: labels plus the file this stage's mesh (or volume) lives
// in. `decimation` is 0 for full-resolution meshes and raw volumes.
struct DatasetRecord {
  SubjectLabels labels;
  std::string mesh_path;
  int decimation = 0;
  std::string coronal_path;   // silhouettes, when the stage produced them
  std::string sagittal_path;
};

// JSON manifest: a list of {subject_id, mesh_path, vat_mm3, asat_mm3,
// sex_tag, height, weight, age, decimation} objects.
void save_manifest(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> load_manifest(const std::string& path);

}  // namespace bodygraph
