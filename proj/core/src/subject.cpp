#include "bodygraph/subject.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace bodygraph {

SexTag sex_from_char(char c) {
  if (c == 'F') return SexTag::F;
  if (c == 'M') return SexTag::M;
  throw std::invalid_argument(std::string("invalid sex tag: ") + c);
}

void save_manifest(const std::string& path, const std::vector<DatasetRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json o;
    o["subject_id"] = r.labels.subject_id;
    o["mesh_path"] = r.mesh_path;
    o["vat_mm3"] = r.labels.vat_mm3;
    o["asat_mm3"] = r.labels.asat_mm3;
    o["sex_tag"] = std::string(1, to_char(r.labels.sex_tag));
    o["height"] = r.labels.height_mm;
    o["weight"] = r.labels.weight_kg;
    o["age"] = r.labels.age_years;
    o["decimation"] = r.decimation;
    if (!r.coronal_path.empty()) o["coronal_path"] = r.coronal_path;
    if (!r.sagittal_path.empty()) o["sagittal_path"] = r.sagittal_path;
    arr.push_back(std::move(o));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << arr.dump(2) << "\n";
}

std::vector<DatasetRecord> load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest: " + path);
  nlohmann::json arr = nlohmann::json::parse(in);
  if (!arr.is_array()) throw std::runtime_error("manifest must be a JSON array: " + path);
  std::vector<DatasetRecord> records;
  records.reserve(arr.size());
  for (const auto& o : arr) {
    DatasetRecord r;
    r.labels.subject_id = o.at("subject_id").get<std::string>();
    r.mesh_path = o.at("mesh_path").get<std::string>();
    r.labels.vat_mm3 = o.at("vat_mm3").get<double>();
    r.labels.asat_mm3 = o.at("asat_mm3").get<double>();
    r.labels.sex_tag = sex_from_char(o.at("sex_tag").get<std::string>().at(0));
    r.labels.height_mm = o.at("height").get<double>();
    r.labels.weight_kg = o.at("weight").get<double>();
    r.labels.age_years = o.at("age").get<double>();
    r.decimation = o.at("decimation").get<int>();
    if (o.contains("coronal_path")) r.coronal_path = o["coronal_path"].get<std::string>();
    if (o.contains("sagittal_path")) r.sagittal_path = o["sagittal_path"].get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace bodygraph
