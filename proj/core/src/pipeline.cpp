#include "bodygraph/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "bodygraph/decimate.hpp"
#include "bodygraph/marching_cubes.hpp"
#include "bodygraph/mesh_io.hpp"
#include "bodygraph/registration.hpp"
#include "bodygraph/synthetic.hpp"
#include "bodygraph/volume_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bodygraph {

namespace {

// ---- config parsing -------------------------------------------------------

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError(path + "/" + key + ": unknown field");
  }
}

template <typename T>
T field(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "/" + key + ": wrong type");
  }
}

void validate(const PipelineConfig& c) {
  if (c.version != 1) throw ConfigError("/version: only version 1 is supported");
  if (c.cohort_size < 1) throw ConfigError("/cohort/size: must be >= 1");
  for (const double s : c.spacing)
    if (!(s > 0.0)) throw ConfigError("/cohort/spacing: components must be > 0");
  if (c.female_fraction < 0.0 || c.female_fraction > 1.0)
    throw ConfigError("/cohort/female_fraction: must be in [0,1]");
  if (c.close_radius < 0) throw ConfigError("/cohort/close_radius: must be >= 0");
  if (c.silhouette_downsample < 1) throw ConfigError("/silhouette/downsample: must be >= 1");
  if (c.decimation_levels.empty()) throw ConfigError("/decimation/levels: must not be empty");
  if (!std::is_sorted(c.decimation_levels.begin(), c.decimation_levels.end()))
    throw ConfigError("/decimation/levels: must be sorted ascending");
  for (const int l : c.decimation_levels)
    if (l < 20) throw ConfigError("/decimation/levels: every level must be >= 20");
  if (c.icp_max_iters < 1) throw ConfigError("/registration/max_iters: must be >= 1");
  if (!(c.icp_tol_mm > 0.0)) throw ConfigError("/registration/tol_mm: must be > 0");
  if (c.model_kind != "gnn" && c.model_kind != "cnn")
    throw ConfigError("/model/kind: must be \"gnn\" or \"cnn\"");
  if (c.hidden < 2) throw ConfigError("/model/hidden: must be >= 2");
  if (c.epochs < 1 || c.cnn_epochs < 1) throw ConfigError("/train/epochs: must be >= 1");
  if (c.batch_size < 1) throw ConfigError("/train/batch_size: must be >= 1");
  if (!(c.adam.lr > 0.0)) throw ConfigError("/train/lr: must be > 0");
  if (c.adam.beta1 < 0.0 || c.adam.beta1 >= 1.0 || c.adam.beta2 < 0.0 || c.adam.beta2 >= 1.0)
    throw ConfigError("/train/beta1, /train/beta2: must be in [0,1)");
  if (!(c.shrinkage.a > 0.0)) throw ConfigError("/train/shrinkage_a: must be > 0");
  if (c.shrinkage.c < 0.0) throw ConfigError("/train/shrinkage_c: must be >= 0");
  if (c.folds < 2) throw ConfigError("/train/folds: must be >= 2");
  if (std::find(c.decimation_levels.begin(), c.decimation_levels.end(), c.train_level) ==
      c.decimation_levels.end())
    throw ConfigError("/train/level: must be one of /decimation/levels");
  if (c.sweep_epochs < 1) throw ConfigError("/sweep/epochs: must be >= 1");
  for (const int f : c.sweep_folds)
    if (f < 0 || f >= c.folds) throw ConfigError("/sweep/folds: fold index out of range");
  if (c.stats_bins < 1) throw ConfigError("/stats/bins: must be >= 1");
  if (c.device_watts < 0.0) throw ConfigError("/energy/device_watts: must be >= 0");
}

}  // namespace

std::array<int, 3> PipelineConfig::resolved_dims() const {
  if (dims[0] > 0 && dims[1] > 0 && dims[2] > 0) return dims;
  return recommended_dims(spacing);
}

TrainCfg PipelineConfig::train_cfg() const {
  TrainCfg t;
  t.model_kind = model_kind;
  t.hidden = hidden;
  t.cnn_channels = cnn_channels;
  t.epochs = model_kind == "cnn" ? cnn_epochs : epochs;
  t.batch_size = batch_size;
  t.adam = adam;
  t.shrinkage = shrinkage;
  t.folds = folds;
  t.seed = seed;
  t.report_timing = report_timing;
  t.decimation = model_kind == "gnn" ? train_level : 0;
  return t;
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig load_config(const std::string& path, long long seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }

  PipelineConfig c;
  check_keys(j, "", {"version", "seed", "workdir", "cohort", "silhouette", "decimation",
                     "registration", "model", "train", "sweep", "stats", "energy"});
  c.version = field(j, "", "version", 1);
  c.seed = field<std::uint64_t>(j, "", "seed", c.seed);
  c.workdir = field<std::string>(j, "", "workdir", c.workdir);

  if (j.contains("cohort")) {
    const auto& o = j["cohort"];
    check_keys(o, "/cohort", {"size", "spacing", "dims", "female_fraction", "close_radius"});
    c.cohort_size = field(o, "/cohort", "size", c.cohort_size);
    c.spacing = field(o, "/cohort", "spacing", c.spacing);
    if (o.contains("dims") && !o["dims"].is_null()) c.dims = o["dims"].get<std::array<int, 3>>();
    c.female_fraction = field(o, "/cohort", "female_fraction", c.female_fraction);
    c.close_radius = field(o, "/cohort", "close_radius", c.close_radius);
  }
  if (j.contains("silhouette")) {
    const auto& o = j["silhouette"];
    check_keys(o, "/silhouette", {"downsample"});
    c.silhouette_downsample = field(o, "/silhouette", "downsample", c.silhouette_downsample);
  }
  if (j.contains("decimation")) {
    const auto& o = j["decimation"];
    check_keys(o, "/decimation", {"levels"});
    c.decimation_levels = field(o, "/decimation", "levels", c.decimation_levels);
  }
  if (j.contains("registration")) {
    const auto& o = j["registration"];
    check_keys(o, "/registration", {"max_iters", "tol_mm"});
    c.icp_max_iters = field(o, "/registration", "max_iters", c.icp_max_iters);
    c.icp_tol_mm = field(o, "/registration", "tol_mm", c.icp_tol_mm);
  }
  if (j.contains("model")) {
    const auto& o = j["model"];
    check_keys(o, "/model", {"kind", "hidden", "cnn_channels"});
    c.model_kind = field<std::string>(o, "/model", "kind", c.model_kind);
    c.hidden = field(o, "/model", "hidden", c.hidden);
    c.cnn_channels = field(o, "/model", "cnn_channels", c.cnn_channels);
  }
  if (j.contains("train")) {
    const auto& o = j["train"];
    check_keys(o, "/train",
               {"epochs", "cnn_epochs", "batch_size", "lr", "beta1", "beta2", "eps",
                "shrinkage_a", "shrinkage_c", "folds", "level", "report_timing"});
    c.epochs = field(o, "/train", "epochs", c.epochs);
    c.cnn_epochs = field(o, "/train", "cnn_epochs", c.cnn_epochs);
    c.batch_size = field(o, "/train", "batch_size", c.batch_size);
    c.adam.lr = field(o, "/train", "lr", c.adam.lr);
    c.adam.beta1 = field(o, "/train", "beta1", c.adam.beta1);
    c.adam.beta2 = field(o, "/train", "beta2", c.adam.beta2);
    c.adam.eps = field(o, "/train", "eps", c.adam.eps);
    c.shrinkage.a = field(o, "/train", "shrinkage_a", c.shrinkage.a);
    c.shrinkage.c = field(o, "/train", "shrinkage_c", c.shrinkage.c);
    c.folds = field(o, "/train", "folds", c.folds);
    c.train_level = field(o, "/train", "level", c.train_level);
    c.report_timing = field(o, "/train", "report_timing", c.report_timing);
  }
  if (j.contains("sweep")) {
    const auto& o = j["sweep"];
    check_keys(o, "/sweep", {"levels", "epochs", "folds"});
    if (o.contains("levels") && !o["levels"].is_null())
      c.sweep_levels = o["levels"].get<std::vector<int>>();
    c.sweep_epochs = field(o, "/sweep", "epochs", c.sweep_epochs);
    c.sweep_folds = field(o, "/sweep", "folds", c.sweep_folds);
  }
  if (j.contains("stats")) {
    const auto& o = j["stats"];
    check_keys(o, "/stats", {"bins"});
    c.stats_bins = field(o, "/stats", "bins", c.stats_bins);
  }
  if (j.contains("energy")) {
    const auto& o = j["energy"];
    check_keys(o, "/energy", {"device_watts"});
    c.device_watts = field(o, "/energy", "device_watts", c.device_watts);
  }

  if (seed_override >= 0) c.seed = static_cast<std::uint64_t>(seed_override);
  validate(c);
  return c;
}

std::string resolved_config_json(const PipelineConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["workdir"] = c.workdir;
  j["cohort"] = {{"size", c.cohort_size},
                 {"spacing", c.spacing},
                 {"dims", c.resolved_dims()},
                 {"female_fraction", c.female_fraction},
                 {"close_radius", c.close_radius}};
  j["silhouette"] = {{"downsample", c.silhouette_downsample}};
  j["decimation"] = {{"levels", c.decimation_levels}};
  j["registration"] = {{"max_iters", c.icp_max_iters}, {"tol_mm", c.icp_tol_mm}};
  j["model"] = {{"kind", c.model_kind}, {"hidden", c.hidden}, {"cnn_channels", c.cnn_channels}};
  j["train"] = {{"epochs", c.epochs},
                {"cnn_epochs", c.cnn_epochs},
                {"batch_size", c.batch_size},
                {"lr", c.adam.lr},
                {"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"eps", c.adam.eps},
                {"shrinkage_a", c.shrinkage.a},
                {"shrinkage_c", c.shrinkage.c},
                {"folds", c.folds},
                {"level", c.train_level},
                {"report_timing", c.report_timing}};
  j["sweep"] = {{"levels", c.sweep_levels.empty() ? c.decimation_levels : c.sweep_levels},
                {"epochs", c.sweep_epochs},
                {"folds", c.sweep_folds}};
  j["stats"] = {{"bins", c.stats_bins}};
  j["energy"] = {{"device_watts", c.device_watts}};
  return j.dump(2) + "\n";
}

// ---- hashing + stage bookkeeping ------------------------------------------

std::string hash_bytes(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string hash_files(const std::vector<std::string>& paths, const std::string& extra) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  mix(extra.data(), extra.size());
  std::vector<char> buf(1 << 20);
  for (const auto& path : paths) {
    mix(path.data(), path.size());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingPrerequisite("missing input file: " + path);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      mix(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016" PRIx64, h);
  return out;
}

namespace {

struct Stage {
  fs::path dir;
  std::string input_hash;

  static Stage begin(const PipelineConfig& cfg, const std::string& rel,
                     const std::string& input_hash) {
    Stage s;
    s.dir = fs::path(cfg.workdir) / rel;
    s.input_hash = input_hash;
    const fs::path hash_file = s.dir / "inputs.hash";
    if (fs::exists(hash_file)) {
      std::ifstream in(hash_file);
      std::string recorded;
      in >> recorded;
      if (recorded != input_hash && !cfg.force)
        throw StaleInputs(rel + ": inputs changed since the last run; rerun with --force");
    }
    fs::create_directories(s.dir);
    return s;
  }

  void finish(const PipelineConfig& cfg) const {
    std::ofstream c(dir / "config.resolved.json", std::ios::binary);
    c << resolved_config_json(cfg);
    std::ofstream h(dir / "inputs.hash", std::ios::binary);
    h << input_hash << "\n";
  }
};

void write_stage_marker(const PipelineConfig& cfg, const fs::path& dir,
                        const std::string& input_hash) {
  fs::create_directories(dir);
  std::ofstream c(dir / "config.resolved.json", std::ios::binary);
  c << resolved_config_json(cfg);
  std::ofstream h(dir / "inputs.hash", std::ios::binary);
  h << input_hash << "\n";
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

std::string subject_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%04d", i);
  return buf;
}

json slice_cohort(const PipelineConfig& c) {
  json s;
  s["seed"] = c.seed;
  s["size"] = c.cohort_size;
  s["spacing"] = c.spacing;
  s["dims"] = c.resolved_dims();
  s["female_fraction"] = c.female_fraction;
  s["close_radius"] = c.close_radius;
  return s;
}

std::vector<std::string> manifest_files(const PipelineConfig& cfg, const std::string& manifest_rel,
                                        bool volumes, bool silhouettes) {
  const fs::path root(cfg.workdir);
  const fs::path manifest = root / manifest_rel;
  if (!fs::exists(manifest))
    throw MissingPrerequisite("missing " + manifest.string());
  std::vector<std::string> files{manifest.string()};
  for (const auto& rec : load_manifest(manifest.string())) {
    if (volumes) {
      files.push_back((root / (rec.mesh_path + ".volhdr")).string());
      files.push_back((root / (rec.mesh_path + ".volraw")).string());
    } else {
      files.push_back((root / rec.mesh_path).string());
    }
    if (silhouettes && !rec.coronal_path.empty()) {
      files.push_back((root / (rec.coronal_path + ".volhdr")).string());
      files.push_back((root / (rec.coronal_path + ".volraw")).string());
      files.push_back((root / (rec.sagittal_path + ".volhdr")).string());
      files.push_back((root / (rec.sagittal_path + ".volraw")).string());
    }
  }
  return files;
}

std::vector<DatasetRecord> require_manifest(const PipelineConfig& cfg, const std::string& rel,
                                            const std::string& prerequisite_cmd) {
  const fs::path path = fs::path(cfg.workdir) / rel;
  if (!fs::exists(path))
    throw MissingPrerequisite("missing " + path.string() + "; run `bodygraph " +
                              prerequisite_cmd + "` first");
  return load_manifest(path.string());
}

}  // namespace

// ---- stages ----------------------------------------------------------------

void cmd_synth(const PipelineConfig& cfg) {
  const auto dims = cfg.resolved_dims();
  const std::string slice = slice_cohort(cfg).dump();
  const Stage stage = Stage::begin(cfg, "volumes", hash_bytes(slice.data(), slice.size()));

  std::vector<DatasetRecord> records(static_cast<std::size_t>(cfg.cohort_size));
  parallel_for(cfg.cohort_size, cfg.jobs, [&](int i) {
    const auto spec = sample_subject_spec(cfg.seed, static_cast<std::uint64_t>(i),
                                          cfg.female_fraction);
    const std::string id = subject_name(i);
    GeneratedBody body = generate_synthetic_body(spec, dims, cfg.spacing, id);
    // Default segmentation chain: close, then keep the largest component.
    const VoxelVolume seg = largest_component(close(body.volume, cfg.close_radius));

    const std::string base = "volumes/" + id;
    save_volume((fs::path(cfg.workdir) / base).string(), seg);
    save_silhouette((fs::path(cfg.workdir) / (base + "_cor")).string(),
                    silhouette(seg, SilhouetteAxis::coronal));
    save_silhouette((fs::path(cfg.workdir) / (base + "_sag")).string(),
                    silhouette(seg, SilhouetteAxis::sagittal));

    DatasetRecord rec;
    rec.labels = body.labels;
    rec.mesh_path = base;
    rec.decimation = 0;
    rec.coronal_path = base + "_cor";
    rec.sagittal_path = base + "_sag";
    records[static_cast<std::size_t>(i)] = std::move(rec);
  });

  save_manifest((stage.dir / "manifest.json").string(), records);
  stage.finish(cfg);
}

void cmd_extract(const PipelineConfig& cfg) {
  auto records = require_manifest(cfg, "volumes/manifest.json", "synth");
  const auto inputs = manifest_files(cfg, "volumes/manifest.json", true, false);
  const Stage stage = Stage::begin(cfg, "meshes/full", hash_files(inputs, "extract"));

  const fs::path root(cfg.workdir);
  json report = json::array();
  std::vector<json> per_subject(records.size());
  std::vector<DatasetRecord> out(records.size());

  parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
    auto rec = records[static_cast<std::size_t>(i)];
    const VoxelVolume v = load_volume((root / rec.mesh_path).string());
    const TriangleMesh mesh = marching_cubes(v, 0.5);
    const MeshStats stats = validate(mesh);
    if (!stats.watertight)
      throw std::runtime_error(rec.labels.subject_id + ": extraction produced a non-watertight mesh");
    const std::string rel = "meshes/full/" + rec.labels.subject_id + ".obj";
    save_obj((root / rel).string(), mesh);

    json r;
    r["subject_id"] = rec.labels.subject_id;
    r["v"] = stats.v_count;
    r["e"] = stats.e_count;
    r["f"] = stats.f_count;
    r["euler_characteristic"] = stats.euler_characteristic;
    r["genus"] = stats.genus;
    r["volume_mm3"] = mesh_volume(mesh);
    per_subject[static_cast<std::size_t>(i)] = std::move(r);

    rec.mesh_path = rel;
    out[static_cast<std::size_t>(i)] = std::move(rec);
  });

  for (auto& r : per_subject) report.push_back(std::move(r));
  std::ofstream rep(stage.dir / "extract_report.json", std::ios::binary);
  rep << report.dump(2) << "\n";
  save_manifest((stage.dir / "manifest.json").string(), out);
  stage.finish(cfg);
}

void cmd_decimate(const PipelineConfig& cfg) {
  auto records = require_manifest(cfg, "meshes/full/manifest.json", "extract");
  const auto inputs = manifest_files(cfg, "meshes/full/manifest.json", false, false);
  json slice;
  slice["levels"] = cfg.decimation_levels;
  const Stage stage = Stage::begin(cfg, "meshes", hash_files(inputs, slice.dump()));

  std::vector<int> levels = cfg.decimation_levels;
  std::sort(levels.rbegin(), levels.rend());  // chain from coarse budget down

  const fs::path root(cfg.workdir);
  for (const int l : levels) fs::create_directories(root / ("meshes/f" + std::to_string(l)));

  std::vector<std::vector<DatasetRecord>> per_level(levels.size(),
                                                    std::vector<DatasetRecord>(records.size()));
  std::vector<json> flags(records.size());

  parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
    const auto& rec = records[static_cast<std::size_t>(i)];
    TriangleMesh current = load_obj((root / rec.mesh_path).string());
    json subject_flags;
    subject_flags["subject_id"] = rec.labels.subject_id;
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const int target = levels[li];
      const DecimateResult res = decimate(current, static_cast<std::size_t>(target));
      const std::string rel =
          "meshes/f" + std::to_string(target) + "/" + rec.labels.subject_id + ".obj";
      save_obj((root / rel).string(), res.mesh);
      subject_flags["f" + std::to_string(target)] = {{"achieved", res.achieved_faces},
                                                     {"reached_target", res.reached_target}};
      DatasetRecord out = rec;
      out.mesh_path = rel;
      out.decimation = target;
      per_level[li][static_cast<std::size_t>(i)] = std::move(out);
      current = res.mesh;
    }
    flags[static_cast<std::size_t>(i)] = std::move(subject_flags);
  });

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const fs::path dir = root / ("meshes/f" + std::to_string(levels[li]));
    save_manifest((dir / "manifest.json").string(), per_level[li]);
    write_stage_marker(cfg, dir, stage.input_hash);
  }
  json report = json::array();
  for (auto& f : flags) report.push_back(std::move(f));
  std::ofstream rep(stage.dir / "decimate_report.json", std::ios::binary);
  rep << report.dump(2) << "\n";
  stage.finish(cfg);
}

void cmd_register(const PipelineConfig& cfg) {
  const fs::path root(cfg.workdir);
  std::vector<std::string> inputs;
  for (const int l : cfg.decimation_levels) {
    const std::string rel = "meshes/f" + std::to_string(l) + "/manifest.json";
    if (!fs::exists(root / rel))
      throw MissingPrerequisite("missing " + (root / rel).string() +
                                "; run `bodygraph decimate` first");
    const auto files = manifest_files(cfg, rel, false, false);
    inputs.insert(inputs.end(), files.begin(), files.end());
  }
  json slice;
  slice["max_iters"] = cfg.icp_max_iters;
  slice["tol_mm"] = cfg.icp_tol_mm;
  const Stage stage = Stage::begin(cfg, "registered", hash_files(inputs, slice.dump()));

  // Reference chosen once, on the cohort labels.
  const auto base_records =
      load_manifest((root / ("meshes/f" + std::to_string(cfg.decimation_levels.front())) /
                     "manifest.json")
                        .string());
  std::vector<SubjectLabels> cohort;
  for (const auto& r : base_records) cohort.push_back(r.labels);
  const ReferenceChoice ref = select_reference(cohort);
  {
    json j;
    j["subject_id"] = ref.subject_id;
    j["degenerate"] = ref.degenerate;
    std::ofstream out(stage.dir / "reference.json", std::ios::binary);
    out << j.dump(2) << "\n";
  }

  for (const int level : cfg.decimation_levels) {
    const std::string level_dir = "registered/f" + std::to_string(level);
    fs::create_directories(root / level_dir);
    const auto records =
        load_manifest((root / ("meshes/f" + std::to_string(level)) / "manifest.json").string());

    const auto ref_it =
        std::find_if(records.begin(), records.end(),
                     [&](const DatasetRecord& r) { return r.labels.subject_id == ref.subject_id; });
    if (ref_it == records.end())
      throw std::runtime_error("reference subject missing from level manifest");
    const TriangleMesh target = load_obj((root / ref_it->mesh_path).string());

    std::vector<DatasetRecord> out(records.size());
    std::vector<json> transforms(records.size());
    parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
      const auto& rec = records[static_cast<std::size_t>(i)];
      const TriangleMesh mesh = load_obj((root / rec.mesh_path).string());
      RigidTransform transform;  // identity for the reference subject
      IcpReport icp_report;
      if (rec.labels.subject_id != ref.subject_id) {
        icp_report = icp(mesh, target, cfg.icp_max_iters, cfg.icp_tol_mm);
        transform = icp_report.transform;
      }
      const TriangleMesh registered = apply_transform(mesh, transform);
      const std::string rel = level_dir + "/" + rec.labels.subject_id + ".obj";
      save_obj((root / rel).string(), registered);

      json t = json::parse(transform_to_json(transform));
      t["rmsd"] = icp_report.rmsd;
      t["iterations"] = icp_report.iterations;
      t["converged"] = rec.labels.subject_id == ref.subject_id ? true : icp_report.converged;
      transforms[static_cast<std::size_t>(i)] = std::move(t);

      DatasetRecord r = rec;
      r.mesh_path = rel;
      out[static_cast<std::size_t>(i)] = std::move(r);
    });

    json tmap;
    for (std::size_t i = 0; i < records.size(); ++i)
      tmap[records[i].labels.subject_id] = std::move(transforms[i]);
    std::ofstream tf(root / level_dir / "transforms.json", std::ios::binary);
    tf << tmap.dump(2) << "\n";
    save_manifest((root / level_dir / "manifest.json").string(), out);
    write_stage_marker(cfg, root / level_dir, stage.input_hash);
  }
  stage.finish(cfg);
}

namespace {

TrainDataset build_dataset(const PipelineConfig& cfg) {
  TrainDataset ds;
  const fs::path root(cfg.workdir);
  if (cfg.model_kind == "gnn") {
    const std::string rel = "registered/f" + std::to_string(cfg.train_level) + "/manifest.json";
    const auto records = require_manifest(cfg, rel, "register");
    for (const auto& rec : records)
      ds.graphs.push_back(mesh_to_graph(load_obj((root / rec.mesh_path).string()), rec.labels));
  } else {
    const auto records = require_manifest(cfg, "volumes/manifest.json", "synth");
    for (const auto& rec : records) {
      if (rec.coronal_path.empty())
        throw MissingPrerequisite("manifest lacks silhouettes; run `bodygraph synth` first");
      const Silhouette cor = downsample(
          load_silhouette((root / rec.coronal_path).string(), SilhouetteAxis::coronal),
          cfg.silhouette_downsample);
      const Silhouette sag = downsample(
          load_silhouette((root / rec.sagittal_path).string(), SilhouetteAxis::sagittal),
          cfg.silhouette_downsample);
      if (ds.images.images.empty()) {
        ds.images.h = cor.h;
        ds.images.w = std::max(cor.w, sag.w);
      }
      if (cor.h != ds.images.h || sag.h != ds.images.h || cor.w > ds.images.w ||
          sag.w > ds.images.w)
        throw std::runtime_error("silhouette resolutions differ across the cohort");
      // Two channels on a common canvas, coronal first, zero-padded on the right.
      Eigen::VectorXd img = Eigen::VectorXd::Zero(2 * ds.images.h * ds.images.w);
      for (int y = 0; y < cor.h; ++y)
        for (int x = 0; x < cor.w; ++x)
          img[y * ds.images.w + x] = cor.at(x, y) ? 1.0 : 0.0;
      const std::int64_t off = ds.images.h * ds.images.w;
      for (int y = 0; y < sag.h; ++y)
        for (int x = 0; x < sag.w; ++x)
          img[off + y * ds.images.w + x] = sag.at(x, y) ? 1.0 : 0.0;
      ds.images.images.push_back(std::move(img));
      ds.images.y.emplace_back(rec.labels.vat_mm3, rec.labels.asat_mm3);
      ds.images.sex.push_back(rec.labels.sex_tag);
      ds.images.ids.push_back(rec.labels.subject_id);
    }
  }
  return ds;
}

std::string model_tag(const PipelineConfig& cfg) {
  return cfg.model_kind + (cfg.model_kind == "gnn" ? "_f" + std::to_string(cfg.train_level) : "");
}

std::vector<std::string> dataset_input_files(const PipelineConfig& cfg) {
  if (cfg.model_kind == "gnn")
    return manifest_files(cfg, "registered/f" + std::to_string(cfg.train_level) + "/manifest.json",
                          false, false);
  return manifest_files(cfg, "volumes/manifest.json", true, true);
}

}  // namespace

void cmd_train(const PipelineConfig& cfg) {
  const TrainDataset ds = build_dataset(cfg);
  json slice;
  slice["train"] = json::parse(resolved_config_json(cfg))["train"];
  slice["model"] = json::parse(resolved_config_json(cfg))["model"];
  const Stage stage =
      Stage::begin(cfg, "metrics/" + model_tag(cfg), hash_files(dataset_input_files(cfg), slice.dump()));

  fs::create_directories(fs::path(cfg.workdir) / "models");
  TrainCfg tc = cfg.train_cfg();
  tc.checkpoint_base = (fs::path(cfg.workdir) / "models" / model_tag(cfg)).string();

  const MetricsReport report = train_model(ds, tc);
  save_metrics_json((stage.dir / "metrics.json").string(), report);
  save_metrics_csv((stage.dir / "metrics.csv").string(), report);
  stage.finish(cfg);
}

void cmd_eval(const PipelineConfig& cfg) {
  const TrainDataset ds = build_dataset(cfg);
  const std::string tag = model_tag(cfg);
  const fs::path root(cfg.workdir);
  const Stage stage = Stage::begin(cfg, "metrics/" + tag + "_eval",
                                   hash_files(dataset_input_files(cfg), "eval"));

  const int n = static_cast<int>(ds.size(cfg.model_kind));
  const FoldSplit folds = kfold_split(n, cfg.folds, cfg.seed);

  MetricsReport report;
  report.model_kind = cfg.model_kind;
  report.decimation = cfg.model_kind == "gnn" ? cfg.train_level : 0;
  report.folds_requested = cfg.folds;
  report.report_timing = false;
  report.split_scheme = std::to_string(cfg.folds) + "-fold, 3/1/1 train/val/test blocks";

  for (int f = 0; f < cfg.folds; ++f) {
    const std::string base = (root / "models" / (tag + "_fold" + std::to_string(f))).string();
    if (!fs::exists(base + ".nnhdr"))
      throw MissingPrerequisite("missing checkpoint " + base + "; run `bodygraph train` first");
    const FoldScalers scalers = load_fold_scalers(base + ".scalers.json");

    FoldResult r;
    r.fold = f;
    nn::Matrix pred_raw, target_raw;
    std::vector<SexTag> sex;
    if (cfg.model_kind == "gnn") {
      nn::GnnModel model = nn::load_gnn_checkpoint(base);
      std::vector<RegressionGraph> test;
      for (const int i : folds.folds[f].test) {
        test.push_back(scalers.features.apply(ds.graphs[i]));
        sex.push_back(ds.graphs[i].sex_tag);
      }
      const GraphBatch tb = batch(test);
      pred_raw = scalers.targets.invert(model.forward(tb, nn::Mode::eval));
      target_raw.resize(static_cast<Eigen::Index>(folds.folds[f].test.size()), 2);
      for (std::size_t i = 0; i < folds.folds[f].test.size(); ++i)
        target_raw.row(static_cast<Eigen::Index>(i)) =
            ds.graphs[folds.folds[f].test[i]].y.transpose();
    } else {
      nn::CnnModel model = nn::load_cnn_checkpoint(base);
      const auto& idx = folds.folds[f].test;
      nn::ImageBatch images(static_cast<std::int64_t>(idx.size()), 2, ds.images.h, ds.images.w);
      const std::int64_t stride = 2 * ds.images.h * ds.images.w;
      target_raw.resize(static_cast<Eigen::Index>(idx.size()), 2);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        images.data.segment(static_cast<std::int64_t>(i) * stride, stride) =
            ds.images.images[idx[i]];
        target_raw.row(static_cast<Eigen::Index>(i)) = ds.images.y[idx[i]].transpose();
        sex.push_back(ds.images.sex[idx[i]]);
      }
      pred_raw = scalers.targets.invert(model.forward(images, nn::Mode::eval));
    }

    std::vector<double> pv, tv, pa, ta;
    for (Eigen::Index i = 0; i < pred_raw.rows(); ++i) {
      pv.push_back(pred_raw(i, 0));
      tv.push_back(target_raw(i, 0));
      pa.push_back(pred_raw(i, 1));
      ta.push_back(target_raw(i, 1));
    }
    r.r2_vat = r2(pv, tv);
    r.r2_asat = r2(pa, ta);
    const PerSexR2 split = per_sex_r2(pred_raw, target_raw, sex);
    r.r2_vat_female = split.vat_female;
    r.r2_asat_female = split.asat_female;
    r.r2_vat_male = split.vat_male;
    r.r2_asat_male = split.asat_male;
    report.folds.push_back(std::move(r));
  }

  // Aggregates mirror the train-side report.
  const auto nf = static_cast<double>(report.folds.size());
  for (const auto& f : report.folds) {
    report.mean_r2_vat += f.r2_vat / nf;
    report.mean_r2_asat += f.r2_asat / nf;
  }
  for (const auto& f : report.folds) {
    report.std_r2_vat += (f.r2_vat - report.mean_r2_vat) * (f.r2_vat - report.mean_r2_vat) / nf;
    report.std_r2_asat +=
        (f.r2_asat - report.mean_r2_asat) * (f.r2_asat - report.mean_r2_asat) / nf;
  }
  report.std_r2_vat = std::sqrt(report.std_r2_vat);
  report.std_r2_asat = std::sqrt(report.std_r2_asat);

  save_metrics_json((stage.dir / "metrics.json").string(), report);
  save_metrics_csv((stage.dir / "metrics.csv").string(), report);
  stage.finish(cfg);
}

void cmd_sweep(const PipelineConfig& cfg) {
  const fs::path root(cfg.workdir);
  const std::vector<int> levels = cfg.sweep_levels.empty() ? cfg.decimation_levels : cfg.sweep_levels;

  std::map<int, std::vector<RegressionGraph>> per_level;
  std::vector<std::string> inputs;
  for (const int level : levels) {
    const std::string rel = "registered/f" + std::to_string(level) + "/manifest.json";
    if (!fs::exists(root / rel)) {
      std::fprintf(stderr, "sweep: level %d has no registered meshes, skipped\n", level);
      continue;
    }
    const auto files = manifest_files(cfg, rel, false, false);
    inputs.insert(inputs.end(), files.begin(), files.end());
    std::vector<RegressionGraph> graphs;
    for (const auto& rec : load_manifest((root / rel).string()))
      graphs.push_back(mesh_to_graph(load_obj((root / rec.mesh_path).string()), rec.labels));
    per_level.emplace(level, std::move(graphs));
  }
  if (per_level.empty())
    throw MissingPrerequisite("no registered meshes for any sweep level; run `bodygraph register` first");

  const Stage stage = Stage::begin(cfg, "sweep", hash_files(inputs, "sweep"));

  TrainCfg tc = cfg.train_cfg();
  tc.model_kind = "gnn";
  tc.epochs = cfg.sweep_epochs;
  tc.fold_filter = cfg.sweep_folds;
  tc.report_timing = true;
  tc.checkpoint_base.clear();

  const SweepResult sweep = timing_sweep(per_level, levels, tc);
  save_sweep_csv((stage.dir / "sweep.csv").string(), sweep, cfg.device_watts);
  save_sweep_json((stage.dir / "sweep.json").string(), sweep, cfg.device_watts);
  stage.finish(cfg);
}

void cmd_stats(const PipelineConfig& cfg) {
  const auto records = require_manifest(cfg, "volumes/manifest.json", "synth");
  const auto inputs = std::vector<std::string>{
      (fs::path(cfg.workdir) / "volumes/manifest.json").string()};
  const Stage stage = Stage::begin(cfg, "stats", hash_files(inputs, "stats"));

  std::ofstream csv(stage.dir / "labels_hist.csv", std::ios::binary);
  csv << "tissue,sex,bin_lo,bin_hi,count\n";
  json summary;
  for (const int t : {0, 1}) {
    const char* tissue = t == 0 ? "vat" : "asat";
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : records) {
      const double v = t == 0 ? r.labels.vat_mm3 : r.labels.asat_mm3;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double width = (hi - lo) > 0 ? (hi - lo) / cfg.stats_bins : 1.0;
    for (const char sex : {'F', 'M'}) {
      std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.stats_bins), 0);
      double sum = 0.0;
      std::int64_t n = 0;
      for (const auto& r : records) {
        if (to_char(r.labels.sex_tag) != sex) continue;
        const double v = t == 0 ? r.labels.vat_mm3 : r.labels.asat_mm3;
        int b = static_cast<int>((v - lo) / width);
        b = std::clamp(b, 0, cfg.stats_bins - 1);
        ++counts[static_cast<std::size_t>(b)];
        sum += v;
        ++n;
      }
      for (int b = 0; b < cfg.stats_bins; ++b) {
        char line[160];
        std::snprintf(line, sizeof line, "%s,%c,%.10g,%.10g,%lld\n", tissue, sex, lo + b * width,
                      lo + (b + 1) * width, static_cast<long long>(counts[b]));
        csv << line;
      }
      summary[tissue][std::string(1, sex)] = {{"count", n}, {"mean", n > 0 ? sum / n : 0.0}};
    }
  }
  std::ofstream js(stage.dir / "stats.json", std::ios::binary);
  js << summary.dump(2) << "\n";
  stage.finish(cfg);
}

}  // namespace bodygraph
