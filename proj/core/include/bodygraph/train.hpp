// Training and evaluation: shrinkage loss, Adam, 5-fold cross-validation
// with per-sex metric splits, and the decimation-level timing sweep.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodygraph/graph.hpp"
#include "bodygraph/models.hpp"

namespace bodygraph {

// Raised when a loss or gradient turns non-finite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// loss element = l^2 / (1 + exp(a * (c - l))) with l = |pred - target|;
// the logistic factor shrinks the contribution of small residuals.
struct ShrinkageCfg {
  double a = 10.0;
  double c = 0.2;
};

// Mean over all elements plus the exact gradient w.r.t. pred.
// Throws NumericError on non-finite inputs.
std::pair<double, nn::Matrix> shrinkage_loss(const nn::Matrix& pred, const nn::Matrix& target,
                                             const ShrinkageCfg& cfg);

struct AdamCfg {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, AdamCfg cfg);
  void step();
  void zero_grad();
  int step_count() const { return t_; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<nn::Matrix> m_, v_;
  AdamCfg cfg_;
  int t_ = 0;
};

struct FoldSplit {
  struct Fold {
    std::vector<int> train, val, test;
  };
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// Deterministic shuffle, k contiguous blocks; fold f uses block f as test,
// block (f+1) mod k as validation, the rest as training. Needs k >= 3, n >= k.
FoldSplit kfold_split(int n, int k, std::uint64_t seed);

// 1 - SS_res / SS_tot about the target mean. Needs >= 2 samples and positive
// target variance (std::invalid_argument otherwise).
double r2(const std::vector<double>& preds, const std::vector<double>& targets);

// Per-sex R^2 on (vat, asat) prediction columns; an entry is absent when its
// group has fewer than 2 samples or zero target variance.
struct PerSexR2 {
  std::optional<double> vat_female, asat_female, vat_male, asat_male;
};
PerSexR2 per_sex_r2(const nn::Matrix& preds, const nn::Matrix& targets,
                    const std::vector<SexTag>& sex);

// Per-target z-scoring fit on the training fold; R^2 is computed after the
// inverse transform.
struct TargetScaler {
  Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
  Eigen::RowVector2d std = Eigen::RowVector2d::Ones();

  static TargetScaler fit(const nn::Matrix& y);
  nn::Matrix apply(const nn::Matrix& y) const;
  nn::Matrix invert(const nn::Matrix& y_scaled) const;
};

struct TrainCfg {
  std::string model_kind = "gnn";  // "gnn" | "cnn"
  int hidden = 64;
  std::array<int, 3> cnn_channels{16, 32, 64};
  int epochs = 150;       // the CLI maps its cnn_epochs default (20) here
  int batch_size = 16;
  AdamCfg adam;
  ShrinkageCfg shrinkage;
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<int> fold_filter;  // empty = run all folds
  bool report_timing = true;     // false writes empty timing columns (bit-stable CSVs)
  int decimation = 0;            // metadata carried into reports
  std::string checkpoint_base;   // non-empty: save per-fold best models + scalers there
};

struct FoldResult {
  int fold = 0;
  double r2_vat = 0.0, r2_asat = 0.0;
  std::optional<double> r2_vat_female, r2_asat_female;
  std::optional<double> r2_vat_male, r2_asat_male;
  double epoch_seconds_mean = 0.0;  // training loop only
  double train_seconds = 0.0;
  std::vector<double> val_loss_history;
  double best_val_loss = 0.0;
  int best_epoch = -1;
};

struct MetricsReport {
  std::string model_kind;
  int decimation = 0;
  int folds_requested = 0;
  std::vector<FoldResult> folds;
  double mean_r2_vat = 0.0, std_r2_vat = 0.0;
  double mean_r2_asat = 0.0, std_r2_asat = 0.0;
  double total_minutes = 0.0;  // training loops only
  bool report_timing = true;
  std::string split_scheme = "5-fold, 3/1/1 train/val/test blocks";
};

// One silhouette pair per subject, flattened to a 2*h*w vector (coronal
// channel first), all at one fixed resolution.
struct ImageDataset {
  std::int64_t h = 0, w = 0;
  std::vector<Eigen::VectorXd> images;
  std::vector<Eigen::Vector2d> y;
  std::vector<SexTag> sex;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
};

struct TrainDataset {
  std::vector<RegressionGraph> graphs;  // used when model_kind == "gnn"
  ImageDataset images;                  // used when model_kind == "cnn"

  std::size_t size(const std::string& kind) const {
    return kind == "gnn" ? graphs.size() : images.size();
  }
};

// Cross-validated training: per fold, train for cfg.epochs, keep the
// checkpoint with the best validation loss, then report test R^2 per target
// and per sex tag. Test-fold samples never influence scalers, training or
// model selection. Deterministic given cfg.seed.
MetricsReport train_model(const TrainDataset& dataset, const TrainCfg& cfg,
                          const FoldSplit& folds);

// Convenience: split internally with cfg.folds and cfg.seed.
MetricsReport train_model(const TrainDataset& dataset, const TrainCfg& cfg);

struct SweepLevel {
  int faces = 0;
  bool present = false;
  double epoch_seconds = 0.0;
  double r2_vat = 0.0, r2_asat = 0.0;
  std::int64_t nodes = 0;
};

struct SweepResult {
  std::vector<SweepLevel> levels;
  double slope = 0.0;      // seconds per face
  double intercept = 0.0;  // seconds
  double fit_r2 = 0.0;     // of the time-vs-faces linear fit
};

// Trains at each decimation level (missing levels are skipped) and fits
// per-epoch seconds against face count. Runs sequentially so timings stay
// valid.
SweepResult timing_sweep(const std::map<int, std::vector<RegressionGraph>>& graphs_per_level,
                         const std::vector<int>& levels, const TrainCfg& cfg);

// Frozen per-fold scalers, persisted next to the fold checkpoint.
struct FoldScalers {
  FeatureScaler features;  // meaningful for graph models only
  bool has_features = false;
  TargetScaler targets;
};
void save_fold_scalers(const std::string& path, const FoldScalers& s);
FoldScalers load_fold_scalers(const std::string& path);

// MetricsReport serialization: JSON (full) and CSV with columns
// (tissue, model, decimation, fold, r2, r2_female, r2_male, epoch_seconds,
// total_minutes).
void save_metrics_json(const std::string& path, const MetricsReport& report);
void save_metrics_csv(const std::string& path, const MetricsReport& report);
// Sweep CSV: faces, epoch_seconds, r2_vat, r2_asat [, kwh_per_epoch].
void save_sweep_csv(const std::string& path, const SweepResult& sweep, double device_watts);
void save_sweep_json(const std::string& path, const SweepResult& sweep, double device_watts);

}  // namespace bodygraph
