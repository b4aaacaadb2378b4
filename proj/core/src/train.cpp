#include "bodygraph/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "bodygraph/rng.hpp"
#include "json.hpp"

namespace bodygraph {

std::pair<double, nn::Matrix> shrinkage_loss(const nn::Matrix& pred, const nn::Matrix& target,
                                             const ShrinkageCfg& cfg) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("shrinkage_loss: shape mismatch");
  if (!pred.allFinite() || !target.allFinite())
    throw NumericError("shrinkage_loss: non-finite inputs");

  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  nn::Matrix grad(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const double diff = pred(i, j) - target(i, j);
      const double l = std::abs(diff);
      const double sig = 1.0 / (1.0 + std::exp(cfg.a * (cfg.c - l)));  // logistic in l
      loss += l * l * sig;
      // d/dl [l^2 sig] = 2 l sig + a l^2 sig (1 - sig); chain through |.|
      const double dl = 2.0 * l * sig + cfg.a * l * l * sig * (1.0 - sig);
      grad(i, j) = inv_n * dl * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
    }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw NumericError("shrinkage_loss: non-finite loss");
  return {loss, std::move(grad)};
}

Adam::Adam(std::vector<nn::Parameter*> params, AdamCfg cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0) || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0)
    throw std::invalid_argument("Adam: invalid configuration");
  for (auto* p : params_) {
    m_.push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

FoldSplit kfold_split(int n, int k, std::uint64_t seed) {
  // k >= 3 keeps the test, validation and training blocks distinct.
  if (k < 3) throw std::invalid_argument("kfold_split: k must be >= 3");
  if (n < k) throw std::invalid_argument("kfold_split: n too small for k folds");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);

  std::vector<std::vector<int>> blocks(k);
  const int base = n / k, extra = n % k;
  int cursor = 0;
  for (int b = 0; b < k; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    blocks[b].assign(order.begin() + cursor, order.begin() + cursor + size);
    cursor += size;
  }

  FoldSplit split;
  split.k = k;
  split.seed = seed;
  for (int f = 0; f < k; ++f) {
    FoldSplit::Fold fold;
    fold.test = blocks[f];
    fold.val = blocks[(f + 1) % k];
    for (int b = 0; b < k; ++b)
      if (b != f && b != (f + 1) % k)
        fold.train.insert(fold.train.end(), blocks[b].begin(), blocks[b].end());
    split.folds.push_back(std::move(fold));
  }
  return split;
}

double r2(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.size() != targets.size()) throw std::invalid_argument("r2: size mismatch");
  if (preds.size() < 2) throw std::invalid_argument("r2: need at least 2 samples");
  const double n = static_cast<double>(targets.size());
  double mean = 0.0;
  for (const double t : targets) mean += t;
  mean /= n;
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
    ss_res += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  }
  if (ss_tot <= 0.0) throw std::invalid_argument("r2: zero target variance");
  return 1.0 - ss_res / ss_tot;
}

TargetScaler TargetScaler::fit(const nn::Matrix& y) {
  if (y.rows() < 2) throw std::invalid_argument("TargetScaler: need >= 2 rows");
  TargetScaler s;
  s.mean = y.colwise().mean();
  const Eigen::RowVector2d var =
      (y.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(y.rows());
  s.std = var.cwiseSqrt().cwiseMax(1e-12);
  return s;
}

nn::Matrix TargetScaler::apply(const nn::Matrix& y) const {
  return (y.rowwise() - mean).array().rowwise() / std.array();
}

nn::Matrix TargetScaler::invert(const nn::Matrix& y_scaled) const {
  return (y_scaled.array().rowwise() * std.array()).rowwise() + mean.array();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(const Clock::time_point& t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> folds_to_run(const TrainCfg& cfg, int k) {
  if (cfg.fold_filter.empty()) {
    std::vector<int> all(k);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  for (const int f : cfg.fold_filter)
    if (f < 0 || f >= k) throw std::invalid_argument("fold_filter index out of range");
  return cfg.fold_filter;
}

}  // namespace

PerSexR2 per_sex_r2(const nn::Matrix& preds, const nn::Matrix& targets,
                    const std::vector<SexTag>& sex) {
  PerSexR2 out;
  for (const SexTag tag : {SexTag::F, SexTag::M}) {
    std::vector<double> pv, tv, pa, ta;
    for (std::size_t i = 0; i < sex.size(); ++i)
      if (sex[i] == tag) {
        const auto r = static_cast<Eigen::Index>(i);
        pv.push_back(preds(r, 0));
        tv.push_back(targets(r, 0));
        pa.push_back(preds(r, 1));
        ta.push_back(targets(r, 1));
      }
    if (pv.size() < 2) continue;
    try {
      const double rv = r2(pv, tv);
      const double ra = r2(pa, ta);
      if (tag == SexTag::F) {
        out.vat_female = rv;
        out.asat_female = ra;
      } else {
        out.vat_male = rv;
        out.asat_male = ra;
      }
    } catch (const std::invalid_argument&) {
      // zero variance within the group: entry stays unavailable
    }
  }
  return out;
}

namespace {

struct Snapshot {
  std::vector<nn::Matrix> values;
  std::vector<nn::Vector> buffers;
};

template <typename Model>
Snapshot take_snapshot(Model& model, const std::vector<nn::Vector*>& buffers) {
  Snapshot s;
  for (auto* p : model.parameters()) s.values.push_back(p->value);
  for (auto* b : buffers) s.buffers.push_back(*b);
  return s;
}

template <typename Model>
void restore_snapshot(Model& model, const std::vector<nn::Vector*>& buffers, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i] = s.buffers[i];
}

std::vector<nn::Vector*> bn_buffers(nn::GnnModel& m) {
  return {&m.bn1.running_mean, &m.bn1.running_var, &m.bn2.running_mean,
          &m.bn2.running_var, &m.bn3.running_mean, &m.bn3.running_var};
}

nn::ImageBatch gather_images(const ImageDataset& data, const std::vector<int>& idx) {
  nn::ImageBatch batch(static_cast<std::int64_t>(idx.size()), 2, data.h, data.w);
  const std::int64_t stride = 2 * data.h * data.w;
  for (std::size_t i = 0; i < idx.size(); ++i)
    batch.data.segment(static_cast<std::int64_t>(i) * stride, stride) = data.images[idx[i]];
  return batch;
}

nn::Matrix gather_targets_graphs(const std::vector<RegressionGraph>& graphs,
                                 const std::vector<int>& idx) {
  nn::Matrix y(static_cast<Eigen::Index>(idx.size()), 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    y.row(static_cast<Eigen::Index>(i)) = graphs[idx[i]].y.transpose();
  return y;
}

nn::Matrix gather_targets_images(const ImageDataset& data, const std::vector<int>& idx) {
  nn::Matrix y(static_cast<Eigen::Index>(idx.size()), 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    y.row(static_cast<Eigen::Index>(i)) = data.y[idx[i]].transpose();
  return y;
}

std::vector<std::vector<int>> minibatches(std::vector<int> order, int batch_size, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<int>> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + lo, order.begin() + hi);
  }
  return batches;
}

FoldResult train_gnn_fold(const std::vector<RegressionGraph>& all, const TrainCfg& cfg,
                          const FoldSplit::Fold& fold, int fold_index) {
  // Scalers come from the training fold only.
  std::vector<RegressionGraph> train_graphs;
  for (const int i : fold.train) train_graphs.push_back(all[i]);
  const FeatureScaler fscale = FeatureScaler::fit(train_graphs);
  const TargetScaler tscale = TargetScaler::fit(gather_targets_graphs(all, fold.train));

  auto scaled_graph = [&](int i) {
    RegressionGraph g = fscale.apply(all[i]);
    g.y = tscale.apply(g.y.transpose()).transpose();
    return g;
  };

  std::vector<RegressionGraph> train_scaled, val_scaled;
  for (const int i : fold.train) train_scaled.push_back(scaled_graph(i));
  for (const int i : fold.val) val_scaled.push_back(scaled_graph(i));
  const GraphBatch val_batch = batch(val_scaled);

  nn::GnnModel model(cfg.hidden, derive_seed(cfg.seed, 0xABCD + fold_index));
  Adam adam(model.parameters(), cfg.adam);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5EED + fold_index));

  FoldResult result;
  result.fold = fold_index;
  Snapshot best;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<int> local(train_scaled.size());
  std::iota(local.begin(), local.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    for (const auto& mb : minibatches(local, cfg.batch_size, shuffle_rng)) {
      std::vector<RegressionGraph> graphs;
      graphs.reserve(mb.size());
      for (const int i : mb) graphs.push_back(train_scaled[i]);
      const GraphBatch gb = batch(graphs);
      adam.zero_grad();
      const nn::Matrix pred = model.forward(gb, nn::Mode::train);
      auto [loss, grad] = shrinkage_loss(pred, gb.y, cfg.shrinkage);
      (void)loss;
      model.backward(grad);
      adam.step();
    }
    result.train_seconds += seconds_since(t0);

    const nn::Matrix val_pred = model.forward(val_batch, nn::Mode::eval);
    const double val_loss = shrinkage_loss(val_pred, val_batch.y, cfg.shrinkage).first;
    result.val_loss_history.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = take_snapshot(model, bn_buffers(model));
      result.best_epoch = epoch;
    }
  }
  result.best_val_loss = best_val;
  result.epoch_seconds_mean = result.train_seconds / std::max(1, cfg.epochs);

  // Test evaluation happens only now, with the best checkpoint restored.
  restore_snapshot(model, bn_buffers(model), best);
  std::vector<RegressionGraph> test_scaled;
  std::vector<SexTag> test_sex;
  for (const int i : fold.test) {
    test_scaled.push_back(fscale.apply(all[i]));  // y left raw; not fed to the model
    test_sex.push_back(all[i].sex_tag);
  }
  const GraphBatch test_batch = batch(test_scaled);
  const nn::Matrix pred_raw = tscale.invert(model.forward(test_batch, nn::Mode::eval));
  const nn::Matrix target_raw = gather_targets_graphs(all, fold.test);

  std::vector<double> pv, tv, pa, ta;
  for (Eigen::Index i = 0; i < pred_raw.rows(); ++i) {
    pv.push_back(pred_raw(i, 0));
    tv.push_back(target_raw(i, 0));
    pa.push_back(pred_raw(i, 1));
    ta.push_back(target_raw(i, 1));
  }
  result.r2_vat = r2(pv, tv);
  result.r2_asat = r2(pa, ta);
  const PerSexR2 split = per_sex_r2(pred_raw, target_raw, test_sex);
  result.r2_vat_female = split.vat_female;
  result.r2_asat_female = split.asat_female;
  result.r2_vat_male = split.vat_male;
  result.r2_asat_male = split.asat_male;

  if (!cfg.checkpoint_base.empty()) {
    const std::string base = cfg.checkpoint_base + "_fold" + std::to_string(fold_index);
    nn::save_checkpoint(base, model);
    FoldScalers scalers;
    scalers.features = fscale;
    scalers.has_features = true;
    scalers.targets = tscale;
    save_fold_scalers(base + ".scalers.json", scalers);
  }
  return result;
}

FoldResult train_cnn_fold(const ImageDataset& data, const TrainCfg& cfg,
                          const FoldSplit::Fold& fold, int fold_index) {
  const TargetScaler tscale = TargetScaler::fit(gather_targets_images(data, fold.train));

  nn::CnnModel model(data.h, data.w, cfg.cnn_channels, cfg.hidden,
                     derive_seed(cfg.seed, 0xABCD + fold_index));
  Adam adam(model.parameters(), cfg.adam);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5EED + fold_index));

  const nn::ImageBatch val_images = gather_images(data, fold.val);
  const nn::Matrix val_y = tscale.apply(gather_targets_images(data, fold.val));

  FoldResult result;
  result.fold = fold_index;
  Snapshot best;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<int> local(fold.train.begin(), fold.train.end());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<int> order(local.size());
    std::iota(order.begin(), order.end(), 0);
    for (const auto& mb : minibatches(order, cfg.batch_size, shuffle_rng)) {
      std::vector<int> idx;
      idx.reserve(mb.size());
      for (const int i : mb) idx.push_back(local[i]);
      const nn::ImageBatch images = gather_images(data, idx);
      const nn::Matrix y = tscale.apply(gather_targets_images(data, idx));
      adam.zero_grad();
      const nn::Matrix pred = model.forward(images, nn::Mode::train);
      auto [loss, grad] = shrinkage_loss(pred, y, cfg.shrinkage);
      (void)loss;
      model.backward(grad);
      adam.step();
    }
    result.train_seconds += seconds_since(t0);

    const nn::Matrix val_pred = model.forward(val_images, nn::Mode::eval);
    const double val_loss = shrinkage_loss(val_pred, val_y, cfg.shrinkage).first;
    result.val_loss_history.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = take_snapshot(model, {});
      result.best_epoch = epoch;
    }
  }
  result.best_val_loss = best_val;
  result.epoch_seconds_mean = result.train_seconds / std::max(1, cfg.epochs);

  restore_snapshot(model, {}, best);
  const nn::ImageBatch test_images = gather_images(data, fold.test);
  const nn::Matrix pred_raw = tscale.invert(model.forward(test_images, nn::Mode::eval));
  const nn::Matrix target_raw = gather_targets_images(data, fold.test);
  std::vector<SexTag> test_sex;
  for (const int i : fold.test) test_sex.push_back(data.sex[i]);

  std::vector<double> pv, tv, pa, ta;
  for (Eigen::Index i = 0; i < pred_raw.rows(); ++i) {
    pv.push_back(pred_raw(i, 0));
    tv.push_back(target_raw(i, 0));
    pa.push_back(pred_raw(i, 1));
    ta.push_back(target_raw(i, 1));
  }
  result.r2_vat = r2(pv, tv);
  result.r2_asat = r2(pa, ta);
  const PerSexR2 split = per_sex_r2(pred_raw, target_raw, test_sex);
  result.r2_vat_female = split.vat_female;
  result.r2_asat_female = split.asat_female;
  result.r2_vat_male = split.vat_male;
  result.r2_asat_male = split.asat_male;

  if (!cfg.checkpoint_base.empty()) {
    const std::string base = cfg.checkpoint_base + "_fold" + std::to_string(fold_index);
    nn::save_checkpoint(base, model);
    FoldScalers scalers;
    scalers.targets = tscale;
    save_fold_scalers(base + ".scalers.json", scalers);
  }
  return result;
}

void finalize_report(MetricsReport& report) {
  const auto n = static_cast<double>(report.folds.size());
  if (n == 0) return;
  double sv = 0, sa = 0;
  for (const auto& f : report.folds) {
    sv += f.r2_vat;
    sa += f.r2_asat;
    report.total_minutes += f.train_seconds / 60.0;
  }
  report.mean_r2_vat = sv / n;
  report.mean_r2_asat = sa / n;
  double vv = 0, va = 0;
  for (const auto& f : report.folds) {
    vv += (f.r2_vat - report.mean_r2_vat) * (f.r2_vat - report.mean_r2_vat);
    va += (f.r2_asat - report.mean_r2_asat) * (f.r2_asat - report.mean_r2_asat);
  }
  report.std_r2_vat = std::sqrt(vv / n);
  report.std_r2_asat = std::sqrt(va / n);
}

}  // namespace

MetricsReport train_model(const TrainDataset& dataset, const TrainCfg& cfg,
                          const FoldSplit& folds) {
  if (cfg.model_kind != "gnn" && cfg.model_kind != "cnn")
    throw std::invalid_argument("train_model: model_kind must be gnn or cnn");

  MetricsReport report;
  report.model_kind = cfg.model_kind;
  report.decimation = cfg.decimation;
  report.folds_requested = folds.k;
  report.report_timing = cfg.report_timing;
  report.split_scheme = std::to_string(folds.k) + "-fold, 3/1/1 train/val/test blocks";

  for (const int f : folds_to_run(cfg, folds.k)) {
    if (cfg.model_kind == "gnn")
      report.folds.push_back(train_gnn_fold(dataset.graphs, cfg, folds.folds[f], f));
    else
      report.folds.push_back(train_cnn_fold(dataset.images, cfg, folds.folds[f], f));
  }
  finalize_report(report);
  return report;
}

MetricsReport train_model(const TrainDataset& dataset, const TrainCfg& cfg) {
  const auto n = static_cast<int>(dataset.size(cfg.model_kind));
  return train_model(dataset, cfg, kfold_split(n, cfg.folds, cfg.seed));
}

SweepResult timing_sweep(const std::map<int, std::vector<RegressionGraph>>& graphs_per_level,
                         const std::vector<int>& levels, const TrainCfg& cfg) {
  SweepResult sweep;
  for (const int faces : levels) {
    SweepLevel level;
    level.faces = faces;
    const auto it = graphs_per_level.find(faces);
    if (it == graphs_per_level.end() || it->second.empty()) {
      std::fprintf(stderr, "timing_sweep: level %d missing, skipped\n", faces);
      sweep.levels.push_back(level);
      continue;
    }
    TrainCfg level_cfg = cfg;
    level_cfg.model_kind = "gnn";
    level_cfg.decimation = faces;
    TrainDataset ds;
    ds.graphs = it->second;
    const MetricsReport report = train_model(ds, level_cfg);
    level.present = true;
    double total = 0.0;
    for (const auto& f : report.folds) total += f.epoch_seconds_mean;
    level.epoch_seconds = total / static_cast<double>(report.folds.size());
    level.r2_vat = report.mean_r2_vat;
    level.r2_asat = report.mean_r2_asat;
    level.nodes = it->second.front().node_count();
    sweep.levels.push_back(level);
  }

  // Least squares epoch_seconds = slope * faces + intercept over present levels.
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& l : sweep.levels)
    if (l.present) {
      n += 1;
      sx += l.faces;
      sy += l.epoch_seconds;
      sxx += static_cast<double>(l.faces) * l.faces;
      sxy += l.faces * l.epoch_seconds;
    }
  if (n >= 2) {
    const double denom = n * sxx - sx * sx;
    sweep.slope = (n * sxy - sx * sy) / denom;
    sweep.intercept = (sy - sweep.slope * sx) / n;
    double ss_tot = 0, ss_res = 0;
    const double mean_y = sy / n;
    for (const auto& l : sweep.levels)
      if (l.present) {
        const double fit = sweep.slope * l.faces + sweep.intercept;
        ss_tot += (l.epoch_seconds - mean_y) * (l.epoch_seconds - mean_y);
        ss_res += (l.epoch_seconds - fit) * (l.epoch_seconds - fit);
      }
    sweep.fit_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  }
  return sweep;
}

namespace {

nlohmann::json fold_to_json(const FoldResult& f, bool with_timing) {
  nlohmann::json o;
  o["fold"] = f.fold;
  o["r2_vat"] = f.r2_vat;
  o["r2_asat"] = f.r2_asat;
  auto put_opt = [&](const char* key, const std::optional<double>& v) {
    if (v) o[key] = *v;
  };
  put_opt("r2_vat_female", f.r2_vat_female);
  put_opt("r2_asat_female", f.r2_asat_female);
  put_opt("r2_vat_male", f.r2_vat_male);
  put_opt("r2_asat_male", f.r2_asat_male);
  if (with_timing) {
    o["epoch_seconds_mean"] = f.epoch_seconds_mean;
    o["train_seconds"] = f.train_seconds;
  }
  o["best_epoch"] = f.best_epoch;
  o["best_val_loss"] = f.best_val_loss;
  o["val_loss_history"] = f.val_loss_history;
  return o;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void save_fold_scalers(const std::string& path, const FoldScalers& s) {
  nlohmann::json j;
  if (s.has_features) {
    j["feature_mean"] = {s.features.mean[0], s.features.mean[1], s.features.mean[2]};
    j["feature_std"] = {s.features.std[0], s.features.std[1], s.features.std[2]};
  }
  j["target_mean"] = {s.targets.mean[0], s.targets.mean[1]};
  j["target_std"] = {s.targets.std[0], s.targets.std[1]};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << j.dump(2) << "\n";
}

FoldScalers load_fold_scalers(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read: " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  FoldScalers s;
  if (j.contains("feature_mean")) {
    s.has_features = true;
    for (int k = 0; k < 3; ++k) {
      s.features.mean[k] = j["feature_mean"][k].get<double>();
      s.features.std[k] = j["feature_std"][k].get<double>();
    }
  }
  for (int k = 0; k < 2; ++k) {
    s.targets.mean[k] = j["target_mean"][k].get<double>();
    s.targets.std[k] = j["target_std"][k].get<double>();
  }
  return s;
}

void save_metrics_json(const std::string& path, const MetricsReport& report) {
  nlohmann::json j;
  j["model"] = report.model_kind;
  j["decimation"] = report.decimation;
  j["folds_requested"] = report.folds_requested;
  j["split_scheme"] = report.split_scheme;
  j["mean_r2_vat"] = report.mean_r2_vat;
  j["std_r2_vat"] = report.std_r2_vat;
  j["mean_r2_asat"] = report.mean_r2_asat;
  j["std_r2_asat"] = report.std_r2_asat;
  if (report.report_timing) j["total_minutes"] = report.total_minutes;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : report.folds) j["folds"].push_back(fold_to_json(f, report.report_timing));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << j.dump(2) << "\n";
}

void save_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << "tissue,model,decimation,fold,r2,r2_female,r2_male,epoch_seconds,total_minutes\n";
  const std::string timing_total = report.report_timing ? fmt(report.total_minutes) : "";
  for (const char* tissue : {"vat", "asat"}) {
    const bool vat = std::string(tissue) == "vat";
    for (const auto& f : report.folds) {
      out << tissue << ',' << report.model_kind << ',' << report.decimation << ',' << f.fold << ','
          << fmt(vat ? f.r2_vat : f.r2_asat) << ','
          << fmt_opt(vat ? f.r2_vat_female : f.r2_asat_female) << ','
          << fmt_opt(vat ? f.r2_vat_male : f.r2_asat_male) << ','
          << (report.report_timing ? fmt(f.epoch_seconds_mean) : "") << ',' << timing_total
          << '\n';
    }
  }
}

void save_sweep_csv(const std::string& path, const SweepResult& sweep, double device_watts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << "faces,epoch_seconds,r2_vat,r2_asat";
  if (device_watts > 0) out << ",kwh_per_epoch";
  out << '\n';
  for (const auto& l : sweep.levels) {
    if (!l.present) continue;
    out << l.faces << ',' << fmt(l.epoch_seconds) << ',' << fmt(l.r2_vat) << ',' << fmt(l.r2_asat);
    if (device_watts > 0) out << ',' << fmt(l.epoch_seconds * device_watts / 3.6e6);
    out << '\n';
  }
}

void save_sweep_json(const std::string& path, const SweepResult& sweep, double device_watts) {
  nlohmann::json j;
  j["slope_seconds_per_face"] = sweep.slope;
  j["intercept_seconds"] = sweep.intercept;
  j["fit_r2"] = sweep.fit_r2;
  if (device_watts > 0) j["device_watts"] = device_watts;
  j["levels"] = nlohmann::json::array();
  for (const auto& l : sweep.levels) {
    nlohmann::json o;
    o["faces"] = l.faces;
    o["present"] = l.present;
    if (l.present) {
      o["epoch_seconds"] = l.epoch_seconds;
      o["r2_vat"] = l.r2_vat;
      o["r2_asat"] = l.r2_asat;
      o["nodes"] = l.nodes;
      if (device_watts > 0) o["kwh_per_epoch"] = l.epoch_seconds * device_watts / 3.6e6;
    }
    j["levels"].push_back(o);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace bodygraph
