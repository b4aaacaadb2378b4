// Differentiable layers with hand-written forward and backward passes:
// SAGE mean-aggregation graph convolution, batch normalization, global max
// pooling, dense layers and strided 2D convolution. All 64-bit, all
// deterministic; every backward is validated against central finite
// differences in the test suite.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "bodygraph/rng.hpp"

namespace bodygraph::nn {

// Row-major so per-node feature rows are contiguous for the aggregation and
// im2col loops; Eigen's GEMM handles the layout natively.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Mode { train, eval };
enum class Activation { identity, relu };

struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(Eigen::Index rows, Eigen::Index cols)
      : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}
  void zero_grad() { grad.setZero(); }
};

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Parameter& p, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

// Neighbor lists for mean aggregation over {v} ∪ N(v).
struct Adjacency {
  std::vector<std::int64_t> start;   // size n+1
  std::vector<std::int32_t> nbr;
  std::vector<double> inv_deg;       // 1 / (1 + degree)

  static Adjacency build(std::int64_t n, const std::vector<std::array<std::int32_t, 2>>& edges);
  std::int64_t node_count() const { return static_cast<std::int64_t>(inv_deg.size()); }
};

struct Linear {
  Parameter w;  // d_out x d_in
  Parameter b;  // d_out x 1

  Linear() = default;
  Linear(Eigen::Index d_in, Eigen::Index d_out, Rng& rng);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);  // accumulates w/b grads
  std::vector<Parameter*> parameters() { return {&w, &b}; }

 private:
  Matrix x_;
  bool has_cache_ = false;
};

struct Relu {
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);

 private:
  Matrix x_;
  bool has_cache_ = false;
};

struct BatchNorm1d {
  Parameter gamma;  // d x 1
  Parameter beta;   // d x 1
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(Eigen::Index d);
  // Train mode normalizes by batch statistics (throws on batches of one row)
  // and convexly mixes them into the running stats; eval mode uses the
  // frozen running stats.
  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters() { return {&gamma, &beta}; }

 private:
  Matrix x_hat_;
  Eigen::RowVectorXd inv_std_;
  Mode mode_ = Mode::train;
  bool has_cache_ = false;
};

// h_v = act(W · mean({x_v} ∪ {x_u, u ∈ N(v)}) + b); an isolated node's mean
// is its own feature row.
struct SageLayer {
  Parameter w;  // d_out x d_in
  Parameter b;  // d_out x 1
  Activation activation = Activation::identity;

  SageLayer() = default;
  SageLayer(Eigen::Index d_in, Eigen::Index d_out, Activation act, Rng& rng);
  Matrix forward(const Matrix& x, const Adjacency& adj);
  Matrix backward(const Matrix& grad_out);  // throws if no forward is cached
  std::vector<Parameter*> parameters() { return {&w, &b}; }

 private:
  const Adjacency* adj_ = nullptr;
  Matrix agg_;  // cached mean-aggregated input
  Matrix z_;    // cached pre-activation
  bool has_cache_ = false;
};

// Mean aggregation as a standalone op (also used by SageLayer):
// out_v = inv_deg_v * (x_v + sum_{u in N(v)} x_u).
Matrix aggregate_mean(const Matrix& x, const Adjacency& adj);
// Transpose of aggregate_mean (for backprop).
Matrix aggregate_mean_transpose(const Matrix& g, const Adjacency& adj);

// Per-graph componentwise max over node rows. graph_id must be non-decreasing
// and cover every graph in [0, b); a graph with zero nodes is an error.
struct GlobalMaxPool {
  Matrix forward(const Matrix& x, const std::vector<std::int32_t>& graph_id, std::int64_t b);
  Matrix backward(const Matrix& grad_out);  // routes gradients to the argmax rows

 private:
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> argmax_;
  std::int64_t n_rows_ = 0;
  bool has_cache_ = false;
};

// Dense layers with relu between them and identity at the output.
struct Mlp {
  std::vector<Linear> layers;
  std::vector<Relu> relus;

  Mlp() = default;
  Mlp(const std::vector<Eigen::Index>& widths, Rng& rng);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters();
};

// Dense NCHW image batch.
struct ImageBatch {
  std::int64_t b = 0, c = 0, h = 0, w = 0;
  Vector data;

  ImageBatch() = default;
  ImageBatch(std::int64_t b_, std::int64_t c_, std::int64_t h_, std::int64_t w_)
      : b(b_), c(c_), h(h_), w(w_), data(Vector::Zero(b_ * c_ * h_ * w_)) {}
  std::int64_t index(std::int64_t bi, std::int64_t ci, std::int64_t y, std::int64_t x) const {
    return ((bi * c + ci) * h + y) * w + x;
  }
  double& at(std::int64_t bi, std::int64_t ci, std::int64_t y, std::int64_t x) {
    return data[index(bi, ci, y, x)];
  }
  double at(std::int64_t bi, std::int64_t ci, std::int64_t y, std::int64_t x) const {
    return data[index(bi, ci, y, x)];
  }
};

// 2D convolution, square kernel, zero padding, im2col + GEMM inside.
struct Conv2d {
  Parameter w;  // c_out x (c_in * k * k)
  Parameter b;  // c_out x 1
  int c_in = 0, c_out = 0, kernel = 3, stride = 2, pad = 1;

  Conv2d() = default;
  Conv2d(int c_in_, int c_out_, int kernel_, int stride_, int pad_, Rng& rng);
  static std::int64_t out_extent(std::int64_t in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
  }
  ImageBatch forward(const ImageBatch& x);
  ImageBatch backward(const ImageBatch& grad_out);
  std::vector<Parameter*> parameters() { return {&w, &b}; }

 private:
  std::vector<Matrix> cols_;  // per-image im2col cache
  std::int64_t in_h_ = 0, in_w_ = 0, batch_ = 0;
  bool has_cache_ = false;
};

struct ReluImage {
  ImageBatch forward(const ImageBatch& x);
  ImageBatch backward(const ImageBatch& grad_out);

 private:
  ImageBatch x_;
  bool has_cache_ = false;
};

}  // namespace bodygraph::nn
