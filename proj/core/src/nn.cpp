#include "bodygraph/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bodygraph::nn {

void glorot_init(Parameter& p, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j)
      p.value(i, j) = rng.uniform(-limit, limit);
}

Adjacency Adjacency::build(std::int64_t n, const std::vector<std::array<std::int32_t, 2>>& edges) {
  Adjacency adj;
  std::vector<std::int64_t> degree(n, 0);
  for (const auto& e : edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= n || e[1] >= n)
      throw std::invalid_argument("adjacency: edge references a node out of range");
    if (e[0] == e[1]) throw std::invalid_argument("adjacency: self-loop");
    ++degree[e[0]];
    ++degree[e[1]];
  }
  adj.start.resize(n + 1, 0);
  for (std::int64_t v = 0; v < n; ++v) adj.start[v + 1] = adj.start[v] + degree[v];
  adj.nbr.resize(adj.start[n]);
  std::vector<std::int64_t> cursor(adj.start.begin(), adj.start.end() - 1);
  for (const auto& e : edges) {
    adj.nbr[cursor[e[0]]++] = e[1];
    adj.nbr[cursor[e[1]]++] = e[0];
  }
  adj.inv_deg.resize(n);
  for (std::int64_t v = 0; v < n; ++v) adj.inv_deg[v] = 1.0 / (1.0 + static_cast<double>(degree[v]));
  return adj;
}

Matrix aggregate_mean(const Matrix& x, const Adjacency& adj) {
  const std::int64_t n = adj.node_count();
  if (x.rows() != n) throw std::invalid_argument("aggregate_mean: row count mismatch");
  const auto d = x.cols();
  Matrix out(n, d);
  const double* src = x.data();
  double* dst = out.data();
  for (std::int64_t v = 0; v < n; ++v) {
    double* row = dst + v * d;
    const double* self = src + v * d;
    for (Eigen::Index j = 0; j < d; ++j) row[j] = self[j];
    for (std::int64_t i = adj.start[v]; i < adj.start[v + 1]; ++i) {
      const double* nb = src + static_cast<std::int64_t>(adj.nbr[i]) * d;
      for (Eigen::Index j = 0; j < d; ++j) row[j] += nb[j];
    }
    const double s = adj.inv_deg[v];
    for (Eigen::Index j = 0; j < d; ++j) row[j] *= s;
  }
  return out;
}

Matrix aggregate_mean_transpose(const Matrix& g, const Adjacency& adj) {
  const std::int64_t n = adj.node_count();
  if (g.rows() != n) throw std::invalid_argument("aggregate_mean_transpose: row count mismatch");
  const auto d = g.cols();
  Matrix scaled(n, d);
  for (std::int64_t v = 0; v < n; ++v)
    scaled.row(v) = g.row(v) * adj.inv_deg[v];
  Matrix out = scaled;
  const double* src = scaled.data();
  double* dst = out.data();
  for (std::int64_t v = 0; v < n; ++v) {
    double* row = dst + v * d;
    for (std::int64_t i = adj.start[v]; i < adj.start[v + 1]; ++i) {
      const double* nb = src + static_cast<std::int64_t>(adj.nbr[i]) * d;
      for (Eigen::Index j = 0; j < d; ++j) row[j] += nb[j];
    }
  }
  return out;
}

Linear::Linear(Eigen::Index d_in, Eigen::Index d_out, Rng& rng) : w(d_out, d_in), b(d_out, 1) {
  glorot_init(w, d_in, d_out, rng);
}

Matrix Linear::forward(const Matrix& x) {
  x_ = x;
  has_cache_ = true;
  Matrix z(x.rows(), w.value.rows());
  z.noalias() = x * w.value.transpose();
  z.rowwise() += b.value.col(0).transpose();
  return z;
}

Matrix Linear::backward(const Matrix& grad_out) {
  if (!has_cache_) throw std::logic_error("Linear::backward without forward");
  w.grad.noalias() += grad_out.transpose() * x_;
  b.grad.col(0).noalias() += grad_out.colwise().sum().transpose();
  return grad_out * w.value;
}

Matrix Relu::forward(const Matrix& x) {
  x_ = x;
  has_cache_ = true;
  return x.cwiseMax(0.0);
}

Matrix Relu::backward(const Matrix& grad_out) {
  if (!has_cache_) throw std::logic_error("Relu::backward without forward");
  return (x_.array() > 0.0).cast<double>() * grad_out.array();
}

BatchNorm1d::BatchNorm1d(Eigen::Index d)
    : gamma(d, 1), beta(d, 1), running_mean(Vector::Zero(d)), running_var(Vector::Ones(d)) {
  gamma.value.setOnes();
}

Matrix BatchNorm1d::forward(const Matrix& x, Mode mode) {
  mode_ = mode;
  has_cache_ = true;
  const auto n = x.rows();
  if (mode == Mode::train) {
    if (n < 2) throw std::invalid_argument("BatchNorm1d: train mode needs a batch of >= 2 rows");
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::RowVectorXd var =
        (x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n);
    inv_std_ = (var.array() + eps).rsqrt();
    x_hat_ = (x.rowwise() - mu).array().rowwise() * inv_std_.array();

    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    running_mean = (1.0 - momentum) * running_mean + momentum * mu.transpose();
    running_var = (1.0 - momentum) * running_var + momentum * (unbias * var.transpose());
  } else {
    inv_std_ = (running_var.transpose().array() + eps).rsqrt();
    x_hat_ = (x.rowwise() - running_mean.transpose()).array().rowwise() * inv_std_.array();
  }
  return (x_hat_.array().rowwise() * gamma.value.col(0).transpose().array()).rowwise() +
         beta.value.col(0).transpose().array();
}

Matrix BatchNorm1d::backward(const Matrix& grad_out) {
  if (!has_cache_) throw std::logic_error("BatchNorm1d::backward without forward");
  gamma.grad.col(0).noalias() += (grad_out.array() * x_hat_.array()).colwise().sum().matrix().transpose();
  beta.grad.col(0).noalias() += grad_out.colwise().sum().transpose();

  const Matrix g_hat = grad_out.array().rowwise() * gamma.value.col(0).transpose().array();
  if (mode_ == Mode::eval) return g_hat.array().rowwise() * inv_std_.array();

  const double n = static_cast<double>(grad_out.rows());
  const Eigen::RowVectorXd sum_g = g_hat.colwise().sum();
  const Eigen::RowVectorXd sum_gx = (g_hat.array() * x_hat_.array()).colwise().sum();
  // dx = inv_std/n * (n*g_hat - sum(g_hat) - x_hat * sum(g_hat .* x_hat))
  Matrix dx = n * g_hat;
  dx.rowwise() -= sum_g;
  dx -= (x_hat_.array().rowwise() * sum_gx.array()).matrix();
  return dx.array().rowwise() * (inv_std_.array() / n);
}

SageLayer::SageLayer(Eigen::Index d_in, Eigen::Index d_out, Activation act, Rng& rng)
    : w(d_out, d_in), b(d_out, 1), activation(act) {
  glorot_init(w, d_in, d_out, rng);
}

Matrix SageLayer::forward(const Matrix& x, const Adjacency& adj) {
  adj_ = &adj;
  agg_ = aggregate_mean(x, adj);
  z_.resize(agg_.rows(), w.value.rows());
  z_.noalias() = agg_ * w.value.transpose();
  z_.rowwise() += b.value.col(0).transpose();
  has_cache_ = true;
  return activation == Activation::relu ? z_.cwiseMax(0.0) : z_;
}

Matrix SageLayer::backward(const Matrix& grad_out) {
  if (!has_cache_) throw std::logic_error("SageLayer::backward without forward");
  Matrix g = grad_out;
  if (activation == Activation::relu)
    g = (z_.array() > 0.0).cast<double>() * grad_out.array();
  w.grad.noalias() += g.transpose() * agg_;
  b.grad.col(0).noalias() += g.colwise().sum().transpose();
  const Matrix d_agg = g * w.value;
  return aggregate_mean_transpose(d_agg, *adj_);
}

Matrix GlobalMaxPool::forward(const Matrix& x, const std::vector<std::int32_t>& graph_id,
                              std::int64_t b) {
  if (static_cast<std::int64_t>(graph_id.size()) != x.rows())
    throw std::invalid_argument("global_max_pool: graph_id size mismatch");
  Matrix out = Matrix::Constant(b, x.cols(), -std::numeric_limits<double>::infinity());
  argmax_.setConstant(b, x.cols(), -1);
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    const std::int32_t g = graph_id[i];
    if (g < 0 || g >= b) throw std::invalid_argument("global_max_pool: graph_id out of range");
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x(i, j) > out(g, j)) {
        out(g, j) = x(i, j);
        argmax_(g, j) = i;
      }
  }
  for (std::int64_t g = 0; g < b; ++g)
    if (argmax_(g, 0) < 0)
      throw std::invalid_argument("global_max_pool: graph with zero nodes");
  n_rows_ = x.rows();
  has_cache_ = true;
  return out;
}

Matrix GlobalMaxPool::backward(const Matrix& grad_out) {
  if (!has_cache_) throw std::logic_error("GlobalMaxPool::backward without forward");
  Matrix dx = Matrix::Zero(n_rows_, grad_out.cols());
  for (Eigen::Index g = 0; g < grad_out.rows(); ++g)
    for (Eigen::Index j = 0; j < grad_out.cols(); ++j) dx(argmax_(g, j), j) += grad_out(g, j);
  return dx;
}

Mlp::Mlp(const std::vector<Eigen::Index>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers.emplace_back(widths[i], widths[i + 1], rng);
  relus.resize(layers.size() - 1);
}

Matrix Mlp::forward(const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = relus[i].forward(h);
  }
  return h;
}

Matrix Mlp::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) g = relus[i].backward(g);
    g = layers[i].backward(g);
  }
  return g;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers)
    for (auto* p : l.parameters()) out.push_back(p);
  return out;
}

Conv2d::Conv2d(int c_in_, int c_out_, int kernel_, int stride_, int pad_, Rng& rng)
    : w(c_out_, static_cast<Eigen::Index>(c_in_) * kernel_ * kernel_),
      b(c_out_, 1),
      c_in(c_in_),
      c_out(c_out_),
      kernel(kernel_),
      stride(stride_),
      pad(pad_) {
  glorot_init(w, w.value.cols(), c_out_, rng);
}

ImageBatch Conv2d::forward(const ImageBatch& x) {
  if (x.c != c_in) throw std::invalid_argument("Conv2d: input channel count mismatch");
  const std::int64_t oh = out_extent(x.h, kernel, stride, pad);
  const std::int64_t ow = out_extent(x.w, kernel, stride, pad);
  if (oh < 1 || ow < 1) throw std::invalid_argument("Conv2d: input smaller than kernel");
  ImageBatch out(x.b, c_out, oh, ow);
  cols_.assign(static_cast<std::size_t>(x.b), Matrix());
  in_h_ = x.h;
  in_w_ = x.w;
  batch_ = x.b;

  for (std::int64_t bi = 0; bi < x.b; ++bi) {
    Matrix col(static_cast<Eigen::Index>(c_in) * kernel * kernel, oh * ow);
    col.setZero();
    for (std::int64_t ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const Eigen::Index row = (ci * kernel + ky) * kernel + kx;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              col(row, oy * ow + ox) = x.at(bi, ci, iy, ix);
            }
          }
        }
    Matrix res(c_out, oh * ow);
    res.noalias() = w.value * col;
    res.colwise() += b.value.col(0);
    for (std::int64_t ci = 0; ci < c_out; ++ci)
      for (std::int64_t p = 0; p < oh * ow; ++p) out.at(bi, ci, p / ow, p % ow) = res(ci, p);
    cols_[static_cast<std::size_t>(bi)] = std::move(col);
  }
  has_cache_ = true;
  return out;
}

ImageBatch Conv2d::backward(const ImageBatch& grad_out) {
  if (!has_cache_) throw std::logic_error("Conv2d::backward without forward");
  const std::int64_t oh = grad_out.h, ow = grad_out.w;
  ImageBatch dx(batch_, c_in, in_h_, in_w_);

  for (std::int64_t bi = 0; bi < batch_; ++bi) {
    Matrix g(c_out, oh * ow);
    for (std::int64_t ci = 0; ci < c_out; ++ci)
      for (std::int64_t p = 0; p < oh * ow; ++p) g(ci, p) = grad_out.at(bi, ci, p / ow, p % ow);

    w.grad.noalias() += g * cols_[static_cast<std::size_t>(bi)].transpose();
    b.grad.col(0).noalias() += g.rowwise().sum();

    const Matrix dcol = w.value.transpose() * g;  // (c_in*k*k) x (oh*ow)
    for (std::int64_t ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const Eigen::Index row = (ci * kernel + ky) * kernel + kx;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in_h_) continue;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in_w_) continue;
              dx.at(bi, ci, iy, ix) += dcol(row, oy * ow + ox);
            }
          }
        }
  }
  return dx;
}

ImageBatch ReluImage::forward(const ImageBatch& x) {
  x_ = x;
  has_cache_ = true;
  ImageBatch out = x;
  for (std::int64_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], 0.0);
  return out;
}

ImageBatch ReluImage::backward(const ImageBatch& grad_out) {
  if (!has_cache_) throw std::logic_error("ReluImage::backward without forward");
  ImageBatch dx = grad_out;
  for (std::int64_t i = 0; i < dx.data.size(); ++i)
    if (x_.data[i] <= 0.0) dx.data[i] = 0.0;
  return dx;
}

}  // namespace bodygraph::nn
