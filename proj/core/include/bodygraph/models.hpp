// Whole-graph and silhouette regression models, plus checkpoint I/O.
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "bodygraph/graph.hpp"
#include "bodygraph/nn.hpp"

namespace bodygraph::nn {

// Three SAGE convolutions (3 -> h -> h -> h), each followed by batch norm and
// relu, then global max pooling and a 3-layer MLP head (h -> h -> h/2 -> 2).
struct GnnModel {
  int hidden = 64;
  std::uint64_t seed = 0;

  SageLayer sage1, sage2, sage3;
  BatchNorm1d bn1, bn2, bn3;
  Relu relu1, relu2, relu3;
  GlobalMaxPool pool;
  Mlp head;

  GnnModel(int hidden_, std::uint64_t seed_);
  Matrix forward(const GraphBatch& batch, Mode mode);
  void backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters();

 private:
  Adjacency adj_;
};

// Three strided 3x3 convolutions (2 -> c0 -> c1 -> c2 channels, stride 2,
// relu) over stacked coronal+sagittal silhouettes, flatten, 3-layer MLP -> 2.
struct CnnModel {
  std::int64_t in_h = 0, in_w = 0;
  std::array<int, 3> channels{16, 32, 64};
  int hidden = 64;
  std::uint64_t seed = 0;

  Conv2d conv1, conv2, conv3;
  ReluImage relu1, relu2, relu3;
  Mlp head;

  CnnModel(std::int64_t in_h_, std::int64_t in_w_, std::array<int, 3> channels_, int hidden_,
           std::uint64_t seed_);
  Matrix forward(const ImageBatch& images, Mode mode);
  void backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters();

  std::int64_t flat_dim() const;

 private:
  std::int64_t last_b_ = 0, last_c_ = 0, last_h_ = 0, last_w_ = 0;
};

inline Matrix gnn_forward(GnnModel& m, const GraphBatch& b, Mode mode) { return m.forward(b, mode); }
inline Matrix cnn_forward(CnnModel& m, const ImageBatch& x, Mode mode) { return m.forward(x, mode); }

// Checkpoints: <base>.nnhdr (JSON metadata: kind, widths, seed, tensor
// shapes) + <base>.nnbin (little-endian float64 payload, parameters in
// declared order followed by batch-norm running statistics).
void save_checkpoint(const std::string& base_path, GnnModel& m);
void save_checkpoint(const std::string& base_path, CnnModel& m);
GnnModel load_gnn_checkpoint(const std::string& base_path);
CnnModel load_cnn_checkpoint(const std::string& base_path);

}  // namespace bodygraph::nn
