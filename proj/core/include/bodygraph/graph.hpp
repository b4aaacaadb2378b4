// Meshes as whole-graph regression samples: node features are registered
// vertex coordinates, targets are the two tissue volumes.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bodygraph/mesh.hpp"
#include "bodygraph/subject.hpp"

namespace bodygraph {

struct RegressionGraph {
  Eigen::MatrixXd x;                               // N x 3, mm
  std::vector<std::array<std::int32_t, 2>> edges;  // undirected, u < v, sorted, deduped
  Eigen::Vector2d y;                               // (vat_mm3, asat_mm3)
  std::string subject_id;
  SexTag sex_tag = SexTag::F;

  std::int64_t node_count() const { return x.rows(); }
};

struct GraphBatch {
  Eigen::MatrixXd x;                               // sum(N_i) x d
  std::vector<std::array<std::int32_t, 2>> edges;  // offsets applied
  std::vector<std::int32_t> graph_id;              // per node, non-decreasing
  Eigen::MatrixXd y;                               // B x 2
  std::vector<std::int64_t> node_offsets;          // size B+1
  std::vector<std::string> subject_ids;
  std::vector<SexTag> sex_tags;

  std::int64_t graph_count() const { return y.rows(); }
};

// Nodes = vertices, x = coordinates, edges = deduplicated face edges.
// Throws std::invalid_argument on an empty mesh or non-finite/negative labels.
RegressionGraph mesh_to_graph(const TriangleMesh& m, const SubjectLabels& labels);

// Block-diagonal concatenation via index offsetting; unbatch inverts exactly.
GraphBatch batch(const std::vector<RegressionGraph>& graphs);
std::vector<RegressionGraph> unbatch(const GraphBatch& b);

// Per-axis z-scoring, fit on the training fold only and then frozen.
struct FeatureScaler {
  Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d std = Eigen::RowVector3d::Ones();

  static FeatureScaler fit(const std::vector<RegressionGraph>& graphs);
  RegressionGraph apply(const RegressionGraph& g) const;
};

}  // namespace bodygraph
