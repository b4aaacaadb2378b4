#include "bodygraph/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace bodygraph {

RegressionGraph mesh_to_graph(const TriangleMesh& m, const SubjectLabels& labels) {
  if (m.vertices.empty()) throw std::invalid_argument("mesh_to_graph: empty mesh");
  if (!std::isfinite(labels.vat_mm3) || !std::isfinite(labels.asat_mm3) ||
      labels.vat_mm3 < 0.0 || labels.asat_mm3 < 0.0)
    throw std::invalid_argument("mesh_to_graph: labels must be finite and non-negative");

  RegressionGraph g;
  g.x.resize(static_cast<Eigen::Index>(m.vertices.size()), 3);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    g.x(static_cast<Eigen::Index>(i), 0) = m.vertices[i].x;
    g.x(static_cast<Eigen::Index>(i), 1) = m.vertices[i].y;
    g.x(static_cast<Eigen::Index>(i), 2) = m.vertices[i].z;
  }
  g.edges = undirected_edges(m);
  g.y = {labels.vat_mm3, labels.asat_mm3};
  g.subject_id = labels.subject_id;
  g.sex_tag = labels.sex_tag;
  return g;
}

GraphBatch batch(const std::vector<RegressionGraph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("batch: empty graph list");

  GraphBatch b;
  std::int64_t total_nodes = 0;
  std::size_t total_edges = 0;
  for (const auto& g : graphs) {
    total_nodes += g.node_count();
    total_edges += g.edges.size();
  }
  const auto d = graphs.front().x.cols();
  b.x.resize(total_nodes, d);
  b.y.resize(static_cast<Eigen::Index>(graphs.size()), 2);
  b.edges.reserve(total_edges);
  b.graph_id.reserve(static_cast<std::size_t>(total_nodes));
  b.node_offsets.push_back(0);

  std::int64_t offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    if (g.x.cols() != d) throw std::invalid_argument("batch: inconsistent feature widths");
    b.x.middleRows(offset, g.node_count()) = g.x;
    for (const auto& e : g.edges)
      b.edges.push_back({static_cast<std::int32_t>(e[0] + offset),
                         static_cast<std::int32_t>(e[1] + offset)});
    for (std::int64_t i = 0; i < g.node_count(); ++i)
      b.graph_id.push_back(static_cast<std::int32_t>(gi));
    b.y.row(static_cast<Eigen::Index>(gi)) = g.y.transpose();
    b.subject_ids.push_back(g.subject_id);
    b.sex_tags.push_back(g.sex_tag);
    offset += g.node_count();
    b.node_offsets.push_back(offset);
  }
  return b;
}

std::vector<RegressionGraph> unbatch(const GraphBatch& b) {
  std::vector<RegressionGraph> graphs(static_cast<std::size_t>(b.graph_count()));
  std::size_t edge_cursor = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    auto& g = graphs[gi];
    const std::int64_t lo = b.node_offsets[gi], hi = b.node_offsets[gi + 1];
    g.x = b.x.middleRows(lo, hi - lo);
    while (edge_cursor < b.edges.size() && b.edges[edge_cursor][0] < hi) {
      const auto& e = b.edges[edge_cursor];
      g.edges.push_back({static_cast<std::int32_t>(e[0] - lo), static_cast<std::int32_t>(e[1] - lo)});
      ++edge_cursor;
    }
    g.y = b.y.row(static_cast<Eigen::Index>(gi)).transpose();
    g.subject_id = b.subject_ids[gi];
    g.sex_tag = b.sex_tags[gi];
  }
  return graphs;
}

FeatureScaler FeatureScaler::fit(const std::vector<RegressionGraph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("FeatureScaler: empty graph list");
  FeatureScaler s;
  double n = 0.0;
  Eigen::RowVector3d sum = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d sum2 = Eigen::RowVector3d::Zero();
  for (const auto& g : graphs) {
    sum += g.x.colwise().sum();
    sum2 += g.x.array().square().colwise().sum().matrix();
    n += static_cast<double>(g.node_count());
  }
  s.mean = sum / n;
  const Eigen::RowVector3d var = (sum2 / n - s.mean.cwiseProduct(s.mean)).cwiseMax(0.0);
  s.std = var.cwiseSqrt().cwiseMax(1e-12);
  return s;
}

RegressionGraph FeatureScaler::apply(const RegressionGraph& g) const {
  RegressionGraph out = g;
  out.x = (g.x.rowwise() - mean).array().rowwise() / std.array();
  return out;
}

}  // namespace bodygraph
