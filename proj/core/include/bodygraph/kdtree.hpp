// Static 3D k-d tree for nearest-neighbor queries. Ties on distance go to
// the smaller point index so queries are deterministic.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "bodygraph/geom.hpp"

namespace bodygraph {

class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int32_t>(i);
    if (!order_.empty()) build(0, static_cast<std::int32_t>(order_.size()), 0);
  }

  // Index of the nearest point (smallest index on ties).
  std::int32_t nearest(const Vec3& query) const {
    std::int32_t best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(query, 0, static_cast<std::int32_t>(order_.size()), 0, best, best_d2);
    return best;
  }

 private:
  void build(std::int32_t lo, std::int32_t hi, int axis) {
    if (hi - lo <= 1) return;
    const std::int32_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::int32_t a, std::int32_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       if (pa != pb) return pa < pb;
                       return a < b;
                     });
    build(lo, mid, (axis + 1) % 3);
    build(mid + 1, hi, (axis + 1) % 3);
  }

  void search(const Vec3& q, std::int32_t lo, std::int32_t hi, int axis, std::int32_t& best,
              double& best_d2) const {
    if (hi <= lo) return;
    const std::int32_t mid = lo + (hi - lo) / 2;
    const std::int32_t idx = order_[mid];
    const double d2 = norm2(q - points_[idx]);
    if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best_d2 = d2;
      best = idx;
    }
    const double delta = q[axis] - points_[idx][axis];
    const int next = (axis + 1) % 3;
    if (delta <= 0) {
      search(q, lo, mid, next, best, best_d2);
      if (delta * delta <= best_d2) search(q, mid + 1, hi, next, best, best_d2);
    } else {
      search(q, mid + 1, hi, next, best, best_d2);
      if (delta * delta <= best_d2) search(q, lo, mid, next, best, best_d2);
    }
  }

  std::vector<Vec3> points_;
  std::vector<std::int32_t> order_;
};

}  // namespace bodygraph
