#pragma once

// Exact linear-region cell complex of a ReLU network over a rectangle.
//
// K^(1) is the arrangement of the first-layer lines clipped to the domain.
// K^(l) refines K^(l-1): every g^(l)_j is affine on each cell of K^(l-1), so a
// cell is cut exactly where the vertex values of some g^(l)_j change sign.
// Cuts inside one cell are applied in ascending neuron order with the values
// of every neuron carried to the new vertices by linear interpolation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ane/geometry.hpp"
#include "ane/network.hpp"

namespace ane {

struct PartitionTolerances {
  double geom = 0.0;  // distances
  double area = 0.0;  // cell areas
  static constexpr double kSignRelative = 1e-10;

  static PartitionTolerances for_domain(const RectDomain& d) {
    return {1e-9 * d.diameter(), 1e-12 * d.area()};
  }
};

struct ConvexCell {
  int id = 0;
  Polygon vertices;  // CCW
  int level = 1;     // layer of the last split
  int parent = -1;   // id in the previous level's partition

  double area() const { return ane::area(vertices); }
  Point centroid() const { return ane::centroid(vertices); }
};

class PhysicalPartition {
 public:
  PhysicalPartition() = default;
  PhysicalPartition(RectDomain domain, int layer, std::vector<ConvexCell> cells)
      : domain_(domain),
        layer_(layer),
        tol_(PartitionTolerances::for_domain(domain)),
        cells_(std::move(cells)) {
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].id = static_cast<int>(i);
    build_adjacency();
  }

  const RectDomain& domain() const { return domain_; }
  int layer() const { return layer_; }
  const PartitionTolerances& tolerances() const { return tol_; }
  const std::vector<ConvexCell>& cells() const { return cells_; }
  const ConvexCell& cell(int id) const { return cells_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return cells_.size(); }
  /// Pairs (a, b), a < b, of cells sharing a boundary piece of positive length.
  const std::vector<std::pair<int, int>>& adjacency() const { return adjacency_; }
  const std::vector<int>& neighbors(int id) const {
    return neighbors_.at(static_cast<std::size_t>(id));
  }

  double total_area() const {
    double s = 0.0;
    for (const auto& c : cells_) s += c.area();
    return s;
  }

 private:
  void build_adjacency() {
    const std::size_t n = cells_.size();
    neighbors_.assign(n, {});
    adjacency_.clear();
    std::vector<BoundingBox> boxes(n);
    for (std::size_t i = 0; i < n; ++i) boxes[i] = bounding_box(cells_[i].vertices);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return boxes[a].lo.x() < boxes[b].lo.x(); });
    for (std::size_t oi = 0; oi < n; ++oi) {
      const std::size_t i = order[oi];
      for (std::size_t oj = oi + 1; oj < n; ++oj) {
        const std::size_t j = order[oj];
        if (boxes[j].lo.x() > boxes[i].hi.x() + tol_.geom) break;
        if (!boxes[i].overlaps(boxes[j], tol_.geom)) continue;
        if (share_edge(cells_[i].vertices, cells_[j].vertices)) {
          adjacency_.emplace_back(std::min(i, j), std::max(i, j));
        }
      }
    }
    std::sort(adjacency_.begin(), adjacency_.end());
    for (const auto& [a, b] : adjacency_) {
      neighbors_[static_cast<std::size_t>(a)].push_back(b);
      neighbors_[static_cast<std::size_t>(b)].push_back(a);
    }
  }

  bool share_edge(const Polygon& a, const Polygon& b) const {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Point& a0 = a[i];
      const Point& a1 = a[(i + 1) % a.size()];
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (collinear_overlap(a0, a1, b[j], b[(j + 1) % b.size()], tol_.geom) > tol_.geom) {
          return true;
        }
      }
    }
    return false;
  }

  RectDomain domain_;
  int layer_ = 1;
  PartitionTolerances tol_;
  std::vector<ConvexCell> cells_;
  std::vector<std::pair<int, int>> adjacency_;
  std::vector<std::vector<int>> neighbors_;
};

namespace detail {

/// A polygon piece with the values of several affine functions at its
/// vertices (one column per vertex).
struct ValuedPiece {
  Polygon poly;
  Eigen::MatrixXd values;
};

/// Cuts `piece` along the zero set of row `row` of its values. Returns one or
/// two pieces; slivers below the area tolerance are not produced.
inline std::vector<ValuedPiece> cut_piece(ValuedPiece piece, Eigen::Index row,
                                          const PartitionTolerances& tol) {
  const Eigen::VectorXd s = piece.values.row(row).transpose();
  const double scale = s.cwiseAbs().maxCoeff();
  std::vector<ValuedPiece> out;
  if (scale == 0.0) {
    out.push_back(std::move(piece));
    return out;
  }
  const auto split = split_convex({s.data(), static_cast<std::size_t>(s.size())},
                                  PartitionTolerances::kSignRelative * scale);
  if (!split) {
    out.push_back(std::move(piece));
    return out;
  }
  auto build = [&](const std::vector<SplitVertex>& verts) {
    ValuedPiece p;
    p.values.resize(piece.values.rows(), static_cast<Eigen::Index>(verts.size()));
    Eigen::Index kept = 0;
    for (const auto& v : verts) {
      const Point pt = materialize(piece.poly, v);
      if (!p.poly.empty() && (pt - p.poly.back()).norm() <= tol.geom) continue;
      p.poly.push_back(pt);
      p.values.col(kept++) = v.from == v.to ? Eigen::VectorXd(piece.values.col(v.from))
                                            : Eigen::VectorXd((1.0 - v.t) * piece.values.col(v.from) +
                                                              v.t * piece.values.col(v.to));
    }
    while (p.poly.size() > 1 && (p.poly.front() - p.poly.back()).norm() <= tol.geom) {
      p.poly.pop_back();
      --kept;
    }
    p.values.conservativeResize(Eigen::NoChange, kept);
    return p;
  };
  ValuedPiece neg = build(split->negative);
  ValuedPiece pos = build(split->positive);
  const bool neg_ok = neg.poly.size() >= 3 && area(neg.poly) > tol.area;
  const bool pos_ok = pos.poly.size() >= 3 && area(pos.poly) > tol.area;
  if (!neg_ok || !pos_ok) {
    out.push_back(std::move(piece));
    return out;
  }
  out.push_back(std::move(neg));
  out.push_back(std::move(pos));
  return out;
}

inline Points to_points(const Polygon& poly) {
  Points p(2, static_cast<Eigen::Index>(poly.size()));
  for (std::size_t i = 0; i < poly.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = poly[i];
  return p;
}

}  // namespace detail

/// K^(1): the domain cut by every first-layer line that properly crosses it.
inline PhysicalPartition build_layer1(const Network& net, const RectDomain& domain) {
  const Eigen::Index n1 = net.first.angles.size();
  if (n1 < 1) throw std::invalid_argument("build_layer1: network has no first-layer neurons");
  const auto tol = PartitionTolerances::for_domain(domain);
  const Eigen::MatrixX2d w = net.first_weights();

  // Vertex values of all first-layer pre-activations travel with each piece.
  detail::ValuedPiece root;
  root.poly = domain.polygon();
  root.values = w * detail::to_points(root.poly);
  root.values.colwise() -= net.first.biases;

  std::vector<detail::ValuedPiece> pieces;
  pieces.push_back(std::move(root));
  for (Eigen::Index j = 0; j < n1; ++j) {
    std::vector<detail::ValuedPiece> next;
    next.reserve(pieces.size() + 8);
    for (auto& p : pieces) {
      for (auto& q : detail::cut_piece(std::move(p), j, tol)) next.push_back(std::move(q));
    }
    pieces = std::move(next);
  }
  std::vector<ConvexCell> cells;
  cells.reserve(pieces.size());
  for (auto& p : pieces) cells.push_back({0, std::move(p.poly), 1, -1});
  return PhysicalPartition(domain, 1, std::move(cells));
}

/// K^(l) from K^(l-1) for 2 <= l <= L-1.
inline PhysicalPartition refine_layer(const PhysicalPartition& prev, const Network& net, int l) {
  if (l < 2 || l > net.hidden_layers()) {
    throw std::out_of_range("refine_layer: layer " + std::to_string(l) + " out of range");
  }
  if (prev.layer() != l - 1) throw std::invalid_argument("refine_layer: expected K^(l-1)");
  const auto& tol = prev.tolerances();
  std::vector<ConvexCell> cells;
  cells.reserve(prev.size());
  for (const auto& cell : prev.cells()) {
    detail::ValuedPiece root{cell.vertices, eval_pre_activations(net, l, detail::to_points(cell.vertices))};
    const Eigen::Index neurons = root.values.rows();
    std::vector<detail::ValuedPiece> pieces;
    pieces.push_back(std::move(root));
    for (Eigen::Index j = 0; j < neurons; ++j) {
      std::vector<detail::ValuedPiece> next;
      for (auto& p : pieces) {
        for (auto& q : detail::cut_piece(std::move(p), j, tol)) next.push_back(std::move(q));
      }
      pieces = std::move(next);
    }
    const int level = pieces.size() > 1 ? l : cell.level;
    for (auto& p : pieces) cells.push_back({0, std::move(p.poly), level, cell.id});
  }
  return PhysicalPartition(prev.domain(), l, std::move(cells));
}

/// K^(1), ..., K^(L-1).
inline std::vector<PhysicalPartition> partition_hierarchy(const Network& net,
                                                          const RectDomain& domain) {
  std::vector<PhysicalPartition> levels;
  levels.push_back(build_layer1(net, domain));
  for (int l = 2; l <= net.hidden_layers(); ++l) levels.push_back(refine_layer(levels.back(), net, l));
  return levels;
}

/// K^(L-1): the cells on which the network function is affine.
inline PhysicalPartition physical_partition(const Network& net, const RectDomain& domain) {
  PhysicalPartition pp = build_layer1(net, domain);
  for (int l = 2; l <= net.hidden_layers(); ++l) pp = refine_layer(pp, net, l);
  return pp;
}

/// Point location through a uniform bucket grid. Points on shared edges go to
/// the lowest incident cell id.
class CellLocator {
 public:
  explicit CellLocator(const PhysicalPartition& pp) : pp_(&pp) {
    const auto n = static_cast<double>(pp.size());
    dim_ = std::clamp(static_cast<int>(std::ceil(std::sqrt(n))), 1, 256);
    buckets_.assign(static_cast<std::size_t>(dim_) * dim_, {});
    const double tol = pp.tolerances().geom;
    for (const auto& c : pp.cells()) {
      const BoundingBox box = bounding_box(c.vertices);
      const auto [i0, j0] = bucket_of(box.lo - Point::Constant(tol));
      const auto [i1, j1] = bucket_of(box.hi + Point::Constant(tol));
      for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j * dim_ + i)].push_back(c.id);
      }
    }
  }

  int locate(const Point& p) const {
    const auto& pp = *pp_;
    const double tol = pp.tolerances().geom;
    if (!p.allFinite() || !pp.domain().contains(p, tol)) {
      throw std::out_of_range("locate: point outside the domain");
    }
    const auto [i, j] = bucket_of(p);
    const auto& candidates = buckets_[static_cast<std::size_t>(j * dim_ + i)];
    for (int id : candidates) {
      if (contains_convex(pp.cell(id).vertices, p, tol)) return id;
    }
    // Round-off gap: take the least violated candidate, then any cell.
    int best = -1;
    double best_v = std::numeric_limits<double>::infinity();
    auto scan = [&](const std::vector<int>& ids) {
      for (int id : ids) {
        const double v = convex_violation(pp.cell(id).vertices, p);
        if (v < best_v) {
          best_v = v;
          best = id;
        }
      }
    };
    scan(candidates);
    if (best < 0 || best_v > 100.0 * tol) {
      std::vector<int> all(pp.size());
      std::iota(all.begin(), all.end(), 0);
      scan(all);
    }
    return best;
  }

 private:
  std::pair<int, int> bucket_of(const Point& p) const {
    const auto& d = pp_->domain();
    auto idx = [this](double t) { return std::clamp(static_cast<int>(std::floor(t * dim_)), 0, dim_ - 1); };
    return {idx((p.x() - d.x_min) / d.width()), idx((p.y() - d.y_min) / d.height())};
  }

  const PhysicalPartition* pp_;
  int dim_ = 1;
  std::vector<std::vector<int>> buckets_;
};

inline std::vector<int> locate(const PhysicalPartition& pp, const Points& points) {
  CellLocator locator(pp);
  std::vector<int> ids(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index q = 0; q < points.cols(); ++q) {
    ids[static_cast<std::size_t>(q)] = locator.locate(points.col(q));
  }
  return ids;
}

/// A connected set of cells of one partition.
struct Region {
  std::vector<int> cell_ids;  // ascending
};

/// Connected components of the marked cells under edge adjacency, ordered by
/// their smallest member.
inline std::vector<Region> regroup(const PhysicalPartition& pp, const std::vector<int>& marked) {
  std::vector<char> is_marked(pp.size(), 0);
  for (int id : marked) {
    if (id < 0 || static_cast<std::size_t>(id) >= pp.size()) {
      throw std::out_of_range("regroup: invalid cell id");
    }
    is_marked[static_cast<std::size_t>(id)] = 1;
  }
  std::vector<char> seen(pp.size(), 0);
  std::vector<int> sorted = marked;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Region> regions;
  for (int start : sorted) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    Region r;
    std::queue<int> q;
    q.push(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!q.empty()) {
      const int c = q.front();
      q.pop();
      r.cell_ids.push_back(c);
      for (int nb : pp.neighbors(c)) {
        const auto k = static_cast<std::size_t>(nb);
        if (is_marked[k] && !seen[k]) {
          seen[k] = 1;
          q.push(nb);
        }
      }
    }
    std::sort(r.cell_ids.begin(), r.cell_ids.end());
    regions.push_back(std::move(r));
  }
  return regions;
}

/// Geometry of a union of convex polygons: outer boundary, centroid,
/// containment, cuts by lines and crossings with segments.
class RegionGeometry {
 public:
  RegionGeometry() = default;
  RegionGeometry(std::vector<Polygon> cells, PartitionTolerances tol)
      : cells_(std::move(cells)), tol_(tol) {
    for (const auto& c : cells_) boxes_.push_back(bounding_box(c));
    compute_boundary();
  }

  bool empty() const { return cells_.empty(); }
  const std::vector<Polygon>& cells() const { return cells_; }
  const PartitionTolerances& tolerances() const { return tol_; }

  /// Pieces of cell edges not shared with another cell of the region.
  const std::vector<Segment>& boundary_edges() const { return boundary_; }

  std::vector<Point> boundary_midpoints() const {
    std::vector<Point> mids;
    mids.reserve(boundary_.size());
    for (const auto& e : boundary_) mids.push_back(e.midpoint());
    return mids;
  }

  double area() const {
    double s = 0.0;
    for (const auto& c : cells_) s += ane::area(c);
    return s;
  }

  /// Area-weighted mean of the member centroids.
  Point centroid() const {
    Point c = Point::Zero();
    double total = 0.0;
    for (const auto& poly : cells_) {
      const double a = ane::area(poly);
      c += a * ane::centroid(poly);
      total += a;
    }
    return total > 0.0 ? Point(c / total) : c;
  }

  bool contains(const Point& p) const {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (!boxes_[i].overlaps(BoundingBox{p, p}, tol_.geom)) continue;
      if (contains_convex(cells_[i], p, tol_.geom)) return true;
    }
    return false;
  }

  /// Intersections of segment [a, b] with every cell edge, deduplicated, in
  /// order of distance from a.
  std::vector<Point> crossings(const Point& a, const Point& b) const {
    std::vector<Point> pts;
    for (const auto& poly : cells_) {
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto hit = segment_intersection(a, b, poly[i], poly[(i + 1) % poly.size()]);
        if (!hit) continue;
        const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Point& q) {
          return (q - *hit).norm() <= 10.0 * tol_.geom;
        });
        if (!dup) pts.push_back(*hit);
      }
    }
    std::sort(pts.begin(), pts.end(), [&](const Point& p, const Point& q) {
      return (p - a).squaredNorm() < (q - a).squaredNorm();
    });
    return pts;
  }

  /// Member cells on the negative and positive side of `line`; cells crossed by
  /// the line are cut first.
  std::pair<RegionGeometry, RegionGeometry> split(const Line& line) const {
    std::vector<Polygon> neg;
    std::vector<Polygon> pos;
    for (const auto& poly : cells_) {
      auto [n, p] = split_by_line(poly, line, tol_.geom, tol_.area);
      if (n) neg.push_back(std::move(*n));
      if (p) pos.push_back(std::move(*p));
    }
    return {RegionGeometry(std::move(neg), tol_), RegionGeometry(std::move(pos), tol_)};
  }

 private:
  void compute_boundary() {
    boundary_.clear();
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
      const auto& poly = cells_[ci];
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point p0 = poly[i];
        const Point p1 = poly[(i + 1) % poly.size()];
        const Point d = p1 - p0;
        const double len = d.norm();
        if (len <= tol_.geom) continue;
        const Point u = d / len;
        BoundingBox edge_box;
        edge_box.extend(p0);
        edge_box.extend(p1);
        std::vector<std::pair<double, double>> covered;
        for (std::size_t cj = 0; cj < cells_.size(); ++cj) {
          if (cj == ci || !boxes_[cj].overlaps(edge_box, tol_.geom)) continue;
          const auto& other = cells_[cj];
          for (std::size_t j = 0; j < other.size(); ++j) {
            const Point q0 = other[j];
            const Point q1 = other[(j + 1) % other.size()];
            if (std::abs(cross(u, q0 - p0)) > tol_.geom || std::abs(cross(u, q1 - p0)) > tol_.geom) {
              continue;
            }
            const double s0 = u.dot(q0 - p0);
            const double s1 = u.dot(q1 - p0);
            const double lo = std::max(0.0, std::min(s0, s1));
            const double hi = std::min(len, std::max(s0, s1));
            if (hi - lo > tol_.geom) covered.emplace_back(lo, hi);
          }
        }
        std::sort(covered.begin(), covered.end());
        double cursor = 0.0;
        for (const auto& [lo, hi] : covered) {
          if (lo - cursor > tol_.geom) boundary_.push_back({p0 + cursor * u, p0 + lo * u});
          cursor = std::max(cursor, hi);
        }
        if (len - cursor > tol_.geom) boundary_.push_back({p0 + cursor * u, p1});
      }
    }
  }

  std::vector<Polygon> cells_;
  std::vector<BoundingBox> boxes_;
  PartitionTolerances tol_;
  std::vector<Segment> boundary_;
};

inline RegionGeometry region_geometry(const PhysicalPartition& pp, const Region& region) {
  std::vector<Polygon> cells;
  cells.reserve(region.cell_ids.size());
  for (int id : region.cell_ids) cells.push_back(pp.cell(id).vertices);
  return RegionGeometry(std::move(cells), pp.tolerances());
}

}  // namespace ane
