#pragma once

// Planar primitives shared by the partition and initialization code: convex
// polygons, affine splitting, point containment and segment intersection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ane {

using Point = Eigen::Vector2d;
/// Counter-clockwise vertex loop.
using Polygon = std::vector<Point>;

struct RectDomain {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  RectDomain() = default;
  RectDomain(double x0, double x1, double y0, double y1)
      : x_min(x0), x_max(x1), y_min(y0), y_max(y1) {
    if (!(x_min < x_max) || !(y_min < y_max)) {
      throw std::invalid_argument("RectDomain: expected x_min < x_max and y_min < y_max");
    }
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }

  bool contains(const Point& p, double tol = 0.0) const {
    return p.x() >= x_min - tol && p.x() <= x_max + tol && p.y() >= y_min - tol &&
           p.y() <= y_max + tol;
  }

  Polygon polygon() const {
    return {Point(x_min, y_min), Point(x_max, y_min), Point(x_max, y_max), Point(x_min, y_max)};
  }

  bool operator==(const RectDomain&) const = default;
};

/// Zero set of normal . x - offset.
struct Line {
  Point normal = Point(1.0, 0.0);
  double offset = 0.0;

  double eval(const Point& p) const { return normal.dot(p) - offset; }

  static Line from_angle(double angle, double offset) {
    return {Point(std::cos(angle), std::sin(angle)), offset};
  }
};

struct Segment {
  Point a;
  Point b;

  Point midpoint() const { return 0.5 * (a + b); }
  double length() const { return (b - a).norm(); }
};

inline double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double signed_area(std::span<const Point> poly) {
  double twice = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) twice += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * twice;
}

inline double area(std::span<const Point> poly) { return std::abs(signed_area(poly)); }

/// Area centroid; falls back to the vertex mean for degenerate loops.
inline Point centroid(std::span<const Point> poly) {
  const std::size_t n = poly.size();
  Point c = Point::Zero();
  double twice = 0.0;
  // Shift by the first vertex to limit cancellation.
  const Point o = n ? poly[0] : Point::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = poly[i] - o;
    const Point q = poly[(i + 1) % n] - o;
    const double w = cross(p, q);
    twice += w;
    c += w * (p + q);
  }
  if (std::abs(twice) <= 1e-300) {
    Point mean = Point::Zero();
    for (const auto& p : poly) mean += p;
    return n ? Point(mean / static_cast<double>(n)) : mean;
  }
  return o + c / (3.0 * twice);
}

struct BoundingBox {
  Point lo = Point::Constant(std::numeric_limits<double>::infinity());
  Point hi = Point::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Point& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool overlaps(const BoundingBox& o, double tol) const {
    return lo.x() <= o.hi.x() + tol && o.lo.x() <= hi.x() + tol && lo.y() <= o.hi.y() + tol &&
           o.lo.y() <= hi.y() + tol;
  }
};

inline BoundingBox bounding_box(std::span<const Point> poly) {
  BoundingBox box;
  for (const auto& p : poly) box.extend(p);
  return box;
}

/// Closed containment test for a CCW convex polygon, tolerant by `tol` in distance.
inline bool contains_convex(std::span<const Point> poly, const Point& p, double tol) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    const Point e = b - a;
    const double len = e.norm();
    if (len == 0.0) continue;
    if (cross(e, p - a) / len < -tol) return false;
  }
  return true;
}

/// Largest outward distance of `p` past any edge line; <= 0 means inside.
inline double convex_violation(std::span<const Point> poly, const Point& p) {
  double worst = -std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point e = poly[(i + 1) % n] - poly[i];
    const double len = e.norm();
    if (len == 0.0) continue;
    worst = std::max(worst, -cross(e, p - poly[i]) / len);
  }
  return worst;
}

/// Removes consecutive vertices closer than `tol` and collinear spikes.
inline Polygon clean_polygon(Polygon poly, double tol) {
  Polygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) {
    if (out.empty() || (p - out.back()).norm() > tol) out.push_back(p);
  }
  while (out.size() > 1 && (out.front() - out.back()).norm() <= tol) out.pop_back();
  // Drop vertices lying on the segment between their neighbours.
  bool changed = true;
  while (changed && out.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Point& prev = out[(i + out.size() - 1) % out.size()];
      const Point& next = out[(i + 1) % out.size()];
      const Point e = next - prev;
      const double len = e.norm();
      if (len > 0.0 && std::abs(cross(e, out[i] - prev)) / len <= tol &&
          (out[i] - prev).dot(e) >= 0.0 && (next - out[i]).dot(e) >= 0.0) {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  return out;
}

/// A vertex of a split piece: `(1 - t) * poly[from] + t * poly[to]`.
struct SplitVertex {
  int from = 0;
  int to = 0;
  double t = 0.0;
};

struct PolygonSplit {
  std::vector<SplitVertex> negative;
  std::vector<SplitVertex> positive;
};

/// Splits a convex polygon along the zero set of an affine function sampled at
/// its vertices. Returns nothing unless the values strictly change sign
/// (min < -tol and max > tol); vertices with |value| <= tol go to both pieces.
inline std::optional<PolygonSplit> split_convex(std::span<const double> values, double tol) {
  const int n = static_cast<int>(values.size());
  if (n < 3) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*lo < -tol && *hi > tol)) return std::nullopt;

  auto sign_of = [tol](double s) { return s > tol ? 1 : (s < -tol ? -1 : 0); };
  PolygonSplit out;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    const int si = sign_of(values[i]);
    const int sj = sign_of(values[j]);
    if (si >= 0) out.positive.push_back({i, i, 0.0});
    if (si <= 0) out.negative.push_back({i, i, 0.0});
    if (si * sj < 0) {
      const double t = values[i] / (values[i] - values[j]);
      out.positive.push_back({i, j, t});
      out.negative.push_back({i, j, t});
    }
  }
  return out;
}

inline Point materialize(std::span<const Point> poly, const SplitVertex& v) {
  if (v.from == v.to) return poly[v.from];
  return (1.0 - v.t) * poly[v.from] + v.t * poly[v.to];
}

inline Polygon materialize(std::span<const Point> poly, std::span<const SplitVertex> piece) {
  Polygon out;
  out.reserve(piece.size());
  for (const auto& v : piece) out.push_back(materialize(poly, v));
  return out;
}

/// Splits a convex polygon by a line; pieces with area <= tol_area are dropped.
inline std::pair<std::optional<Polygon>, std::optional<Polygon>> split_by_line(
    const Polygon& poly, const Line& line, double tol_geom, double tol_area) {
  std::vector<double> values(poly.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    values[i] = line.eval(poly[i]);
    scale = std::max(scale, std::abs(values[i]));
  }
  auto keep = [&](Polygon p) -> std::optional<Polygon> {
    p = clean_polygon(std::move(p), tol_geom);
    if (p.size() < 3 || area(p) <= tol_area) return std::nullopt;
    return p;
  };
  const auto split = split_convex(values, std::max(tol_geom, 1e-14 * scale));
  if (!split) {
    double sum = 0.0;
    for (double v : values) sum += v;
    if (sum < 0.0) return {keep(poly), std::nullopt};
    return {std::nullopt, keep(poly)};
  }
  return {keep(materialize(poly, split->negative)), keep(materialize(poly, split->positive))};
}

/// Intersection point of segments [p0,p1] and [q0,q1], endpoints included with
/// tolerance `tol` (in the segment parameter). Parallel segments give nothing.
inline std::optional<Point> segment_intersection(const Point& p0, const Point& p1, const Point& q0,
                                                 const Point& q1, double tol = 1e-12) {
  const Point r = p1 - p0;
  const Point s = q1 - q0;
  const double denom = cross(r, s);
  const double scale = r.norm() * s.norm();
  if (scale == 0.0 || std::abs(denom) <= 1e-14 * scale) return std::nullopt;
  const Point qp = q0 - p0;
  const double t = cross(qp, s) / denom;
  const double u = cross(qp, r) / denom;
  if (t < -tol || t > 1.0 + tol || u < -tol || u > 1.0 + tol) return std::nullopt;
  return p0 + std::clamp(t, 0.0, 1.0) * r;
}

/// Length of the collinear overlap of two segments; zero unless they lie on a
/// common line within `tol`.
inline double collinear_overlap(const Point& a0, const Point& a1, const Point& b0, const Point& b1,
                                double tol) {
  const Point d = a1 - a0;
  const double len = d.norm();
  if (len == 0.0) return 0.0;
  const Point u = d / len;
  if (std::abs(cross(u, b0 - a0)) > tol || std::abs(cross(u, b1 - a0)) > tol) return 0.0;
  const double s0 = u.dot(b0 - a0);
  const double s1 = u.dot(b1 - a0);
  const double lo = std::max(0.0, std::min(s0, s1));
  const double hi = std::min(len, std::max(s0, s1));
  return std::max(0.0, hi - lo);
}

}  // namespace ane
