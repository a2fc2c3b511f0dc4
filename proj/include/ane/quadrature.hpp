#pragma once

// Composite midpoint rule on a rectangle and the inflow-boundary edge mesh.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ane/geometry.hpp"
#include "ane/network.hpp"

namespace ane {

struct QuadratureGrid {
  RectDomain domain;
  int resolution = 0;  // points per axis
  Points points;       // resolution^2 cell centres, x fastest
  double weight = 0.0; // |Omega| / m^2, also the cell measure

  Eigen::Index size() const { return points.cols(); }
  double total_weight() const { return weight * static_cast<double>(size()); }
};

inline QuadratureGrid make_grid(const RectDomain& domain, int m) {
  if (m < 1) throw std::invalid_argument("make_grid: resolution must be >= 1");
  QuadratureGrid grid;
  grid.domain = domain;
  grid.resolution = m;
  grid.points.resize(2, static_cast<Eigen::Index>(m) * m);
  const double hx = domain.width() / m;
  const double hy = domain.height() / m;
  Eigen::Index k = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      grid.points(0, k) = domain.x_min + (i + 0.5) * hx;
      grid.points(1, k) = domain.y_min + (j + 0.5) * hy;
      ++k;
    }
  }
  grid.weight = domain.area() / (static_cast<double>(m) * m);
  return grid;
}

inline double discrete_inner(const QuadratureGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& u,
                             const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != grid.size() || v.size() != grid.size()) {
    throw std::invalid_argument("discrete_inner: value arrays do not match the grid");
  }
  return grid.weight * u.dot(v);
}

inline double discrete_norm(const QuadratureGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& v) {
  return std::sqrt(discrete_inner(grid, v, v));
}

using VectorField = std::function<Point(const Point&)>;
using ScalarField = std::function<double(const Point&)>;

struct InflowEdge {
  Point midpoint;
  double length = 0.0;
  Point normal;        // outward unit normal
  double flux = 0.0;   // |beta . n| at the midpoint
};

struct InflowBoundaryMesh {
  std::vector<InflowEdge> edges;

  std::size_t size() const { return edges.size(); }
  Points midpoints() const {
    Points p(2, static_cast<Eigen::Index>(edges.size()));
    for (std::size_t i = 0; i < edges.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = edges[i].midpoint;
    return p;
  }
  double total_length() const {
    double s = 0.0;
    for (const auto& e : edges) s += e.length;
    return s;
  }
};

/// Splits each side of the rectangle into `edges_per_side` segments and keeps
/// those whose midpoint sees inflow (beta . n < 0). Sides are visited bottom,
/// right, top, left.
inline InflowBoundaryMesh inflow_mesh(const RectDomain& d, const VectorField& beta,
                                      int edges_per_side) {
  if (edges_per_side < 1) throw std::invalid_argument("inflow_mesh: edges_per_side must be >= 1");
  struct Side {
    Point start;
    Point end;
    Point normal;
  };
  const Side sides[] = {
      {Point(d.x_min, d.y_min), Point(d.x_max, d.y_min), Point(0.0, -1.0)},
      {Point(d.x_max, d.y_min), Point(d.x_max, d.y_max), Point(1.0, 0.0)},
      {Point(d.x_max, d.y_max), Point(d.x_min, d.y_max), Point(0.0, 1.0)},
      {Point(d.x_min, d.y_max), Point(d.x_min, d.y_min), Point(-1.0, 0.0)},
  };
  InflowBoundaryMesh mesh;
  for (const auto& side : sides) {
    const Point step = (side.end - side.start) / edges_per_side;
    const double len = step.norm();
    for (int k = 0; k < edges_per_side; ++k) {
      const Point mid = side.start + (k + 0.5) * step;
      const double bn = beta(mid).dot(side.normal);
      if (bn < 0.0) mesh.edges.push_back({mid, len, side.normal, -bn});
    }
  }
  return mesh;
}

}  // namespace ane
