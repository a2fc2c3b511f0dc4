#pragma once

// Per-cell error indicators, marking strategies and the improvement rate.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ane/partition.hpp"
#include "ane/problems.hpp"

namespace ane {

struct IndicatorSet {
  std::vector<double> values;      // xi_K, indexed by cell id
  double total = 0.0;              // sqrt(sum xi_K^2) / normalizer
  double normalizer = 1.0;
  bool relative = false;
  std::vector<int> empty_cells;    // cells holding no quadrature point

  double sum_of_squares() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return s;
  }
};

/// Sums per-point squared contributions into cells.
inline std::vector<double> accumulate_by_cell(std::size_t cells, const std::vector<int>& owner,
                                              const Eigen::Ref<const Eigen::VectorXd>& contrib) {
  std::vector<double> sq(cells, 0.0);
  for (std::size_t q = 0; q < owner.size(); ++q) {
    sq[static_cast<std::size_t>(owner[q])] += contrib[static_cast<Eigen::Index>(q)];
  }
  return sq;
}

inline std::vector<int> cells_without_points(std::size_t cells, const std::vector<int>& owner) {
  std::vector<char> hit(cells, 0);
  for (int id : owner) hit[static_cast<std::size_t>(id)] = 1;
  std::vector<int> empty;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!hit[c]) empty.push_back(static_cast<int>(c));
  }
  return empty;
}

/// xi_K = ||f - v||_{K,T}; total = sqrt(sum xi_K^2) / ||f||_T.
inline IndicatorSet fn_indicators(const FunctionFitObjective& objective, const Network& net,
                                  const PhysicalPartition& pp, const std::vector<int>& owner) {
  const auto& grid = objective.grid();
  if (owner.size() != static_cast<std::size_t>(grid.size())) {
    throw std::invalid_argument("fn_indicators: cell assignment does not match the grid");
  }
  const Eigen::VectorXd r = objective.residual(net);
  const Eigen::VectorXd contrib = grid.weight * r.cwiseAbs2();
  IndicatorSet ind;
  ind.values = accumulate_by_cell(pp.size(), owner, contrib);
  for (double& v : ind.values) v = std::sqrt(v);
  ind.relative = true;
  ind.normalizer = objective.target_norm();
  ind.total = std::sqrt(ind.sum_of_squares()) / ind.normalizer;
  ind.empty_cells = cells_without_points(pp.size(), owner);
  return ind;
}

inline IndicatorSet fn_indicators(const FunctionFitObjective& objective, const Network& net,
                                  const PhysicalPartition& pp) {
  return fn_indicators(objective, net, pp, locate(pp, objective.grid().points));
}

/// xi_K^2 = sum_{q in K} w_q r_q^2 + sum_{x_E in K} |beta . n| |E| (v - g)^2(x_E);
/// total = sqrt(sum xi_K^2) = sqrt(L_T(v; f)).
inline IndicatorSet lsnn_indicators(const LsnnObjective& objective, const Network& net,
                                    const PhysicalPartition& pp, const std::vector<int>& owner,
                                    const std::vector<int>& boundary_owner) {
  const auto& grid = objective.grid();
  if (owner.size() != static_cast<std::size_t>(grid.size()) ||
      boundary_owner.size() != static_cast<std::size_t>(objective.boundary_points().cols())) {
    throw std::invalid_argument("lsnn_indicators: cell assignment size mismatch");
  }
  const LsnnResiduals r = objective.residuals(net);
  IndicatorSet ind;
  ind.values = accumulate_by_cell(pp.size(), owner, grid.weight * r.interior.cwiseAbs2());
  const auto bsq = accumulate_by_cell(
      pp.size(), boundary_owner, objective.boundary_weights().cwiseProduct(r.boundary.cwiseAbs2()));
  for (std::size_t c = 0; c < ind.values.size(); ++c) ind.values[c] = std::sqrt(ind.values[c] + bsq[c]);
  ind.relative = false;
  ind.normalizer = 1.0;
  ind.total = std::sqrt(ind.sum_of_squares());
  ind.empty_cells = cells_without_points(pp.size(), owner);
  return ind;
}

inline IndicatorSet lsnn_indicators(const LsnnObjective& objective, const Network& net,
                                    const PhysicalPartition& pp) {
  return lsnn_indicators(objective, net, pp, locate(pp, objective.grid().points),
                         locate(pp, objective.boundary_points()));
}

/// Cells with xi_K >= mean xi_K.
inline std::vector<int> mark_average(const IndicatorSet& ind) {
  std::vector<int> marked;
  if (ind.values.empty()) return marked;
  const double mean =
      std::accumulate(ind.values.begin(), ind.values.end(), 0.0) / static_cast<double>(ind.values.size());
  for (std::size_t c = 0; c < ind.values.size(); ++c) {
    if (ind.values[c] >= mean) marked.push_back(static_cast<int>(c));
  }
  return marked;
}

/// Shortest prefix of cells sorted by xi_K (descending, ties by id) whose
/// squared indicators reach gamma1 of the total.
inline std::vector<int> mark_bulk(const IndicatorSet& ind, double gamma1) {
  if (!(gamma1 > 0.0 && gamma1 < 1.0)) throw std::invalid_argument("mark_bulk: gamma1 must be in (0,1)");
  std::vector<int> order(ind.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ind.values[static_cast<std::size_t>(a)] > ind.values[static_cast<std::size_t>(b)];
  });
  const double total = ind.sum_of_squares();
  std::vector<int> marked;
  if (total <= 0.0) return marked;
  double acc = 0.0;
  for (int id : order) {
    if (acc >= gamma1 * total) break;
    const double v = ind.values[static_cast<std::size_t>(id)];
    acc += v * v;
    marked.push_back(id);
  }
  return marked;
}

/// Relative error decrease per relative growth of N^r.
inline double improvement_rate(double xi_old, double xi_new, double n_old, double n_new, double r) {
  if (!(xi_old > 0.0)) throw std::domain_error("improvement_rate: xi_old must be positive");
  if (!(n_new > n_old && n_old >= 1.0)) {
    throw std::invalid_argument("improvement_rate: expected N_new > N_old >= 1");
  }
  if (!(r > 0.0)) throw std::invalid_argument("improvement_rate: r must be positive");
  const double gain = (xi_old - xi_new) / xi_old;
  const double growth = (std::pow(n_new, r) - std::pow(n_old, r)) / std::pow(n_new, r);
  return gain / growth;
}

}  // namespace ane
