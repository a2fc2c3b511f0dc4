#pragma once

// Test problems and their discrete least-squares objectives.
//
// Function fitting minimizes ||f - v||_T^2 over the quadrature grid. The
// advection-reaction problem  beta . grad u + gamma u = f,  u = g on the inflow
// boundary, is solved by minimizing
//
//   L_T(v; f) = sum_q w_q (beta . grad v + gamma v - f)^2(x_q)
//             + sum_E |beta . n| (v - g)^2(x_E) |E|.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "ane/geometry.hpp"
#include "ane/network.hpp"
#include "ane/quadrature.hpp"

namespace ane {

struct FunctionTarget {
  std::string name;
  RectDomain domain;
  ScalarField f;
  double alpha = 0.0;
};

struct AdvectionProblem {
  std::string name;
  RectDomain domain;
  VectorField beta;
  ScalarField gamma;
  ScalarField f;
  ScalarField g;
  std::optional<ScalarField> exact_u;
};

using Problem = std::variant<FunctionTarget, AdvectionProblem>;

/// tanh((x^2 + y^2 - 1/4) / alpha) - tanh(3 / (4 alpha)) on [-1, 1]^2: a sharp
/// transition across the circle of radius 1/2.
inline FunctionTarget target_transition(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("target_transition: alpha must be positive");
  FunctionTarget t;
  t.name = "transition";
  t.domain = RectDomain(-1.0, 1.0, -1.0, 1.0);
  t.alpha = alpha;
  t.f = [alpha](const Point& p) {
    return std::tanh((p.squaredNorm() - 0.25) / alpha) - std::tanh(0.75 / alpha);
  };
  return t;
}

/// Piecewise-constant advection over (0,1)^2 whose solution jumps across two
/// line segments meeting on the diagonal.
inline AdvectionProblem problem_two_segments() {
  constexpr double s2 = std::numbers::sqrt2;
  constexpr double cut = 43.0 / 64.0;
  AdvectionProblem p;
  p.name = "two-segments";
  p.domain = RectDomain(0.0, 1.0, 0.0, 1.0);
  p.beta = [](const Point& x) {
    return x.y() < x.x() ? Point(1.0 - s2, 1.0) : Point(-1.0, s2 - 1.0);
  };
  p.gamma = [](const Point&) { return 0.0; };
  p.f = [](const Point&) { return 0.0; };
  p.g = [](const Point& x) {
    const bool bottom_left = std::abs(x.y()) <= 1e-12 && x.x() > 0.0 && x.x() < cut;
    return bottom_left ? -1.0 : 1.0;
  };
  p.exact_u = [](const Point& x) {
    const Point xi = x.y() < x.x() ? Point(1.0, s2 - 1.0) : Point(s2 - 1.0, 1.0);
    return xi.dot(x) < cut ? -1.0 : 1.0;
  };
  return p;
}

/// Constant advection (1,1)/sqrt(2), reaction 1, with the manufactured
/// solution sin(x+y) above the diagonal and cos(x+y) below it.
inline AdvectionProblem problem_nonconstant_jump() {
  constexpr double s2 = std::numbers::sqrt2;
  AdvectionProblem p;
  p.name = "nonconstant-jump";
  p.domain = RectDomain(0.0, 1.0, 0.0, 1.0);
  p.beta = [](const Point&) { return Point(1.0 / s2, 1.0 / s2); };
  p.gamma = [](const Point&) { return 1.0; };
  p.f = [](const Point& x) {
    const double t = x.x() + x.y();
    return x.y() > x.x() ? s2 * std::cos(t) + std::sin(t) : -s2 * std::sin(t) + std::cos(t);
  };
  // Inflow sides are x = 0 (above the diagonal) and y = 0 (below it); the
  // corner takes the bottom value.
  p.g = [](const Point& x) {
    const double t = x.x() + x.y();
    return x.y() > x.x() ? std::sin(t) : std::cos(t);
  };
  p.exact_u = p.g;
  return p;
}

inline Problem problem_by_name(const std::string& name, double alpha = 0.01) {
  if (name == "transition") return target_transition(alpha);
  if (name == "two-segments") return problem_two_segments();
  if (name == "nonconstant-jump") return problem_nonconstant_jump();
  throw std::invalid_argument("unknown problem '" + name + "'");
}

inline const RectDomain& problem_domain(const Problem& p) {
  return std::visit([](const auto& q) -> const RectDomain& { return q.domain; }, p);
}

inline Eigen::VectorXd sample(const ScalarField& f, const Points& pts) {
  Eigen::VectorXd out(pts.cols());
  for (Eigen::Index q = 0; q < pts.cols(); ++q) out[q] = f(pts.col(q));
  return out;
}

/// ||f - v||_T^2 with the target sampled once on the grid.
class FunctionFitObjective {
 public:
  FunctionFitObjective(const FunctionTarget& target, const QuadratureGrid& grid)
      : grid_(&grid), fvals_(sample(target.f, grid.points)) {
    fnorm_ = discrete_norm(grid, fvals_);
  }

  const QuadratureGrid& grid() const { return *grid_; }
  const Eigen::VectorXd& target_values() const { return fvals_; }
  double target_norm() const { return fnorm_; }

  /// Residual f - v on the grid.
  Eigen::VectorXd residual(const Network& net) const { return fvals_ - forward(net, grid_->points); }

  double loss(const Network& net) const {
    const Eigen::VectorXd r = residual(net);
    return grid_->weight * r.squaredNorm();
  }

  /// Loss and its gradient with respect to the flat parameters.
  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net) const {
    double loss = 0.0;
    const double w = grid_->weight;
    Network g = accumulate_gradient(
        net, grid_->points, nullptr,
        [&](Eigen::Index begin, const Eigen::RowVectorXd& v, const Eigen::RowVectorXd&,
            Eigen::RowVectorXd& c, Eigen::RowVectorXd&) {
          const Eigen::RowVectorXd r = fvals_.segment(begin, v.size()).transpose() - v;
          loss += w * r.squaredNorm();
          c = -2.0 * w * r;
        });
    return {loss, g.flatten()};
  }

  /// ||f - v||_T / ||f||_T.
  double relative_error(const Network& net) const {
    return std::sqrt(loss(net)) / fnorm_;
  }

 private:
  const QuadratureGrid* grid_;
  Eigen::VectorXd fvals_;
  double fnorm_ = 0.0;
};

inline std::pair<double, Eigen::VectorXd> fn_loss(const FunctionTarget& target, const Network& net,
                                                  const QuadratureGrid& grid) {
  return FunctionFitObjective(target, grid).loss_and_gradient(net);
}

/// Residuals of the discrete least-squares functional.
struct LsnnResiduals {
  Eigen::VectorXd interior;  // beta . grad v + gamma v - f at x_q
  Eigen::VectorXd boundary;  // v - g at x_E
};

/// How beta . grad v is evaluated at the collocation points. kExact uses the
/// network's piecewise-constant gradient; the discrete functional then jumps
/// whenever a breaking line crosses a point. kCentralDifference uses
/// (v(x + h beta) - v(x - h beta)) / 2h, which is continuous in the parameters.
enum class SlopeRule { kExact, kCentralDifference };

class LsnnObjective {
 public:
  LsnnObjective(const AdvectionProblem& problem, const QuadratureGrid& grid,
                const InflowBoundaryMesh& inflow, SlopeRule rule = SlopeRule::kExact,
                double step_fraction = 0.5)
      : grid_(&grid), inflow_(&inflow), rule_(rule) {
    const Eigen::Index q = grid.size();
    dirs_.resize(2, q);
    for (Eigen::Index i = 0; i < q; ++i) dirs_.col(i) = problem.beta(grid.points.col(i));
    if (rule_ == SlopeRule::kCentralDifference) {
      if (!(step_fraction > 0.0)) throw std::invalid_argument("LsnnObjective: step fraction must be positive");
      const auto& d = grid.domain;
      step_ = step_fraction * std::min(d.width(), d.height()) / grid.resolution;
      plus_ = grid.points + step_ * dirs_;
      minus_ = grid.points - step_ * dirs_;
    }
    gamma_ = sample(problem.gamma, grid.points);
    f_ = sample(problem.f, grid.points);
    bpoints_ = inflow.midpoints();
    g_ = sample(problem.g, bpoints_);
    bweights_.resize(static_cast<Eigen::Index>(inflow.size()));
    for (std::size_t e = 0; e < inflow.size(); ++e) {
      bweights_[static_cast<Eigen::Index>(e)] = inflow.edges[e].flux * inflow.edges[e].length;
    }
    if (problem.exact_u) exact_ = sample(*problem.exact_u, grid.points);
  }

  const QuadratureGrid& grid() const { return *grid_; }
  const InflowBoundaryMesh& inflow() const { return *inflow_; }
  const Points& boundary_points() const { return bpoints_; }
  /// |beta . n| |E| per inflow edge.
  const Eigen::VectorXd& boundary_weights() const { return bweights_; }
  const Points& directions() const { return dirs_; }
  const std::optional<Eigen::VectorXd>& exact_values() const { return exact_; }
  SlopeRule slope_rule() const { return rule_; }
  double difference_step() const { return step_; }

  /// beta . grad v at the collocation points under the configured rule.
  Eigen::VectorXd slopes(const Network& net) const {
    if (rule_ == SlopeRule::kExact) return directional_derivative(net, grid_->points, dirs_);
    return (forward(net, plus_) - forward(net, minus_)) / (2.0 * step_);
  }

  /// Outputs of hidden layer `layer` and their slopes along beta, one column per point.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> layer_values_and_slopes(const Network& net, int layer) const {
    if (rule_ == SlopeRule::kExact) return eval_layer_outputs_with_slopes(net, layer, grid_->points, dirs_);
    return {eval_layer_outputs(net, layer, grid_->points),
            (eval_layer_outputs(net, layer, plus_) - eval_layer_outputs(net, layer, minus_)) / (2.0 * step_)};
  }

  /// Residuals with data (f, g), or of the homogeneous problem when
  /// `homogeneous` is set.
  LsnnResiduals residuals(const Network& net, bool homogeneous = false) const {
    LsnnResiduals r;
    const Eigen::VectorXd v = forward(net, grid_->points);
    r.interior = slopes(net) + gamma_.cwiseProduct(v);
    if (!homogeneous) r.interior -= f_;
    r.boundary = forward(net, bpoints_);
    if (!homogeneous) r.boundary -= g_;
    return r;
  }

  double functional(const LsnnResiduals& r) const {
    return grid_->weight * r.interior.squaredNorm() + bweights_.dot(r.boundary.cwiseAbs2());
  }

  double loss(const Network& net) const { return functional(residuals(net)); }

  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net) const {
    double loss = 0.0;
    const double w = grid_->weight;
    if (rule_ == SlopeRule::kCentralDifference) {
      const Eigen::VectorXd r = slopes(net) + gamma_.cwiseProduct(forward(net, grid_->points)) - f_;
      const Eigen::VectorXd s = 2.0 * w * r;
      Eigen::VectorXd grad = grad_params(net, plus_, s / (2.0 * step_)) -
                             grad_params(net, minus_, s / (2.0 * step_)) +
                             grad_params(net, grid_->points, s.cwiseProduct(gamma_));
      loss = w * r.squaredNorm();
      if (bpoints_.cols() > 0) {
        const Eigen::VectorXd rb = forward(net, bpoints_) - g_;
        loss += bweights_.dot(rb.cwiseAbs2());
        grad += grad_params(net, bpoints_, 2.0 * bweights_.cwiseProduct(rb));
      }
      return {loss, grad};
    }
    Network gi = accumulate_gradient(
        net, grid_->points, &dirs_,
        [&](Eigen::Index begin, const Eigen::RowVectorXd& v, const Eigen::RowVectorXd& d,
            Eigen::RowVectorXd& c, Eigen::RowVectorXd& s) {
          const Eigen::Index b = v.size();
          const Eigen::RowVectorXd gam = gamma_.segment(begin, b).transpose();
          const Eigen::RowVectorXd r = d + gam.cwiseProduct(v) - f_.segment(begin, b).transpose();
          loss += w * r.squaredNorm();
          s = 2.0 * w * r;
          c = s.cwiseProduct(gam);
        });
    Eigen::VectorXd grad = gi.flatten();
    if (bpoints_.cols() > 0) {
      Network gb = accumulate_gradient(
          net, bpoints_, nullptr,
          [&](Eigen::Index begin, const Eigen::RowVectorXd& v, const Eigen::RowVectorXd&,
              Eigen::RowVectorXd& c, Eigen::RowVectorXd&) {
            const Eigen::Index b = v.size();
            const Eigen::RowVectorXd bw = bweights_.segment(begin, b).transpose();
            const Eigen::RowVectorXd r = v - g_.segment(begin, b).transpose();
            loss += bw.dot(r.cwiseAbs2());
            c = 2.0 * bw.cwiseProduct(r);
          });
      grad += gb.flatten();
    }
    return {loss, grad};
  }

  /// sqrt(L_T(v; f)) / sqrt(L_T(v; 0)).
  double relative_estimator(const Network& net) const {
    const double num = loss(net);
    const double den = functional(residuals(net, true));
    return den > 0.0 ? std::sqrt(num / den) : std::numeric_limits<double>::infinity();
  }

 private:
  const QuadratureGrid* grid_;
  const InflowBoundaryMesh* inflow_;
  SlopeRule rule_;
  double step_ = 0.0;
  Points dirs_;
  Points plus_;
  Points minus_;
  Eigen::VectorXd gamma_;
  Eigen::VectorXd f_;
  Points bpoints_;
  Eigen::VectorXd g_;
  Eigen::VectorXd bweights_;
  std::optional<Eigen::VectorXd> exact_;
};

inline std::pair<double, Eigen::VectorXd> lsnn_loss(const AdvectionProblem& problem,
                                                    const Network& net, const QuadratureGrid& grid,
                                                    const InflowBoundaryMesh& inflow) {
  return LsnnObjective(problem, grid, inflow).loss_and_gradient(net);
}

/// ||u - v||_T / ||u||_T.
inline double l2_relative_error(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact) {
  const double den = exact.norm();
  if (den == 0.0) throw std::invalid_argument("l2_relative_error: exact solution vanishes on the grid");
  return (exact - approx).norm() / den;
}

inline double l2_relative_error(const Network& net, const ScalarField& exact_u,
                                const QuadratureGrid& grid) {
  return l2_relative_error(forward(net, grid.points), sample(exact_u, grid.points));
}

}  // namespace ane
