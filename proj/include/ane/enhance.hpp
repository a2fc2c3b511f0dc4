#pragma once

// Adaptive network enhancement: neuron initialization, the width/depth
// decision, and the train -> estimate -> enhance drivers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ane/estimators.hpp"
#include "ane/geometry.hpp"
#include "ane/network.hpp"
#include "ane/optimizer.hpp"
#include "ane/partition.hpp"
#include "ane/problems.hpp"
#include "ane/quadrature.hpp"

namespace ane {

inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("ANE_LOG");
    return env ? std::atoi(env) : 0;
  }();
  return level;
}

enum class Marking { kAverage, kBulk };

struct AneConfig {
  double epsilon = 0.05;
  double delta = 0.6;
  double rate_exponent = 1.0;
  Marking marking = Marking::kBulk;
  double gamma1 = 0.5;
  int max_loops = 12;
  int initial_width = 12;
  int quadrature_resolution = 200;
  int boundary_resolution = 0;  // 0: same as quadrature_resolution
  SlopeRule slope_rule = SlopeRule::kExact;  // LSNN only
  AdamConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("AneConfig: epsilon must be positive");
    if (!(delta > 0.0 && delta < 2.0)) throw std::invalid_argument("AneConfig: delta must be in (0,2)");
    if (!(rate_exponent > 0.0)) throw std::invalid_argument("AneConfig: r must be positive");
    if (marking == Marking::kBulk && !(gamma1 > 0.0 && gamma1 < 1.0)) {
      throw std::invalid_argument("AneConfig: gamma1 must be in (0,1)");
    }
    if (max_loops < 1) throw std::invalid_argument("AneConfig: max_loops must be >= 1");
    if (initial_width < 1) throw std::invalid_argument("AneConfig: initial width must be >= 1");
    if (quadrature_resolution < 1) throw std::invalid_argument("AneConfig: m must be >= 1");
    if (boundary_resolution < 0) throw std::invalid_argument("AneConfig: m_b must be >= 0");
    optimizer.validate();
  }
};

enum class RunStatus { kAccepted, kRolledBack, kFinal };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kAccepted: return "accepted";
    case RunStatus::kRolledBack: return "rolled_back";
    case RunStatus::kFinal: return "final";
  }
  return "unknown";
}

struct AneRunRecord {
  std::string architecture;
  std::size_t params = 0;
  double error = 0.0;    // reported error (fit accuracy, or L2 error against the exact solution)
  double xi = 0.0;       // estimator driving the improvement rate
  double xi_rel = 0.0;   // estimator driving the stopping test
  std::optional<double> eta;
  RunStatus status = RunStatus::kAccepted;
  int iterations = 0;
  StopReason stop_reason = StopReason::kMaxIters;
};

struct AneHistory {
  std::vector<AneRunRecord> records;
  int low_rate_streak = 0;  // consecutive runs with eta <= delta since the last layer addition
  bool converged = false;
};

/// Counts a run's improvement rate towards the layer-addition test.
inline void note_improvement_rate(AneHistory& history, double eta, double delta) {
  history.low_rate_streak = eta <= delta ? history.low_rate_streak + 1 : 0;
}

// ---------------------------------------------------------------------------
// Initialization

/// Two-layer network whose first-layer lines split the domain uniformly: the
/// angle-0 group gives vertical lines x = x_min + i (x_max - x_min) / n_v, the
/// angle-pi/2 group horizontal lines y = y_min + i (y_max - y_min) / n_h. An
/// odd extra neuron joins the horizontal group. Output parameters are zero.
inline Network init_two_layer_uniform(int n1, const RectDomain& domain) {
  if (n1 < 1) throw std::invalid_argument("init_two_layer_uniform: n1 must be >= 1");
  const int n_vertical = n1 / 2;
  const int n_horizontal = n1 - n_vertical;
  Network net = Network::zeros(Architecture({n1}));
  int k = 0;
  for (int i = 0; i < n_vertical; ++i, ++k) {
    net.first.angles[k] = 0.0;
    net.first.biases[k] = domain.x_min + i * domain.width() / n_vertical;
  }
  for (int i = 0; i < n_horizontal; ++i, ++k) {
    net.first.angles[k] = std::numbers::pi / 2.0;
    net.first.biases[k] = domain.y_min + i * domain.height() / n_horizontal;
  }
  return net;
}

struct NewFirstLayerNeuron {
  double angle = 0.0;
  double bias = 0.0;
};

namespace detail {

inline Point canonical_direction(Point n) {
  n.normalize();
  if (n.x() < 0.0 || (n.x() == 0.0 && n.y() < 0.0)) n = -n;
  return n;
}

/// Unit eigenvector of the smallest eigenvalue of a 2x2 covariance; an
/// isotropic covariance yields `tie_normal`.
inline Point smallest_variance_direction(const Eigen::Matrix2d& cov, const Point& tie_normal) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const auto& lambda = eig.eigenvalues();
  if (std::abs(lambda[1] - lambda[0]) <= 1e-12 * std::max(1e-300, std::abs(lambda[0]) + std::abs(lambda[1]))) {
    return tie_normal;
  }
  return canonical_direction(eig.eigenvectors().col(0));
}

inline Eigen::Matrix2d covariance(const std::vector<Point>& pts) {
  Point mean = Point::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  return cov / static_cast<double>(pts.size());
}

}  // namespace detail

/// One line per marked cell through the cell centroid, with normal along the
/// direction of smallest variance of the quadrature points in the cell.
/// Cells with fewer than three points use their vertices instead.
inline std::vector<NewFirstLayerNeuron> init_new_first_layer_neurons(
    const std::vector<int>& marked, const PhysicalPartition& pp, const std::vector<int>& owner,
    const Points& points) {
  std::vector<std::vector<Point>> members(pp.size());
  std::vector<char> wanted(pp.size(), 0);
  for (int id : marked) wanted[static_cast<std::size_t>(id)] = 1;
  for (std::size_t q = 0; q < owner.size(); ++q) {
    const auto c = static_cast<std::size_t>(owner[q]);
    if (wanted[c]) members[c].push_back(points.col(static_cast<Eigen::Index>(q)));
  }
  std::vector<NewFirstLayerNeuron> out;
  out.reserve(marked.size());
  for (int id : marked) {
    const auto& cell = pp.cell(id);
    auto pts = members[static_cast<std::size_t>(id)];
    if (pts.size() < 3) pts = cell.vertices;
    const BoundingBox box = bounding_box(cell.vertices);
    const Point extent = box.hi - box.lo;
    const Point tie = extent.x() >= extent.y() ? Point(1.0, 0.0) : Point(0.0, 1.0);
    const Point normal = detail::smallest_variance_direction(detail::covariance(pts), tie);
    out.push_back({std::atan2(normal.y(), normal.x()), normal.dot(cell.centroid())});
  }
  return out;
}

/// Points on which a new deep neuron's breaking poly-line should pass, from
/// the farthest pair of boundary-edge midpoints and the region centroid;
/// regions whose centroid falls outside are halved recursively (depth <= 8).
inline std::vector<Point> heuristic_point_set(const RegionGeometry& region, int max_depth = 8) {
  std::vector<Point> out;
  const auto mids = region.boundary_midpoints();
  if (mids.size() < 2) return out;
  std::size_t a = 0;
  std::size_t b = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < mids.size(); ++i) {
    for (std::size_t j = i + 1; j < mids.size(); ++j) {
      const double d = (mids[i] - mids[j]).squaredNorm();
      if (d > best) {
        best = d;
        a = i;
        b = j;
      }
    }
  }
  if (best <= 0.0) return out;
  const double tol = 10.0 * region.tolerances().geom;
  auto add = [&](const std::vector<Point>& pts) {
    for (const auto& p : pts) {
      const bool dup = std::any_of(out.begin(), out.end(), [&](const Point& q) { return (q - p).norm() <= tol; });
      if (!dup) out.push_back(p);
    }
  };

  std::function<void(const RegionGeometry&, const Point&, const Point&, int)> visit =
      [&](const RegionGeometry& c, const Point& v1, const Point& v2, int depth) {
        if (c.empty()) return;
        const Point o = c.centroid();
        if (c.contains(o) || depth >= max_depth || (v2 - v1).norm() <= tol) {
          add(c.crossings(o, v1));
          add(c.crossings(o, v2));
          return;
        }
        const Point normal = (v2 - v1).normalized();
        const auto [c1, c2] = c.split(Line{normal, normal.dot(o)});
        Point v0 = v1;
        double best_sum = -1.0;
        for (const auto* part : {&c1, &c2}) {
          for (const auto& m : part->boundary_midpoints()) {
            const double s = (m - v1).norm() + (m - v2).norm();
            if (s > best_sum) {
              best_sum = s;
              v0 = m;
            }
          }
        }
        // v1 lies on the negative side of the cut, v2 on the positive side.
        visit(c1, v0, v1, depth + 1);
        visit(c2, v0, v2, depth + 1);
      };
  visit(region, mids[a], mids[b], 0);
  return out;
}

struct DeepNeuronInit {
  Eigen::VectorXd weights;  // incoming, length n_{k-1}
  double bias = 0.0;
  double output_weight = 0.0;
  bool overdetermined = false;
};

/// Incoming weights of a neuron fed by hidden layer `input_layer` such that its
/// pre-activation b0 + sum_i w_i phi_i vanishes at every point of `xs` (in
/// the least-squares sense when overdetermined): the right singular vector of
/// the smallest singular value of the rows (1, phi_1(x_j), ...), unit length.
/// The output weight is drawn from N(0, 0.1^2).
inline DeepNeuronInit init_deep_neuron(const Network& net, int input_layer,
                                       const std::vector<Point>& xs, std::mt19937_64& rng) {
  if (xs.empty()) throw std::invalid_argument("init_deep_neuron: empty point set");
  Points pts(2, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) pts.col(static_cast<Eigen::Index>(j)) = xs[j];
  const Eigen::MatrixXd phi = eval_layer_outputs(net, input_layer, pts);
  Eigen::MatrixXd rows(pts.cols(), phi.rows() + 1);
  rows.col(0).setOnes();
  rows.rightCols(phi.rows()) = phi.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeFullV);
  Eigen::VectorXd w = svd.matrixV().col(rows.cols() - 1);
  w /= w.norm();
  // Sign fixed so the largest-magnitude entry is positive.
  Eigen::Index imax = 0;
  w.cwiseAbs().maxCoeff(&imax);
  if (w[imax] < 0.0) w = -w;
  DeepNeuronInit out;
  out.bias = -w[0];  // g = w . phi - b
  out.weights = w.tail(phi.rows());
  out.overdetermined = rows.rows() >= rows.cols();
  std::normal_distribution<double> normal(0.0, 0.1);
  out.output_weight = normal(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Network surgery

/// Appends first-layer neurons with zero output weight. Only valid for
/// two-layer networks.
inline Network add_first_layer_neurons(const Network& net, const std::vector<NewFirstLayerNeuron>& add) {
  if (net.hidden_layers() != 1) throw std::logic_error("add_first_layer_neurons: network is not two-layer");
  Network out = net;
  const Eigen::Index n = net.first.angles.size();
  const auto k = static_cast<Eigen::Index>(add.size());
  out.first.angles.conservativeResize(n + k);
  out.first.biases.conservativeResize(n + k);
  out.output.weights.conservativeResize(n + k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.first.angles[n + i] = add[static_cast<std::size_t>(i)].angle;
    out.first.biases[n + i] = add[static_cast<std::size_t>(i)].bias;
    out.output.weights[n + i] = 0.0;
  }
  return out;
}

/// Appends neurons to the last hidden layer (which must not be the first)
/// with zero output weight.
inline Network add_last_layer_neurons(const Network& net, const std::vector<DeepNeuronInit>& add) {
  if (net.hidden_layers() < 2) throw std::logic_error("add_last_layer_neurons: need a deep network");
  Network out = net;
  auto& layer = out.hidden.back();
  const Eigen::Index n = layer.biases.size();
  const auto k = static_cast<Eigen::Index>(add.size());
  layer.weights.conservativeResize(n + k, Eigen::NoChange);
  layer.biases.conservativeResize(n + k);
  out.output.weights.conservativeResize(n + k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& a = add[static_cast<std::size_t>(i)];
    layer.weights.row(n + i) = a.weights.transpose();
    layer.biases[n + i] = a.bias;
    out.output.weights[n + i] = 0.0;
  }
  return out;
}

/// Appends a hidden layer; its neurons feed the output with their drawn
/// output weights and the output bias is reset to zero.
inline Network add_hidden_layer(const Network& net, const std::vector<DeepNeuronInit>& add) {
  if (add.empty()) throw std::invalid_argument("add_hidden_layer: no neurons");
  Network out = net;
  const auto k = static_cast<Eigen::Index>(add.size());
  DenseLayerParams layer{Eigen::MatrixXd(k, net.width(net.hidden_layers())), Eigen::VectorXd(k)};
  out.output.weights.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& a = add[static_cast<std::size_t>(i)];
    layer.weights.row(i) = a.weights.transpose();
    layer.biases[i] = a.bias;
    out.output.weights[i] = a.output_weight;
  }
  out.hidden.push_back(std::move(layer));
  out.output.bias = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Problem-specific services used by the drivers

struct RunMetrics {
  double error = 0.0;
  double xi = 0.0;
  double xi_rel = 0.0;
  double stop_value = 0.0;
};

class AneTask {
 public:
  virtual ~AneTask() = default;
  virtual const RectDomain& domain() const = 0;
  virtual const QuadratureGrid& grid() const = 0;
  virtual std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net) const = 0;
  virtual IndicatorSet indicators(const Network& net, const PhysicalPartition& pp,
                                  const std::vector<int>& owner) const = 0;
  virtual RunMetrics metrics(const Network& net, const IndicatorSet& ind) const = 0;
  /// Least-squares output layer for fixed hidden layers.
  virtual OutputParams solve_output(const Network& net) const = 0;
};

namespace detail {

/// Minimum-norm solution of the Gram system M c = F; returns (weights, bias)
/// for v = sum_i c_i phi_i + c_0.
inline OutputParams solve_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  cod.setThreshold(1e-13);
  const Eigen::VectorXd c = cod.solve(rhs);
  OutputParams out;
  out.weights = c.tail(c.size() - 1);
  out.bias = -c[0];
  return out;
}

}  // namespace detail

class FunctionFitTask final : public AneTask {
 public:
  FunctionFitTask(FunctionTarget target, int m)
      : target_(std::move(target)), grid_(make_grid(target_.domain, m)), objective_(target_, grid_) {}

  FunctionFitTask(const FunctionFitTask&) = delete;
  FunctionFitTask& operator=(const FunctionFitTask&) = delete;

  const RectDomain& domain() const override { return target_.domain; }
  const QuadratureGrid& grid() const override { return grid_; }
  const FunctionFitObjective& objective() const { return objective_; }

  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net) const override {
    return objective_.loss_and_gradient(net);
  }
  IndicatorSet indicators(const Network& net, const PhysicalPartition& pp,
                          const std::vector<int>& owner) const override {
    return fn_indicators(objective_, net, pp, owner);
  }
  RunMetrics metrics(const Network&, const IndicatorSet& ind) const override {
    return {ind.total, ind.total, ind.total, ind.total};
  }

  /// Gram system over {1, phi_1, ..., phi_n} of the last hidden layer.
  OutputParams solve_output(const Network& net) const override {
    const Eigen::MatrixXd phi = eval_layer_outputs(net, net.hidden_layers(), grid_.points);
    Eigen::MatrixXd basis(phi.rows() + 1, phi.cols());
    basis.row(0).setOnes();
    basis.bottomRows(phi.rows()) = phi;
    const Eigen::MatrixXd gram = grid_.weight * basis * basis.transpose();
    const Eigen::VectorXd rhs = grid_.weight * basis * objective_.target_values();
    return detail::solve_gram(gram, rhs);
  }

 private:
  FunctionTarget target_;
  QuadratureGrid grid_;
  FunctionFitObjective objective_;
};

class LsnnTask final : public AneTask {
 public:
  LsnnTask(AdvectionProblem problem, int m, int m_b, SlopeRule rule = SlopeRule::kExact)
      : problem_(std::move(problem)),
        grid_(make_grid(problem_.domain, m)),
        inflow_(inflow_mesh(problem_.domain, problem_.beta, m_b > 0 ? m_b : m)),
        objective_(problem_, grid_, inflow_, rule) {}

  LsnnTask(const LsnnTask&) = delete;
  LsnnTask& operator=(const LsnnTask&) = delete;

  const RectDomain& domain() const override { return problem_.domain; }
  const QuadratureGrid& grid() const override { return grid_; }
  const LsnnObjective& objective() const { return objective_; }
  const InflowBoundaryMesh& inflow() const { return inflow_; }

  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net) const override {
    return objective_.loss_and_gradient(net);
  }
  IndicatorSet indicators(const Network& net, const PhysicalPartition& pp,
                          const std::vector<int>& owner) const override {
    return lsnn_indicators(objective_, net, pp, owner, locate(pp, objective_.boundary_points()));
  }
  RunMetrics metrics(const Network& net, const IndicatorSet& ind) const override {
    RunMetrics m;
    m.xi = ind.total;
    m.xi_rel = objective_.relative_estimator(net);
    m.stop_value = m.xi_rel;
    m.error = objective_.exact_values()
                  ? l2_relative_error(forward(net, grid_.points), *objective_.exact_values())
                  : std::numeric_limits<double>::quiet_NaN();
    return m;
  }

  /// Normal equations of L_T, which is quadratic in the output layer.
  OutputParams solve_output(const Network& net) const override {
    const int last = net.hidden_layers();
    const auto [phi, dphi] = objective_.layer_values_and_slopes(net, last);
    const Eigen::Index n = phi.rows() + 1;
    const Eigen::VectorXd gamma = sample(problem_.gamma, grid_.points);
    const Eigen::VectorXd f = sample(problem_.f, grid_.points);
    Eigen::MatrixXd rows(n, phi.cols());
    rows.row(0) = gamma.transpose();
    rows.bottomRows(n - 1) = dphi + phi * gamma.asDiagonal();
    Eigen::MatrixXd gram = grid_.weight * rows * rows.transpose();
    Eigen::VectorXd rhs = grid_.weight * rows * f;

    const Points& bp = objective_.boundary_points();
    if (bp.cols() > 0) {
      const Eigen::MatrixXd bphi = eval_layer_outputs(net, last, bp);
      Eigen::MatrixXd brows(n, bp.cols());
      brows.row(0).setOnes();
      brows.bottomRows(n - 1) = bphi;
      const Eigen::VectorXd bw = objective_.boundary_weights();
      const Eigen::VectorXd g = sample(problem_.g, bp);
      gram += brows * bw.asDiagonal() * brows.transpose();
      rhs += brows * bw.cwiseProduct(g);
    }
    return detail::solve_gram(gram, rhs);
  }

 private:
  AdvectionProblem problem_;
  QuadratureGrid grid_;
  InflowBoundaryMesh inflow_;
  LsnnObjective objective_;
};

inline std::unique_ptr<AneTask> make_task(const Problem& problem, const AneConfig& cfg) {
  if (const auto* t = std::get_if<FunctionTarget>(&problem)) {
    return std::make_unique<FunctionFitTask>(*t, cfg.quadrature_resolution);
  }
  return std::make_unique<LsnnTask>(std::get<AdvectionProblem>(problem), cfg.quadrature_resolution,
                                    cfg.boundary_resolution, cfg.slope_rule);
}

inline OutputParams output_weight_solve(const Network& net, const AneTask& task) {
  return task.solve_output(net);
}

// ---------------------------------------------------------------------------
// Enhancement decision

struct AddWidth {
  int count = 0;
  int layer = 1;
  std::vector<int> marked;
  std::vector<Region> regions;
};

struct AddLayer {};

using Decision = std::variant<AddWidth, AddLayer>;

inline std::vector<int> mark(const IndicatorSet& ind, const AneConfig& cfg) {
  std::vector<int> marked =
      cfg.marking == Marking::kAverage ? mark_average(ind) : mark_bulk(ind, cfg.gamma1);
  if (marked.empty() && !ind.values.empty()) {
    const auto it = std::max_element(ind.values.begin(), ind.values.end());
    marked.push_back(static_cast<int>(it - ind.values.begin()));
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

/// A layer is added after two consecutive runs with eta <= delta; otherwise
/// the marked cells (two-layer network) or their connected regions (deeper
/// network) decide how many neurons the last hidden layer gains.
inline Decision enhancement_step(const AneHistory& history, const PhysicalPartition& pp,
                                 const IndicatorSet& ind, const AneConfig& cfg, const Network& net) {
  if (history.low_rate_streak >= 2) return AddLayer{};
  AddWidth w;
  w.marked = mark(ind, cfg);
  w.regions = regroup(pp, w.marked);
  w.layer = net.hidden_layers();
  w.count = w.layer == 1 ? static_cast<int>(w.marked.size()) : static_cast<int>(w.regions.size());
  return w;
}

// ---------------------------------------------------------------------------
// Drivers

/// A trained network with its partition hierarchy and error indicators.
struct TrainedState {
  Network net;
  std::vector<PhysicalPartition> levels;  // K^(1) .. K^(L-1)
  std::vector<int> owner;                 // cell of each quadrature point in levels.back()
  IndicatorSet indicators;
  RunMetrics metrics;
  std::size_t params = 0;

  const PhysicalPartition& partition() const { return levels.back(); }
};

struct LoopArtifacts {
  int loop = 0;
  const TrainedState* state = nullptr;
  const MinimizeResult* training = nullptr;
};

struct AneResult {
  AneHistory history;
  Network final_network;
  std::vector<std::string> warnings;
};

class AneDriver {
 public:
  AneDriver(const AneTask& task, AneConfig cfg) : task_(task), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
  }

  /// Called after every loop with the trained state.
  std::function<void(const LoopArtifacts&)> on_loop;

  /// Multi-layer driver. With `allow_depth` false it only widens the first
  /// layer.
  AneResult run(bool allow_depth = true) {
    AneResult result;
    AneHistory& history = result.history;
    Network net = init_two_layer_uniform(cfg_.initial_width, task_.domain());
    net.output = output_weight_solve(net, task_);

    std::optional<TrainedState> base;          // (xi, N) reference for eta
    std::optional<TrainedState> before_width;  // state preceding the last width step
    for (int loop = 1; loop <= cfg_.max_loops; ++loop) {
      MinimizeResult training;
      TrainedState state = train_and_estimate(std::move(net), &training);

      AneRunRecord rec;
      rec.architecture = state.net.architecture().to_string();
      rec.params = state.params;
      rec.error = state.metrics.error;
      rec.xi = state.metrics.xi;
      rec.xi_rel = state.metrics.xi_rel;
      rec.iterations = training.iterations;
      rec.stop_reason = training.reason;
      if (base && base->metrics.xi > 0.0 && state.params > base->params) {
        rec.eta = improvement_rate(base->metrics.xi, state.metrics.xi, static_cast<double>(base->params),
                                   static_cast<double>(state.params), cfg_.rate_exponent);
      }
      history.records.push_back(rec);
      log_record(rec);
      if (on_loop) on_loop({loop, &state, &training});

      const bool last_loop = loop == cfg_.max_loops;
      if (state.metrics.stop_value < cfg_.epsilon || last_loop) {
        history.converged = state.metrics.stop_value < cfg_.epsilon;
        history.records.back().status = RunStatus::kFinal;
        result.final_network = state.net;
        return result;
      }
      if (rec.eta) note_improvement_rate(history, *rec.eta, cfg_.delta);

      Decision decision = allow_depth ? enhancement_step(history, state.partition(), state.indicators,
                                                         cfg_, state.net)
                                      : Decision(width_only(state));
      if (std::holds_alternative<AddLayer>(decision) && before_width) {
        history.records.back().status = RunStatus::kRolledBack;
        TrainedState rolled = std::move(*before_width);
        before_width.reset();
        net = grow_layer(rolled, result.warnings);
        base = std::move(rolled);
        history.low_rate_streak = 0;
      } else {
        if (std::holds_alternative<AddLayer>(decision)) decision = width_only(state);
        net = grow_width(state, std::get<AddWidth>(decision), result.warnings);
        before_width = state;
        base = std::move(state);
      }
    }
    return result;  // unreachable: the last loop returns
  }

  TrainedState train_and_estimate(Network net, MinimizeResult* training = nullptr) {
    const Architecture arch = net.architecture();
    Network scratch = net;
    const LossAndGradient eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
      scratch.assign(p);
      auto [loss, grad] = task_.loss_and_gradient(scratch);
      g = std::move(grad);
      return loss;
    };
    MinimizeResult res = minimize(eval, net.flatten(), cfg_.optimizer);
    if (res.reason == StopReason::kNonFinite) {
      throw std::runtime_error("training diverged: " + res.diagnostic);
    }
    TrainedState st;
    st.net = Network::unflatten(arch, res.params);
    st.params = param_count(arch);
    estimate(st);
    if (training) *training = std::move(res);
    return st;
  }

  /// Partition hierarchy, cell assignment, indicators and metrics of `st.net`.
  void estimate(TrainedState& st) const {
    st.levels = partition_hierarchy(st.net, task_.domain());
    st.owner = locate(st.partition(), task_.grid().points);
    st.indicators = task_.indicators(st.net, st.partition(), st.owner);
    st.metrics = task_.metrics(st.net, st.indicators);
  }

  Network grow_width(const TrainedState& st, const AddWidth& w, std::vector<std::string>& warnings) {
    if (st.net.hidden_layers() == 1) {
      const auto add = init_new_first_layer_neurons(w.marked, st.partition(), st.owner, task_.grid().points);
      return add_first_layer_neurons(st.net, add);
    }
    // Regions of K^(L-1) are traced back to their parent cells in K^(L-2),
    // where the new neuron's inputs are affine.
    const int last = st.net.hidden_layers();
    const auto& fine = st.partition();
    const auto& coarse = st.levels[st.levels.size() - 2];
    std::vector<DeepNeuronInit> add;
    for (const auto& region : w.regions) {
      Region parents;
      for (int id : region.cell_ids) parents.cell_ids.push_back(fine.cell(id).parent);
      std::sort(parents.cell_ids.begin(), parents.cell_ids.end());
      parents.cell_ids.erase(std::unique(parents.cell_ids.begin(), parents.cell_ids.end()),
                             parents.cell_ids.end());
      add.push_back(deep_neuron_for(st.net, last - 1, region_geometry(coarse, parents), warnings));
    }
    return add_last_layer_neurons(st.net, add);
  }

  Network grow_layer(const TrainedState& st, std::vector<std::string>& warnings) {
    const auto marked = mark(st.indicators, cfg_);
    const auto regions = regroup(st.partition(), marked);
    std::vector<DeepNeuronInit> add;
    for (const auto& region : regions) {
      add.push_back(deep_neuron_for(st.net, st.net.hidden_layers(), region_geometry(st.partition(), region),
                                    warnings));
    }
    return add_hidden_layer(st.net, add);
  }

 private:
  AddWidth width_only(const TrainedState& st) const {
    AneHistory fresh;
    return std::get<AddWidth>(enhancement_step(fresh, st.partition(), st.indicators, cfg_, st.net));
  }

  DeepNeuronInit deep_neuron_for(const Network& net, int input_layer, const RegionGeometry& geom,
                                 std::vector<std::string>& warnings) {
    std::vector<Point> xs = heuristic_point_set(geom);
    if (xs.empty()) xs.push_back(geom.centroid());
    DeepNeuronInit init = init_deep_neuron(net, input_layer, xs, rng_);
    if (init.overdetermined) {
      warnings.push_back("overdetermined neuron initialization (" + std::to_string(xs.size()) +
                         " points, " + std::to_string(init.weights.size() + 1) +
                         " unknowns); a smaller gamma1 marks fewer cells");
    }
    return init;
  }

  static void log_record(const AneRunRecord& rec) {
    if (log_level() < 1) return;
    std::clog << "[ane] " << rec.architecture << " N=" << rec.params << " xi=" << rec.xi
              << " xi_rel=" << rec.xi_rel << " error=" << rec.error;
    if (rec.eta) std::clog << " eta=" << *rec.eta;
    std::clog << " iters=" << rec.iterations << '\n';
  }

  const AneTask& task_;
  AneConfig cfg_;
  std::mt19937_64 rng_;
};

inline AneResult ane_multilayer(const AneTask& task, const AneConfig& cfg) {
  return AneDriver(task, cfg).run(true);
}

inline AneResult ane_two_layer(const AneTask& task, const AneConfig& cfg) {
  return AneDriver(task, cfg).run(false);
}

}  // namespace ane
