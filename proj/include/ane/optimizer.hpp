#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ane {

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int stop_window = 2000;
  double stop_rel_tol = 1e-3;
  int max_iters = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("AdamConfig: learning_rate must be positive");
    if (stop_window < 1) throw std::invalid_argument("AdamConfig: stop_window must be >= 1");
    if (max_iters < stop_window) throw std::invalid_argument("AdamConfig: max_iters must be >= stop_window");
  }
};

enum class StopReason { kConverged, kMaxIters, kNonFinite };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kConverged: return "converged";
    case StopReason::kMaxIters: return "max_iters";
    case StopReason::kNonFinite: return "non_finite";
  }
  return "unknown";
}

struct MinimizeResult {
  Eigen::VectorXd params;
  std::vector<double> loss_trace;  // loss at the start of each iteration
  int iterations = 0;
  StopReason reason = StopReason::kMaxIters;
  std::string diagnostic;
};

/// Returns the loss at `params` and writes the gradient into `grad`.
using LossAndGradient = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd& grad)>;

/// Full-batch Adam. Every `stop_window` iterations the current loss is
/// compared with the loss one window earlier; a relative change below
/// `stop_rel_tol` stops the run.
inline MinimizeResult minimize(const LossAndGradient& evaluate, Eigen::VectorXd params,
                               const AdamConfig& cfg) {
  cfg.validate();
  MinimizeResult out;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad(params.size());
  double window_loss = 0.0;
  double b1t = 1.0;
  double b2t = 1.0;
  out.loss_trace.reserve(static_cast<std::size_t>(std::min(cfg.max_iters, 200000)) + 1);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const double loss = evaluate(params, grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      out.reason = StopReason::kNonFinite;
      out.diagnostic = "non-finite loss or gradient at iteration " + std::to_string(it);
      out.params = std::move(params);
      out.iterations = it;
      return out;
    }
    out.loss_trace.push_back(loss);
    if (it == 0) {
      window_loss = loss;
    } else if (it % cfg.stop_window == 0) {
      const double change = std::abs(loss - window_loss) / std::max(window_loss, 1e-30);
      if (change < cfg.stop_rel_tol) {
        out.reason = StopReason::kConverged;
        out.params = std::move(params);
        out.iterations = it;
        return out;
      }
      window_loss = loss;
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double step = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    const double eps_hat = cfg.epsilon * std::sqrt(1.0 - b2t);
    params.array() -= step * m.array() / (v.array().sqrt() + eps_hat);
  }
  out.reason = StopReason::kMaxIters;
  out.iterations = cfg.max_iters;
  out.params = std::move(params);
  return out;
}

/// Two-column text: iteration, loss.
inline void write_loss_trace(std::ostream& os, const std::vector<double>& trace) {
  os.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) os << i << ' ' << trace[i] << '\n';
}

}  // namespace ane
