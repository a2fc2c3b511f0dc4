#pragma once

// Independent reference computations for the tests: plain-loop network
// evaluation, central differences, and pixel-based partition checks.

#include <cmath>
#include <functional>
#include <set>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ane/network.hpp"

namespace oracle {

using ane::Network;
using ane::Point;

/// Layer-by-layer values and activation signs computed with scalar loops.
struct ScalarTrace {
  std::vector<std::vector<double>> pre;
  double value = 0.0;
};

inline ScalarTrace scalar_trace(const Network& net, const Point& x) {
  ScalarTrace t;
  const auto n1 = static_cast<std::size_t>(net.first.angles.size());
  std::vector<double> h(n1);
  std::vector<double> g(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    const double a = net.first.angles[static_cast<Eigen::Index>(i)];
    g[i] = std::cos(a) * x.x() + std::sin(a) * x.y() - net.first.biases[static_cast<Eigen::Index>(i)];
    h[i] = g[i] > 0.0 ? g[i] : 0.0;
  }
  t.pre.push_back(g);
  for (const auto& layer : net.hidden) {
    const auto rows = static_cast<std::size_t>(layer.weights.rows());
    std::vector<double> gn(rows);
    std::vector<double> hn(rows);
    for (std::size_t j = 0; j < rows; ++j) {
      double s = -layer.biases[static_cast<Eigen::Index>(j)];
      for (std::size_t i = 0; i < h.size(); ++i) {
        s += layer.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * h[i];
      }
      gn[j] = s;
      hn[j] = s > 0.0 ? s : 0.0;
    }
    t.pre.push_back(gn);
    h = hn;
  }
  double v = -net.output.bias;
  for (std::size_t i = 0; i < h.size(); ++i) v += net.output.weights[static_cast<Eigen::Index>(i)] * h[i];
  t.value = v;
  return t;
}

inline double scalar_value(const Network& net, const Point& x) { return scalar_trace(net, x).value; }

/// Smallest |g| over all neurons at x: distance-like measure to a kink.
inline double kink_margin(const Network& net, const Point& x) {
  double m = INFINITY;
  for (const auto& layer : scalar_trace(net, x).pre) {
    for (double g : layer) m = std::min(m, std::abs(g));
  }
  return m;
}

/// Activation pattern (g > 0) across all hidden layers.
inline std::vector<char> pattern(const Network& net, const Point& x) {
  std::vector<char> p;
  for (const auto& layer : scalar_trace(net, x).pre) {
    for (double g : layer) p.push_back(g > 0.0 ? 1 : 0);
  }
  return p;
}

/// Central difference of a scalar function of a vector.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Random network with parameters drawn from N(0, scale^2), angles uniform.
inline Network random_network(const ane::Architecture& arch, std::mt19937_64& rng, double scale = 0.6) {
  Network net = Network::zeros(arch);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < net.first.angles.size(); ++i) {
    net.first.angles[i] = angle(rng);
    net.first.biases[i] = normal(rng);
  }
  for (auto& layer : net.hidden) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases[i] = normal(rng) * 0.3;
  }
  for (Eigen::Index i = 0; i < net.output.weights.size(); ++i) net.output.weights[i] = normal(rng);
  net.output.bias = normal(rng);
  return net;
}

/// Number of distinct activation patterns over a pixel grid (pixel centres).
/// The set of points sharing one pattern is an intersection of half-planes
/// on a cell where every pre-activation is affine, hence convex, so on a fine
/// enough grid this equals the number of linear regions.
inline int pattern_count(const Network& net, const ane::RectDomain& d, int res) {
  std::set<std::vector<char>> seen;
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      seen.insert(pattern(net, Point(d.x_min + (i + 0.5) * d.width() / res,
                                     d.y_min + (j + 0.5) * d.height() / res)));
    }
  }
  return static_cast<int>(seen.size());
}

}  // namespace oracle
