#pragma once

// Multi-layer ReLU network on R^2 with a scalar output:
//
//   v(x) = w . (N^(L-1) o ... o N^(1))(x) - b_out,   N^(l)(y) = relu(W_l y - b_l)
//
// First-layer weights are unit vectors (cos a_i, sin a_i) parameterized by an
// angle, so each first-layer neuron carries two trainable numbers.

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ane/geometry.hpp"

namespace ane {

/// Batch of 2-D points, one per column.
using Points = Eigen::Matrix2Xd;

class Architecture {
 public:
  Architecture() = default;
  explicit Architecture(std::vector<int> hidden_widths) : hidden_(std::move(hidden_widths)) {
    if (hidden_.empty()) throw std::invalid_argument("Architecture: need at least one hidden layer");
    for (int n : hidden_) {
      if (n < 1) throw std::invalid_argument("Architecture: hidden widths must be positive");
    }
  }

  /// Parses "2-n1-...-1".
  static Architecture parse(const std::string& text) {
    std::vector<int> parts;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
      std::size_t used = 0;
      int value = 0;
      try {
        value = std::stoi(tok, &used);
      } catch (const std::exception&) {
        throw std::invalid_argument("Architecture: malformed '" + text + "'");
      }
      if (used != tok.size()) throw std::invalid_argument("Architecture: malformed '" + text + "'");
      parts.push_back(value);
    }
    if (parts.size() < 3 || parts.front() != 2 || parts.back() != 1) {
      throw std::invalid_argument("Architecture: expected 2-n1-...-1, got '" + text + "'");
    }
    return Architecture(std::vector<int>(parts.begin() + 1, parts.end() - 1));
  }

  static constexpr int input_dim() { return 2; }
  static constexpr int output_dim() { return 1; }
  /// L: hidden layers plus the output layer.
  int depth() const { return static_cast<int>(hidden_.size()) + 1; }
  int hidden_layers() const { return static_cast<int>(hidden_.size()); }
  const std::vector<int>& hidden_widths() const { return hidden_; }
  /// Width n_l of hidden layer l (1-based).
  int width(int l) const { return hidden_.at(static_cast<std::size_t>(l - 1)); }

  std::string to_string() const {
    std::string s = "2";
    for (int n : hidden_) s += "-" + std::to_string(n);
    return s + "-1";
  }

  bool operator==(const Architecture&) const = default;

 private:
  std::vector<int> hidden_;
};

/// Trainable parameter count. The first layer contributes an angle and a bias
/// per neuron.
inline std::size_t param_count(const Architecture& arch) {
  const auto& n = arch.hidden_widths();
  std::size_t count = 2 * static_cast<std::size_t>(n.front());
  for (std::size_t l = 1; l < n.size(); ++l) {
    count += static_cast<std::size_t>(n[l]) * static_cast<std::size_t>(n[l - 1] + 1);
  }
  return count + static_cast<std::size_t>(n.back()) + 1;
}

struct FirstLayerParams {
  Eigen::VectorXd angles;
  Eigen::VectorXd biases;
};

struct DenseLayerParams {
  Eigen::MatrixXd weights;  // n_l x n_{l-1}
  Eigen::VectorXd biases;
};

struct OutputParams {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

struct Network {
  FirstLayerParams first;
  std::vector<DenseLayerParams> hidden;  // layers 2..L-1
  OutputParams output;

  /// All-zero network of the given shape.
  static Network zeros(const Architecture& arch) {
    Network net;
    const auto& n = arch.hidden_widths();
    net.first.angles = Eigen::VectorXd::Zero(n[0]);
    net.first.biases = Eigen::VectorXd::Zero(n[0]);
    for (std::size_t l = 1; l < n.size(); ++l) {
      net.hidden.push_back({Eigen::MatrixXd::Zero(n[l], n[l - 1]), Eigen::VectorXd::Zero(n[l])});
    }
    net.output.weights = Eigen::VectorXd::Zero(n.back());
    return net;
  }

  Architecture architecture() const {
    std::vector<int> widths{static_cast<int>(first.angles.size())};
    for (const auto& layer : hidden) widths.push_back(static_cast<int>(layer.biases.size()));
    return Architecture(std::move(widths));
  }

  int hidden_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int width(int l) const {
    return l == 1 ? static_cast<int>(first.angles.size())
                  : static_cast<int>(hidden.at(static_cast<std::size_t>(l - 2)).biases.size());
  }

  /// First-layer weight matrix, rows (cos a_i, sin a_i).
  Eigen::MatrixX2d first_weights() const {
    Eigen::MatrixX2d a(first.angles.size(), 2);
    a.col(0) = first.angles.array().cos().matrix();
    a.col(1) = first.angles.array().sin().matrix();
    return a;
  }

  /// Throws if shapes are inconsistent.
  void validate() const {
    if (first.angles.size() == 0 || first.angles.size() != first.biases.size()) {
      throw std::invalid_argument("Network: first layer shape mismatch");
    }
    Eigen::Index prev = first.angles.size();
    for (const auto& layer : hidden) {
      if (layer.weights.cols() != prev || layer.weights.rows() != layer.biases.size() ||
          layer.biases.size() == 0) {
        throw std::invalid_argument("Network: hidden layer shape mismatch");
      }
      prev = layer.biases.size();
    }
    if (output.weights.size() != prev) throw std::invalid_argument("Network: output shape mismatch");
  }

  /// Flat layout: angles, first biases, per dense layer row-major weights then
  /// biases, output weights, output bias.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(param_count(architecture())));
    Eigen::Index k = 0;
    auto put = [&](const Eigen::VectorXd& v) {
      flat.segment(k, v.size()) = v;
      k += v.size();
    };
    put(first.angles);
    put(first.biases);
    for (const auto& layer : hidden) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        flat.segment(k, layer.weights.cols()) = layer.weights.row(r).transpose();
        k += layer.weights.cols();
      }
      put(layer.biases);
    }
    put(output.weights);
    flat[k] = output.bias;
    return flat;
  }

  static Network unflatten(const Architecture& arch, const Eigen::Ref<const Eigen::VectorXd>& flat) {
    if (static_cast<std::size_t>(flat.size()) != param_count(arch)) {
      throw std::invalid_argument("Network::unflatten: length does not match architecture " +
                                  arch.to_string());
    }
    Network net = zeros(arch);
    net.assign(flat);
    return net;
  }

  /// Overwrites all parameters from a flat vector of matching length.
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
    Eigen::Index k = 0;
    auto take = [&](Eigen::VectorXd& v) {
      v = flat.segment(k, v.size());
      k += v.size();
    };
    take(first.angles);
    take(first.biases);
    for (auto& layer : hidden) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights.row(r) = flat.segment(k, layer.weights.cols()).transpose();
        k += layer.weights.cols();
      }
      take(layer.biases);
    }
    take(output.weights);
    output.bias = flat[k];
  }
};

inline double relu(double t) { return t > 0.0 ? t : 0.0; }

namespace detail {

constexpr Eigen::Index kChunk = 256;

/// Per-chunk activations, kept so that the backward sweep can reuse them.
struct ChunkState {
  std::vector<Eigen::MatrixXd> pre;      // g^(l), n_l x B
  std::vector<Eigen::MatrixXd> post;     // relu(g^(l))
  std::vector<Eigen::MatrixXd> tangent;  // d/dt of post along the direction field
  Eigen::RowVectorXd value;
  Eigen::RowVectorXd slope;
};

inline void forward_chunk(const Network& net, const Eigen::MatrixX2d& first_w,
                          const Eigen::Ref<const Points>& x, const Points* dirs, Eigen::Index begin,
                          ChunkState& st, int stop_layer) {
  const Eigen::Index b = x.cols();
  st.pre.resize(static_cast<std::size_t>(stop_layer));
  st.post.resize(static_cast<std::size_t>(stop_layer));
  st.tangent.resize(dirs ? static_cast<std::size_t>(stop_layer) : 0);

  st.pre[0].noalias() = first_w * x;
  st.pre[0].colwise() -= net.first.biases;
  st.post[0] = st.pre[0].cwiseMax(0.0);
  if (dirs) {
    Eigen::MatrixXd t = first_w * dirs->middleCols(begin, b);
    st.tangent[0] = (st.pre[0].array() > 0.0).select(t, 0.0);
  }
  for (int l = 1; l < stop_layer; ++l) {
    const auto& layer = net.hidden[static_cast<std::size_t>(l - 1)];
    const auto k = static_cast<std::size_t>(l);
    st.pre[k].noalias() = layer.weights * st.post[k - 1];
    st.pre[k].colwise() -= layer.biases;
    st.post[k] = st.pre[k].cwiseMax(0.0);
    if (dirs) {
      Eigen::MatrixXd t = layer.weights * st.tangent[k - 1];
      st.tangent[k] = (st.pre[k].array() > 0.0).select(t, 0.0);
    }
  }
}

inline void output_chunk(const Network& net, ChunkState& st, bool with_slope) {
  st.value.noalias() = net.output.weights.transpose() * st.post.back();
  st.value.array() -= net.output.bias;
  if (with_slope) st.slope.noalias() = net.output.weights.transpose() * st.tangent.back();
}

}  // namespace detail

inline void check_finite(const Points& points) {
  if (!points.allFinite()) throw std::invalid_argument("network: non-finite input coordinates");
}

/// Network values at every point. `pre_activations`, if given, receives
/// g^(l) for every hidden layer (n_l x Q each).
inline Eigen::VectorXd forward(const Network& net, const Points& points,
                               std::vector<Eigen::MatrixXd>* pre_activations = nullptr) {
  check_finite(points);
  const int layers = net.hidden_layers();
  const Eigen::MatrixX2d first_w = net.first_weights();
  Eigen::VectorXd values(points.cols());
  if (pre_activations) {
    pre_activations->assign(static_cast<std::size_t>(layers), Eigen::MatrixXd());
    for (int l = 1; l <= layers; ++l) {
      (*pre_activations)[static_cast<std::size_t>(l - 1)].resize(net.width(l), points.cols());
    }
  }
  detail::ChunkState st;
  for (Eigen::Index begin = 0; begin < points.cols(); begin += detail::kChunk) {
    const Eigen::Index b = std::min(detail::kChunk, points.cols() - begin);
    detail::forward_chunk(net, first_w, points.middleCols(begin, b), nullptr, begin, st, layers);
    detail::output_chunk(net, st, false);
    values.segment(begin, b) = st.value.transpose();
    if (pre_activations) {
      for (std::size_t k = 0; k < st.pre.size(); ++k) {
        (*pre_activations)[k].middleCols(begin, b) = st.pre[k];
      }
    }
  }
  return values;
}

/// g^(l)_j at every point, for 1 <= l <= L-1 (n_l x Q).
inline Eigen::MatrixXd eval_pre_activations(const Network& net, int layer, const Points& points) {
  if (layer < 1 || layer > net.hidden_layers()) {
    throw std::out_of_range("eval_pre_activations: layer " + std::to_string(layer) +
                            " outside 1.." + std::to_string(net.hidden_layers()));
  }
  check_finite(points);
  const Eigen::MatrixX2d first_w = net.first_weights();
  Eigen::MatrixXd out(net.width(layer), points.cols());
  detail::ChunkState st;
  for (Eigen::Index begin = 0; begin < points.cols(); begin += detail::kChunk) {
    const Eigen::Index b = std::min(detail::kChunk, points.cols() - begin);
    detail::forward_chunk(net, first_w, points.middleCols(begin, b), nullptr, begin, st, layer);
    out.middleCols(begin, b) = st.pre.back();
  }
  return out;
}

/// Outputs of hidden layer l (relu applied), n_l x Q.
inline Eigen::MatrixXd eval_layer_outputs(const Network& net, int layer, const Points& points) {
  return eval_pre_activations(net, layer, points).cwiseMax(0.0);
}

/// Outputs of hidden layer l together with their directional derivatives
/// along `dirs` (one direction per point).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> eval_layer_outputs_with_slopes(
    const Network& net, int layer, const Points& points, const Points& dirs) {
  if (layer < 1 || layer > net.hidden_layers()) throw std::out_of_range("layer out of range");
  check_finite(points);
  const Eigen::MatrixX2d first_w = net.first_weights();
  Eigen::MatrixXd out(net.width(layer), points.cols());
  Eigen::MatrixXd slopes(net.width(layer), points.cols());
  detail::ChunkState st;
  for (Eigen::Index begin = 0; begin < points.cols(); begin += detail::kChunk) {
    const Eigen::Index b = std::min(detail::kChunk, points.cols() - begin);
    detail::forward_chunk(net, first_w, points.middleCols(begin, b), &dirs, begin, st, layer);
    out.middleCols(begin, b) = st.post.back();
    slopes.middleCols(begin, b) = st.tangent.back();
  }
  return {std::move(out), std::move(slopes)};
}

/// Directional derivatives dirs_q . grad v(x_q).
inline Eigen::VectorXd directional_derivative(const Network& net, const Points& points,
                                              const Points& dirs) {
  check_finite(points);
  const int layers = net.hidden_layers();
  const Eigen::MatrixX2d first_w = net.first_weights();
  Eigen::VectorXd out(points.cols());
  detail::ChunkState st;
  for (Eigen::Index begin = 0; begin < points.cols(); begin += detail::kChunk) {
    const Eigen::Index b = std::min(detail::kChunk, points.cols() - begin);
    detail::forward_chunk(net, first_w, points.middleCols(begin, b), &dirs, begin, st, layers);
    detail::output_chunk(net, st, true);
    out.segment(begin, b) = st.slope.transpose();
  }
  return out;
}

/// Exact gradient of the piecewise-affine network with respect to x, using
/// relu'(0) = 0.
inline Points grad_input(const Network& net, const Points& points) {
  Points ex(2, points.cols());
  ex.row(0).setOnes();
  ex.row(1).setZero();
  Points ey(2, points.cols());
  ey.row(0).setZero();
  ey.row(1).setOnes();
  Points g(2, points.cols());
  g.row(0) = directional_derivative(net, points, ex).transpose();
  g.row(1) = directional_derivative(net, points, ey).transpose();
  return g;
}

/// Reverse sweep over all points. `adjoint(begin, values, slopes, c, s)` is
/// called per chunk after the forward pass and must fill the weights c_q (on
/// v(x_q)) and s_q (on dirs_q . grad v(x_q)); the returned network-shaped
/// gradient is that of sum_q c_q v(x_q) + s_q dirs_q . grad v(x_q).
/// Chunks are visited in a fixed order, so results are bitwise reproducible.
template <class Adjoint>
Network accumulate_gradient(const Network& net, const Points& points, const Points* dirs,
                            Adjoint&& adjoint) {
  check_finite(points);
  const int layers = net.hidden_layers();
  const Eigen::MatrixX2d first_w = net.first_weights();
  Network grad = Network::zeros(net.architecture());
  Eigen::MatrixX2d grad_first_w = Eigen::MatrixX2d::Zero(first_w.rows(), 2);

  detail::ChunkState st;
  Eigen::RowVectorXd c;
  Eigen::RowVectorXd s;
  Eigen::MatrixXd d_post;
  Eigen::MatrixXd d_tan;
  Eigen::MatrixXd d_pre;
  Eigen::MatrixXd d_tpre;
  for (Eigen::Index begin = 0; begin < points.cols(); begin += detail::kChunk) {
    const Eigen::Index b = std::min(detail::kChunk, points.cols() - begin);
    const auto x = points.middleCols(begin, b);
    detail::forward_chunk(net, first_w, x, dirs, begin, st, layers);
    detail::output_chunk(net, st, dirs != nullptr);
    c.setZero(b);
    s.setZero(b);
    adjoint(begin, st.value, st.slope, c, s);

    const auto last = static_cast<std::size_t>(layers - 1);
    grad.output.weights.noalias() += st.post[last] * c.transpose();
    grad.output.bias -= c.sum();
    d_post.noalias() = net.output.weights * c;
    if (dirs) {
      grad.output.weights.noalias() += st.tangent[last] * s.transpose();
      d_tan.noalias() = net.output.weights * s;
    }
    for (int l = layers; l >= 1; --l) {
      const auto k = static_cast<std::size_t>(l - 1);
      const auto active = (st.pre[k].array() > 0.0);
      d_pre = active.select(d_post, 0.0);
      if (dirs) d_tpre = active.select(d_tan, 0.0);
      if (l > 1) {
        auto& g = grad.hidden[k - 1];
        const auto& w = net.hidden[k - 1].weights;
        g.weights.noalias() += d_pre * st.post[k - 1].transpose();
        g.biases -= d_pre.rowwise().sum();
        d_post.noalias() = w.transpose() * d_pre;
        if (dirs) {
          g.weights.noalias() += d_tpre * st.tangent[k - 1].transpose();
          d_tan.noalias() = w.transpose() * d_tpre;
        }
      } else {
        grad_first_w.noalias() += d_pre * x.transpose();
        grad.first.biases -= d_pre.rowwise().sum();
        if (dirs) grad_first_w.noalias() += d_tpre * dirs->middleCols(begin, b).transpose();
      }
    }
  }
  // d(cos a, sin a)/da = (-sin a, cos a)
  grad.first.angles = (-grad_first_w.col(0).array() * first_w.col(1).array() +
                       grad_first_w.col(1).array() * first_w.col(0).array())
                          .matrix();
  return grad;
}

/// Gradient of sum_q c_q v(x_q; theta) with respect to the flat parameters.
inline Eigen::VectorXd grad_params(const Network& net, const Points& points,
                                   const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() != points.cols()) throw std::invalid_argument("grad_params: weight count");
  return accumulate_gradient(net, points, nullptr,
                             [&](Eigen::Index begin, const Eigen::RowVectorXd&,
                                 const Eigen::RowVectorXd&, Eigen::RowVectorXd& c,
                                 Eigen::RowVectorXd&) {
                               c = weights.segment(begin, c.size()).transpose();
                             })
      .flatten();
}

/// Gradient of sum_q c_q v(x_q) + s_q dirs_q . grad v(x_q) with respect to the
/// flat parameters.
inline Eigen::VectorXd grad_params(const Network& net, const Points& points,
                                   const Eigen::Ref<const Eigen::VectorXd>& value_weights,
                                   const Points& dirs,
                                   const Eigen::Ref<const Eigen::VectorXd>& slope_weights) {
  if (value_weights.size() != points.cols() || slope_weights.size() != points.cols() ||
      dirs.cols() != points.cols()) {
    throw std::invalid_argument("grad_params: size mismatch");
  }
  return accumulate_gradient(net, points, &dirs,
                             [&](Eigen::Index begin, const Eigen::RowVectorXd&,
                                 const Eigen::RowVectorXd&, Eigen::RowVectorXd& c,
                                 Eigen::RowVectorXd& s) {
                               c = value_weights.segment(begin, c.size()).transpose();
                               s = slope_weights.segment(begin, s.size()).transpose();
                             })
      .flatten();
}

/// Activation pattern (pre-activation > 0) of every hidden neuron at one point.
inline std::vector<bool> activation_pattern(const Network& net, const Point& x) {
  Points p(2, 1);
  p.col(0) = x;
  std::vector<Eigen::MatrixXd> pre;
  forward(net, p, &pre);
  std::vector<bool> pattern;
  for (const auto& layer : pre) {
    for (Eigen::Index j = 0; j < layer.rows(); ++j) pattern.push_back(layer(j, 0) > 0.0);
  }
  return pattern;
}

}  // namespace ane
