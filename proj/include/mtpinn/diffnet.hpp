#pragma once

// tanh MLP value network with a batched derivative tape.
//
// A forward pass over a batch of inputs (one point per column) carries, per
// layer, the activation together with its first-order tangents along the
// requested input coordinates and the second-order tangent along S. The
// reverse pass takes adjoints for the network output and any of those input
// derivatives and returns parameter gradients plus the adjoint with respect to
// the raw inputs. Rollout losses chain the input adjoint through the Euler map
// (see losses.hpp).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Input coordinate order of the network: (tau, x[, s]).
enum Coord : int { kTau = 0, kX = 1, kS = 2 };

struct LayerParams {
  Matrix weight;  // out x in
  Vector bias;    // out
};

class ModelParams {
 public:
  int input_dim = 2;
  /// Hidden tanh layers followed by one linear output layer with a single row.
  std::vector<LayerParams> layers;
  /// Fixed affine input map z' = (z - shift) * scale. Identity unless a preset
  /// enables input scaling.
  Vector input_shift;
  Vector input_scale;

  std::size_t hidden_count() const { return layers.empty() ? 0 : layers.size() - 1; }

  std::vector<int> widths() const {
    std::vector<int> w;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
      w.push_back(static_cast<int>(layers[l].weight.rows()));
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
  }

  void validate() const {
    if (input_dim != 2 && input_dim != 3)
      throw std::invalid_argument("ModelParams: input_dim must be 2 or 3");
    if (layers.empty()) throw std::invalid_argument("ModelParams: no layers");
    if (input_shift.size() != input_dim || input_scale.size() != input_dim)
      throw std::invalid_argument("ModelParams: input scaling does not match input_dim");
    Eigen::Index prev = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weight.cols() != prev || layer.bias.size() != layer.weight.rows())
        throw std::invalid_argument("ModelParams: layer " + std::to_string(l) +
                                    " does not chain with its predecessor");
      if (!layer.weight.allFinite() || !layer.bias.allFinite())
        throw std::invalid_argument("ModelParams: non-finite entry in layer " +
                                    std::to_string(l));
      prev = layer.weight.rows();
    }
    if (layers.back().weight.rows() != 1)
      throw std::invalid_argument("ModelParams: output layer must have one row");
  }
};

/// Parameter-shaped accumulator for gradients and optimizer moments.
class GradientAccumulator {
 public:
  std::vector<LayerParams> layers;

  GradientAccumulator() = default;

  static GradientAccumulator zeros_like(const ModelParams& params) {
    GradientAccumulator g;
    g.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
      g.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                          Vector::Zero(layer.bias.size())});
    }
    return g;
  }

  void set_zero() {
    for (auto& layer : layers) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
  }

  void add(const GradientAccumulator& other, double scale = 1.0) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += scale * other.layers[l].weight;
      layers[l].bias += scale * other.layers[l].bias;
    }
  }

  bool all_finite() const {
    for (const auto& layer : layers)
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    return true;
  }

  double squared_norm() const {
    double n = 0.0;
    for (const auto& layer : layers)
      n += layer.weight.squaredNorm() + layer.bias.squaredNorm();
    return n;
  }

  bool shape_matches(const ModelParams& params) const {
    if (layers.size() != params.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].weight.rows() != params.layers[l].weight.rows() ||
          layers[l].weight.cols() != params.layers[l].weight.cols() ||
          layers[l].bias.size() != params.layers[l].bias.size())
        return false;
    }
    return true;
  }
};

/// Row-major flat copy of all parameters (weights then bias, layer by layer).
template <typename LayerOwner>
std::vector<double> flatten(const LayerOwner& owner) {
  std::vector<double> out;
  for (const auto& layer : owner.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

template <typename LayerOwner>
void unflatten(LayerOwner& owner, std::span<const double> flat) {
  std::size_t i = 0;
  for (auto& layer : owner.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[i++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = flat[i++];
  }
  if (i != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

/// Glorot-uniform weights U(-r, r), r = sqrt(6 / (fan_in + fan_out)), zero biases.
inline ModelParams init_params(int input_dim, std::span<const int> widths, std::uint64_t seed) {
  if (input_dim != 2 && input_dim != 3)
    throw std::invalid_argument("init_params: input_dim must be 2 or 3");
  if (widths.empty()) throw std::invalid_argument("init_params: widths must be nonempty");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("init_params: every width must be positive");

  Rng rng(seed);
  ModelParams p;
  p.input_dim = input_dim;
  p.input_shift = Vector::Zero(input_dim);
  p.input_scale = Vector::Ones(input_dim);
  int fan_in = input_dim;
  auto add_layer = [&](int fan_out) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-r, r);
    LayerParams layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = u(rng);
    p.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (int w : widths) add_layer(w);
  add_layer(1);
  return p;
}

inline ModelParams init_params(int input_dim, std::initializer_list<int> widths,
                               std::uint64_t seed) {
  return init_params(input_dim, std::span<const int>(widths.begin(), widths.size()), seed);
}

/// Enables the affine input map sending each domain interval to [-1, 1].
inline void set_input_scaling(ModelParams& p, const HJBConfig& cfg) {
  const auto set = [&](int i, Interval r) {
    p.input_shift(i) = r.mid();
    p.input_scale(i) = r.width() > 0.0 ? 2.0 / r.width() : 1.0;
  };
  set(kTau, {0.0, cfg.horizon_T});
  set(kX, cfg.x_range);
  if (p.input_dim == 3) set(kS, cfg.s_range);
}

/// Which input derivatives a tape carries. `ss` implies the S tangent.
struct DerivRequest {
  bool tau = false;
  bool x = false;
  bool s = false;
  bool ss = false;

  static DerivRequest none() { return {}; }
  static DerivRequest all(int input_dim) {
    return {true, true, input_dim == 3, input_dim == 3};
  }
};

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVectorT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// ModelParams cast to the tape's scalar type.
template <typename S>
struct NetworkView {
  int input_dim = 2;
  std::vector<MatrixT<S>> weight;
  std::vector<VectorT<S>> bias;
  VectorT<S> shift;
  VectorT<S> scale;

  NetworkView() = default;
  explicit NetworkView(const ModelParams& p) { assign(p); }

  void assign(const ModelParams& p) {
    input_dim = p.input_dim;
    weight.resize(p.layers.size());
    bias.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      weight[l] = p.layers[l].weight.template cast<S>();
      bias[l] = p.layers[l].bias.template cast<S>();
    }
    shift = p.input_shift.template cast<S>();
    scale = p.input_scale.template cast<S>();
  }
};

/// Gradient buffer in the tape's scalar type; flushed into a
/// GradientAccumulator once per loss evaluation.
template <typename S>
struct GradBuffer {
  std::vector<MatrixT<S>> weight;
  std::vector<VectorT<S>> bias;

  explicit GradBuffer(const NetworkView<S>& net) {
    for (std::size_t l = 0; l < net.weight.size(); ++l) {
      weight.push_back(MatrixT<S>::Zero(net.weight[l].rows(), net.weight[l].cols()));
      bias.push_back(VectorT<S>::Zero(net.bias[l].size()));
    }
  }

  void set_zero() {
    for (auto& w : weight) w.setZero();
    for (auto& b : bias) b.setZero();
  }

  bool matches(const NetworkView<S>& net) const {
    if (weight.size() != net.weight.size()) return false;
    for (std::size_t l = 0; l < weight.size(); ++l)
      if (weight[l].rows() != net.weight[l].rows() || weight[l].cols() != net.weight[l].cols())
        return false;
    return true;
  }

  void add_to(GradientAccumulator& acc, double factor = 1.0) const {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      acc.layers[l].weight += factor * weight[l].template cast<double>();
      acc.layers[l].bias += factor * bias[l].template cast<double>();
    }
  }
};

/// Adjoints of a scalar objective with respect to the tape outputs. Empty
/// rows are treated as zero.
template <typename S>
struct BasicOutputAdjoints {
  RowVectorT<S> value;
  RowVectorT<S> d_tau;
  RowVectorT<S> d_x;
  RowVectorT<S> d_s;
  RowVectorT<S> d_ss;
};

/// Batched forward/reverse tape. Every layer keeps its activation jet as one
/// stacked matrix [value | tangent_0 | ... | tangent_{D-1} | ss] of width
/// blocks * batch, so each layer costs one GEMM forward and two in reverse.
template <typename S>
class BasicFieldTape {
 public:
  using Mat = MatrixT<S>;
  using Row = RowVectorT<S>;
  using Adjoints = BasicOutputAdjoints<S>;

  BasicFieldTape() = default;

  BasicFieldTape(const NetworkView<S>& net, const Mat& inputs, DerivRequest request) {
    forward(net, inputs, request);
  }

  void forward(const NetworkView<S>& net, const Mat& inputs, DerivRequest request) {
    net_ = &net;
    configure(net, request);
    if (inputs.rows() != net.input_dim)
      throw std::invalid_argument("FieldTape: input rows (" + std::to_string(inputs.rows()) +
                                  ") do not match input_dim (" + std::to_string(net.input_dim) +
                                  ")");
    batch_ = inputs.cols();
    const Eigen::Index B = batch_;
    const std::size_t n_layers = net.weight.size();
    h_.resize(n_layers);
    a_.resize(n_layers);

    Mat& in = h_[0];
    in.setZero(net.input_dim, blocks_ * B);
    in.leftCols(B) = (inputs.colwise() - net.shift).array().colwise() * net.scale.array();
    for (int d = 0; d < n_dirs_; ++d) in.middleCols((1 + d) * B, B).row(dirs_[d]).setConstant(net.scale(dirs_[d]));

    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      Mat& out = h_[l + 1];
      out.noalias() = net.weight[l] * h_[l];
      auto h = out.leftCols(B);
      h.colwise() += net.bias[l];
      h = (S(1) - S(2) / ((S(2) * h.array()).exp() + S(1))).matrix();
      if (blocks_ == 1) continue;
      Mat& pre = a_[l + 1];
      pre = out.rightCols((blocks_ - 1) * B);
      const auto slope = (S(1) - h.array()) * (S(1) + h.array());
      for (int d = 0; d < n_dirs_; ++d)
        out.middleCols((1 + d) * B, B).array() = slope * pre.middleCols(d * B, B).array();
      if (ss_) {
        const auto as = pre.middleCols(s_slot_ * B, B).array();
        out.middleCols(ss_block() * B, B).array() =
            slope * (pre.middleCols(n_dirs_ * B, B).array() - S(2) * h.array() * as * as);
      }
    }
    out_.noalias() = net.weight.back() * h_.back();
    out_.leftCols(B).array() += net.bias.back()(0);
  }

  Eigen::Index batch() const { return batch_; }
  auto value() const { return out_.leftCols(batch_); }
  auto d_tau() const { return out_.middleCols(block_of(kTau) * batch_, batch_); }
  auto d_x() const { return out_.middleCols(block_of(kX) * batch_, batch_); }
  auto d_s() const { return out_.middleCols(block_of(kS) * batch_, batch_); }
  auto d_ss() const {
    if (!ss_) throw std::logic_error("FieldTape: d_ss was not requested");
    return out_.middleCols(ss_block() * batch_, batch_);
  }

  /// Accumulates d(objective)/d(params) into `grad`. When `input_adjoint` is
  /// given it receives d(objective)/d(raw inputs), input_dim x batch.
  void backward(const Adjoints& adj, GradBuffer<S>& grad, Mat* input_adjoint = nullptr) {
    const NetworkView<S>& net = *net_;
    const Eigen::Index B = batch_;
    const std::size_t n_layers = net.weight.size();

    Row& top = adj_row_;
    top.setZero(blocks_ * B);
    if (adj.value.size()) top.leftCols(B) = adj.value;
    for (int d = 0; d < n_dirs_; ++d) {
      const Row& ad = tangent_adjoint(adj, dirs_[d]);
      if (ad.size()) top.middleCols((1 + d) * B, B) = ad;
    }
    if (ss_ && adj.d_ss.size()) top.middleCols(ss_block() * B, B) = adj.d_ss;

    grad.weight.back().noalias() += top * h_.back().transpose();
    grad.bias.back()(0) += top.leftCols(B).sum();
    bar_.noalias() = net.weight.back().transpose() * top;

    for (std::size_t li = n_layers - 1; li-- > 0;) {
      const auto h = h_[li + 1].leftCols(B).array();
      const Mat& pre = a_[li + 1];
      const auto slope = (S(1) - h) * (S(1) + h);
      tmp_.resize(bar_.rows(), blocks_ * B);

      slope_bar_.setZero(bar_.rows(), B);
      for (int d = 0; d < n_dirs_; ++d) {
        const auto bd = bar_.middleCols((1 + d) * B, B).array();
        slope_bar_.array() += bd * pre.middleCols(d * B, B).array();
        tmp_.middleCols((1 + d) * B, B).array() = bd * slope;
      }
      auto total = bar_.leftCols(B).array();
      if (ss_) {
        const auto bss = bar_.middleCols(ss_block() * B, B).array();
        const auto as = pre.middleCols(s_slot_ * B, B).array();
        const auto ass = pre.middleCols(n_dirs_ * B, B).array();
        tmp_.middleCols(ss_block() * B, B).array() = bss * slope;
        tmp_.middleCols((1 + s_slot_) * B, B).array() += bss * (S(-4) * h * slope * as);
        slope_bar_.array() += bss * (ass - S(2) * h * as * as);
        total += bss * (S(-2) * slope * as * as);
      }
      tmp_.leftCols(B).array() = (total - S(2) * h * slope_bar_.array()) * slope;

      grad.weight[li].noalias() += tmp_ * h_[li].transpose();
      grad.bias[li] += tmp_.leftCols(B).rowwise().sum();
      if (li > 0) {
        bar_.noalias() = net.weight[li].transpose() * tmp_;
      } else if (input_adjoint) {
        *input_adjoint = net.weight[0].transpose() * tmp_.leftCols(B);
        input_adjoint->array().colwise() *= net.scale.array();
      }
    }
    if (n_layers == 1 && input_adjoint) {
      *input_adjoint = bar_.leftCols(B);
      input_adjoint->array().colwise() *= net.scale.array();
    }
  }

 private:
  void configure(const NetworkView<S>& net, DerivRequest request) {
    if (request.ss) request.s = true;
    if (request.s && net.input_dim != 3)
      throw std::invalid_argument("FieldTape: S derivatives need input_dim == 3");
    n_dirs_ = 0;
    if (request.tau) dirs_[n_dirs_++] = kTau;
    if (request.x) dirs_[n_dirs_++] = kX;
    s_slot_ = -1;
    if (request.s) {
      s_slot_ = n_dirs_;
      dirs_[n_dirs_++] = kS;
    }
    ss_ = request.ss;
    blocks_ = 1 + n_dirs_ + (ss_ ? 1 : 0);
  }

  int ss_block() const { return 1 + n_dirs_; }

  int block_of(int coord) const {
    for (int d = 0; d < n_dirs_; ++d)
      if (dirs_[d] == coord) return 1 + d;
    throw std::logic_error("FieldTape: derivative " + std::to_string(coord) +
                           " was not requested");
  }

  static const Row& tangent_adjoint(const Adjoints& adj, int coord) {
    switch (coord) {
      case kTau: return adj.d_tau;
      case kX: return adj.d_x;
      default: return adj.d_s;
    }
  }

  const NetworkView<S>* net_ = nullptr;
  std::array<int, 3> dirs_{};
  int n_dirs_ = 0;
  int s_slot_ = -1;
  bool ss_ = false;
  int blocks_ = 1;
  Eigen::Index batch_ = 0;
  std::vector<Mat> h_;  // stacked post-activation jets, h_[0] is the input layer
  std::vector<Mat> a_;  // stacked pre-activation tangents of hidden layers
  Row out_;
  Row adj_row_;
  Mat bar_, tmp_, slope_bar_;
};

/// Double-precision tape owning its parameter view; the reference path for
/// one-off evaluations and gradient checks.
class FieldTape {
 public:
  FieldTape(const ModelParams& params, const Matrix& inputs, DerivRequest request)
      : net_(std::make_unique<NetworkView<double>>(params)), tape_(*net_, inputs, request) {}

  Eigen::Index batch() const { return tape_.batch(); }
  RowVector value() const { return tape_.value(); }
  RowVector d_tau() const { return tape_.d_tau(); }
  RowVector d_x() const { return tape_.d_x(); }
  RowVector d_s() const { return tape_.d_s(); }
  RowVector d_ss() const { return tape_.d_ss(); }

  void backward(const BasicOutputAdjoints<double>& adj, GradientAccumulator& grad,
                Matrix* input_adjoint = nullptr) const {
    GradBuffer<double> buf(*net_);
    tape_.backward(adj, buf, input_adjoint);
    buf.add_to(grad);
  }

 private:
  std::unique_ptr<NetworkView<double>> net_;
  mutable BasicFieldTape<double> tape_;  // backward reuses its scratch buffers
};

using OutputAdjoints = BasicOutputAdjoints<double>;

/// Network value and input derivatives at one state.
struct FieldEval {
  double gamma = 0.0;
  double d_tau = 0.0;
  double d_x = 0.0;
  std::optional<double> d_s;
  std::optional<double> d_ss;
};

/// Packs states as network inputs, dropping S for two-input networks.
inline Matrix pack_inputs(int input_dim, std::span<const StatePoint> points) {
  Matrix z(input_dim, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    z(kTau, c) = points[i].tau;
    z(kX, c) = points[i].x;
    if (input_dim == 3) z(kS, c) = points[i].s;
  }
  return z;
}

inline FieldEval eval_field(const ModelParams& params, const StatePoint& p) {
  const FieldTape tape(params, pack_inputs(params.input_dim, std::span(&p, 1)),
                       DerivRequest::all(params.input_dim));
  FieldEval e;
  e.gamma = tape.value()(0);
  e.d_tau = tape.d_tau()(0);
  e.d_x = tape.d_x()(0);
  if (params.input_dim == 3) {
    e.d_s = tape.d_s()(0);
    e.d_ss = tape.d_ss()(0);
  }
  return e;
}

/// Batched network value, no derivatives.
inline RowVector eval_values(const ModelParams& params, std::span<const StatePoint> points) {
  return FieldTape(params, pack_inputs(params.input_dim, points), DerivRequest::none()).value();
}

/// Adds a zero-initialized S column to the first layer, so the 3-input network
/// reproduces the 2-input one for every S.
inline ModelParams warm_start_1d_to_2d(const ModelParams& p1, double s_shift = 0.0,
                                       double s_scale = 1.0) {
  p1.validate();
  if (p1.input_dim != 2) throw std::invalid_argument("warm_start_1d_to_2d: expects input_dim 2");
  ModelParams p2 = p1;
  p2.input_dim = 3;
  const Matrix& w = p1.layers.front().weight;
  Matrix w2 = Matrix::Zero(w.rows(), 3);
  w2.leftCols(2) = w;
  p2.layers.front().weight = std::move(w2);
  p2.input_shift.conservativeResize(3);
  p2.input_scale.conservativeResize(3);
  p2.input_shift(kS) = s_shift;
  p2.input_scale(kS) = s_scale;
  return p2;
}

/// Network computing (Gamma(z) + Gamma(Mz)) / 2, where M negates X and, with
/// flip_s, also S: two copies of the hidden stack side by side, the second one
/// reading mirrored inputs. Needs zero input shift on the mirrored coordinates.
inline ModelParams evenize(const ModelParams& p, bool flip_s) {
  p.validate();
  if (flip_s && p.input_dim != 3) throw std::invalid_argument("evenize: flip_s needs input_dim 3");
  if (p.input_shift(kX) != 0.0 || (flip_s && p.input_shift(kS) != 0.0))
    throw std::invalid_argument("evenize: mirrored coordinates must not be shifted");
  ModelParams e = p;
  const std::size_t n = p.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const Matrix& w = p.layers[l].weight;
    const Vector& b = p.layers[l].bias;
    LayerParams& out = e.layers[l];
    if (l == 0 && n > 1) {
      Matrix mirrored = w;
      mirrored.col(kX) *= -1.0;
      if (flip_s) mirrored.col(kS) *= -1.0;
      out.weight.resize(2 * w.rows(), w.cols());
      out.weight << w, mirrored;
      out.bias.resize(2 * b.size());
      out.bias << b, b;
    } else if (l + 1 < n) {
      out.weight = Matrix::Zero(2 * w.rows(), 2 * w.cols());
      out.weight.topLeftCorner(w.rows(), w.cols()) = w;
      out.weight.bottomRightCorner(w.rows(), w.cols()) = w;
      out.bias.resize(2 * b.size());
      out.bias << b, b;
    } else if (n > 1) {
      out.weight.resize(1, 2 * w.cols());
      out.weight << 0.5 * w, 0.5 * w;
    } else {
      // A purely linear network: drop the odd coordinates.
      out.weight(0, kX) = 0.0;
      if (flip_s) out.weight(0, kS) = 0.0;
    }
  }
  return e;
}

}  // namespace mtpinn
