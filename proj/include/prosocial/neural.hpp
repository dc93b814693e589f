// Small reverse-mode network stack for the grid-game policies: 3x3
// convolutions (stride 1 or 2), batch normalization, ReLU, a linear head,
// log-softmax, RMSProp and the batched episodic Reinforce update.
//
// Activations are kept channel-major: a row-major C x (N*H*W) matrix whose
// row c holds channel c of every sample, so batch-norm statistics are row reductions and
// every convolution is one GEMM over an im2col buffer.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosocial/learners.hpp"

namespace prosocial::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
/// Activations: one contiguous row per channel.
template <typename T>
using Act = RowMat<T>;

/// Dense parameter or buffer with a gradient of the same shape.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    value.assign(n, fill);
    grad.assign(n, T(0));
  }
  std::size_t numel() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

enum class Mode { kTrain, kEval };

inline constexpr int kKernel = 3;
inline constexpr int kPad = 1;

inline int conv_out_size(int in, int stride) { return (in + 2 * kPad - kKernel) / stride + 1; }

// ---------------------------------------------------------------------------
// Layers. Each layer accumulates into its parameters' .grad on backward.

template <typename T>
class Conv2d {
 public:
  Conv2d(int in_channels, int out_channels, int stride)
      : weight(std::vector<std::size_t>{static_cast<std::size_t>(out_channels),
                                        static_cast<std::size_t>(in_channels), kKernel, kKernel}),
        cin_(in_channels), cout_(out_channels), stride_(stride) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("Conv2d: stride must be 1 or 2");
  }

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int stride() const { return stride_; }

  Act<T> forward(const Act<T>& x, int n, int h, int w) const {
    check_input(x, n, h, w);
    const int ho = conv_out_size(h, stride_);
    const int wo = conv_out_size(w, stride_);
    Act<T> y(cout_, static_cast<Eigen::Index>(n) * ho * wo);
    const auto wm = weight_matrix();
    for (int n0 = 0; n0 < n; n0 += chunk(ho, wo)) {
      const int n1 = std::min(n, n0 + chunk(ho, wo));
      const RowMat<T> col = im2col(x, n0, n1, h, w, ho, wo);
      y.middleCols(static_cast<Eigen::Index>(n0) * ho * wo, col.cols()).noalias() = wm * col;
    }
    return y;
  }

  /// Accumulates the weight gradient; writes the input gradient when `dx` is
  /// non-null.
  void backward(const Act<T>& x, const Act<T>& dy, int n, int h, int w, Act<T>* dx) {
    check_input(x, n, h, w);
    const int ho = conv_out_size(h, stride_);
    const int wo = conv_out_size(w, stride_);
    Eigen::Map<RowMat<T>> gw(weight.grad.data(), cout_, cin_ * kKernel * kKernel);
    const auto wm = weight_matrix();
    if (dx) dx->setZero(cin_, static_cast<Eigen::Index>(n) * h * w);
    for (int n0 = 0; n0 < n; n0 += chunk(ho, wo)) {
      const int n1 = std::min(n, n0 + chunk(ho, wo));
      const RowMat<T> col = im2col(x, n0, n1, h, w, ho, wo);
      const auto dyc = dy.middleCols(static_cast<Eigen::Index>(n0) * ho * wo, col.cols());
      gw.noalias() += dyc * col.transpose();
      if (dx) {
        const RowMat<T> dcol = wm.transpose() * dyc;
        col2im(dcol, n0, n1, h, w, ho, wo, *dx);
      }
    }
  }

  Tensor<T> weight;

 private:
  Eigen::Map<const RowMat<T>> weight_matrix() const {
    return {weight.value.data(), cout_, cin_ * kKernel * kKernel};
  }

  void check_input(const Act<T>& x, int n, int h, int w) const {
    if (x.rows() != cin_ || x.cols() != static_cast<Eigen::Index>(n) * h * w) {
      throw std::invalid_argument("Conv2d: input shape mismatch");
    }
  }

  int chunk(int ho, int wo) const {
    const long per_sample = static_cast<long>(cin_) * kKernel * kKernel * ho * wo;
    return static_cast<int>(std::max<long>(1, (1L << 20) / std::max<long>(1, per_sample)));
  }

  // Row r = (ci, kh, kw) of the patch matrix holds that tap for every output
  // position of samples [n0, n1).
  RowMat<T> im2col(const Act<T>& x, int n0, int n1, int h, int w, int ho, int wo) const {
    RowMat<T> col(cin_ * kKernel * kKernel, static_cast<Eigen::Index>(n1 - n0) * ho * wo);
    for (int ci = 0; ci < cin_; ++ci) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          T* dst = col.row((ci * kKernel + kh) * kKernel + kw).data();
          for (int s = n0; s < n1; ++s) {
            const T* src = x.row(ci).data() + static_cast<Eigen::Index>(s) * h * w;
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * stride_ + kh - kPad;
              for (int ow = 0; ow < wo; ++ow) {
                const int iw = ow * stride_ + kw - kPad;
                *dst++ = (ih >= 0 && ih < h && iw >= 0 && iw < w) ? src[ih * w + iw] : T(0);
              }
            }
          }
        }
      }
    }
    return col;
  }

  void col2im(const RowMat<T>& dcol, int n0, int n1, int h, int w, int ho, int wo, Act<T>& dx) const {
    for (int ci = 0; ci < cin_; ++ci) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          const T* src = dcol.row((ci * kKernel + kh) * kKernel + kw).data();
          for (int s = n0; s < n1; ++s) {
            T* dst = dx.row(ci).data() + static_cast<Eigen::Index>(s) * h * w;
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * stride_ + kh - kPad;
              for (int ow = 0; ow < wo; ++ow, ++src) {
                const int iw = ow * stride_ + kw - kPad;
                if (ih >= 0 && ih < h && iw >= 0 && iw < w) dst[ih * w + iw] += *src;
              }
            }
          }
        }
      }
    }
  }

  int cin_;
  int cout_;
  int stride_;
};

/// Per-channel batch normalization with learnable scale and shift.
template <typename T>
class BatchNorm {
 public:
  static constexpr double kDefaultEps = 1e-8;

  explicit BatchNorm(int channels, double eps = kDefaultEps, double momentum = 0.1)
      : gamma(std::vector<std::size_t>{static_cast<std::size_t>(channels)}, T(1)),
        beta(std::vector<std::size_t>{static_cast<std::size_t>(channels)}, T(0)),
        running_mean(std::vector<std::size_t>{static_cast<std::size_t>(channels)}, T(0)),
        running_var(std::vector<std::size_t>{static_cast<std::size_t>(channels)}, T(1)),
        channels_(channels), eps_(eps), momentum_(momentum) {}

  /// Train mode normalizes with batch statistics and caches what backward
  /// needs; eval mode uses the running statistics.
  Act<T> forward(const Act<T>& x, Mode mode) {
    if (x.rows() != channels_ || x.cols() == 0) throw std::invalid_argument("BatchNorm: bad input");
    const auto m = static_cast<double>(x.cols());
    Act<T> y(x.rows(), x.cols());
    if (mode == Mode::kEval) {
      for (int c = 0; c < channels_; ++c) {
        const T scale = gamma.value[c] / static_cast<T>(std::sqrt(static_cast<double>(running_var.value[c]) + eps_));
        const T shift = beta.value[c] - scale * running_mean.value[c];
        y.row(c) = (x.row(c).array() * scale + shift).matrix();
      }
      return y;
    }
    xhat_.resize(x.rows(), x.cols());
    inv_std_.resize(channels_);
    for (int c = 0; c < channels_; ++c) {
      const T mean = x.row(c).mean();
      const T var = (x.row(c).array() - mean).square().mean();
      const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps_));
      inv_std_[c] = inv;
      xhat_.row(c) = ((x.row(c).array() - mean) * inv).matrix();
      y.row(c) = (xhat_.row(c).array() * gamma.value[c] + beta.value[c]).matrix();
      const double unbiased = m > 1.0 ? static_cast<double>(var) * m / (m - 1.0) : static_cast<double>(var);
      running_mean.value[c] = static_cast<T>((1.0 - momentum_) * running_mean.value[c] + momentum_ * mean);
      running_var.value[c] = static_cast<T>((1.0 - momentum_) * running_var.value[c] + momentum_ * unbiased);
    }
    return y;
  }

  /// Normalized activations (before scale and shift) of the last train pass.
  const Act<T>& normalized() const { return xhat_; }

  Act<T> backward(const Act<T>& dy) {
    if (dy.rows() != xhat_.rows() || dy.cols() != xhat_.cols()) {
      throw std::logic_error("BatchNorm: backward without a matching train forward");
    }
    const T m = static_cast<T>(dy.cols());
    Act<T> dx(dy.rows(), dy.cols());
    for (int c = 0; c < channels_; ++c) {
      const auto dyr = dy.row(c).array();
      const auto xh = xhat_.row(c).array();
      gamma.grad[c] += (dyr * xh).sum();
      beta.grad[c] += dyr.sum();
      const auto dxh = dyr * gamma.value[c];
      const T sum_dxh = dxh.sum();
      const T sum_dxh_xh = (dxh * xh).sum();
      dx.row(c) = ((dxh * m - sum_dxh - xh * sum_dxh_xh) * (inv_std_[c] / m)).matrix();
    }
    return dx;
  }

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  int channels_;
  double eps_;
  double momentum_;
  Act<T> xhat_;
  Vec<T> inv_std_;
};

template <typename T>
inline void relu_inplace(Act<T>& x) {
  x = x.cwiseMax(T(0));
}

/// ReLU backward given the layer output; the subgradient at 0 is 0.
template <typename T>
inline Act<T> relu_backward(const Act<T>& out, const Act<T>& dy) {
  return (out.array() > T(0)).select(dy, T(0));
}

template <typename T>
class Linear {
 public:
  Linear(int in_features, int out_features)
      : weight(std::vector<std::size_t>{static_cast<std::size_t>(out_features),
                                        static_cast<std::size_t>(in_features)}),
        bias(std::vector<std::size_t>{static_cast<std::size_t>(out_features)}),
        in_(in_features), out_(out_features) {}

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Mat<T> forward(const Mat<T>& x) const {
    if (x.rows() != in_) throw std::invalid_argument("Linear: input shape mismatch");
    Mat<T> y = w() * x;
    y.colwise() += Eigen::Map<const Vec<T>>(bias.value.data(), out_);
    return y;
  }

  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    Eigen::Map<RowMat<T>> gw(weight.grad.data(), out_, in_);
    gw.noalias() += dy * x.transpose();
    Eigen::Map<Vec<T>>(bias.grad.data(), out_) += dy.rowwise().sum();
    return w().transpose() * dy;
  }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  Eigen::Map<const RowMat<T>> w() const { return {weight.value.data(), out_, in_}; }
  int in_;
  int out_;
};

/// Column-wise log-softmax of a (classes x N) logit matrix.
template <typename T>
inline Mat<T> log_softmax(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    const T mx = logits.col(n).maxCoeff();
    const T lse = mx + std::log((logits.col(n).array() - mx).exp().sum());
    out.col(n) = logits.col(n).array() - lse;
  }
  return out;
}

/// Backward of log_softmax given its output.
template <typename T>
inline Mat<T> log_softmax_backward(const Mat<T>& logp, const Mat<T>& dy) {
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index n = 0; n < dy.cols(); ++n) {
    const T s = dy.col(n).sum();
    dx.col(n) = dy.col(n).array() - logp.col(n).array().exp() * s;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Policy network.

struct NetConfig {
  int in_channels = 7;
  int board = 5;
  int base_channels = 16;
  int actions = 4;
};

inline int num_conv_blocks(int board) {
  int b = 0;
  while ((1 << b) < board) ++b;  // ceil(log2(board))
  return b + 1;
}

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

/// conv3x3 -> batch-norm -> ReLU blocks (the first with stride 1, the rest
/// with stride 2 and twice the channels), flattened into a linear layer that
/// emits one logit per action. Convolutions carry no bias; batch-norm's shift
/// plays that role.
template <typename T>
class ConvPolicyNet {
 public:
  ConvPolicyNet(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.board < 1 || cfg.in_channels < 1 || cfg.base_channels < 1 || cfg.actions < 1) {
      throw std::invalid_argument("ConvPolicyNet: bad configuration");
    }
    const int blocks = num_conv_blocks(cfg.board);
    int channels = cfg.in_channels;
    int size = cfg.board;
    for (int b = 0; b < blocks; ++b) {
      const int stride = b == 0 ? 1 : 2;
      const int out = b == 0 ? cfg.base_channels : channels * 2;
      convs_.emplace_back(channels, out, stride);
      bns_.emplace_back(out);
      channels = out;
      size = conv_out_size(size, stride);
      sizes_.push_back(size);
    }
    head_.emplace_back(channels * size * size, cfg.actions);
    for (auto& c : convs_) init_uniform(c.weight, c.in_channels() * kKernel * kKernel, rng);
    init_uniform(head_[0].weight, head_[0].in_features(), rng);
  }

  const NetConfig& config() const { return cfg_; }
  int num_blocks() const { return static_cast<int>(convs_.size()); }
  /// Spatial side after each block, e.g. {5, 3, 2, 1} on a 5x5 board.
  const std::vector<int>& block_sizes() const { return sizes_; }
  int block_channels(int b) const { return convs_.at(b).out_channels(); }
  int observation_size() const { return cfg_.in_channels * cfg_.board * cfg_.board; }

  /// Logits (actions x n) for `n` observations laid out [n][C][H][W].
  Mat<T> forward(std::span<const T> obs, int n, Mode mode) {
    if (n <= 0 || obs.size() != static_cast<std::size_t>(n) * observation_size()) {
      throw std::invalid_argument("ConvPolicyNet: observation batch has the wrong shape");
    }
    const int hw = cfg_.board * cfg_.board;
    Act<T> x(cfg_.in_channels, static_cast<Eigen::Index>(n) * hw);
    for (int s = 0; s < n; ++s) {
      for (int c = 0; c < cfg_.in_channels; ++c) {
        for (int p = 0; p < hw; ++p) {
          x(c, static_cast<Eigen::Index>(s) * hw + p) = obs[(static_cast<std::size_t>(s) * cfg_.in_channels + c) * hw + p];
        }
      }
    }
    const bool train = mode == Mode::kTrain;
    if (train) {
      acts_.clear();
      acts_.push_back(x);
      batch_ = n;
    }
    int size = cfg_.board;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      Act<T> y = bns_[b].forward(convs_[b].forward(x, n, size, size), mode);
      relu_inplace(y);
      size = sizes_[b];
      if (train) acts_.push_back(y);
      x = std::move(y);
    }
    flat_ = flatten(x, n, size);
    return head_[0].forward(flat_);
  }

  /// Accumulates parameter gradients for d(loss)/d(logits) of the last train
  /// forward pass.
  void backward(const Mat<T>& dlogits) {
    if (acts_.empty() || dlogits.cols() != batch_) {
      throw std::logic_error("ConvPolicyNet: backward without a matching train forward");
    }
    const int n = batch_;
    const int last = sizes_.back();
    Mat<T> dflat = head_[0].backward(flat_, dlogits);
    Act<T> dx = unflatten(dflat, n, last);
    for (int b = static_cast<int>(convs_.size()) - 1; b >= 0; --b) {
      const int in_size = b == 0 ? cfg_.board : sizes_[b - 1];
      Act<T> dy = bns_[b].backward(relu_backward(acts_[b + 1], dx));
      Act<T> dprev;
      convs_[b].backward(acts_[b], dy, n, in_size, in_size, b == 0 ? nullptr : &dprev);
      dx = std::move(dprev);
    }
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor->zero_grad();
  }

  std::vector<NamedTensor<T>> parameters() {
    std::vector<NamedTensor<T>> out;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      const std::string pre = "block" + std::to_string(b) + ".";
      out.push_back({pre + "conv.weight", &convs_[b].weight});
      out.push_back({pre + "bn.gamma", &bns_[b].gamma});
      out.push_back({pre + "bn.beta", &bns_[b].beta});
    }
    out.push_back({"head.weight", &head_[0].weight});
    out.push_back({"head.bias", &head_[0].bias});
    return out;
  }

  /// Non-trainable state (batch-norm running statistics).
  std::vector<NamedTensor<T>> buffers() {
    std::vector<NamedTensor<T>> out;
    for (std::size_t b = 0; b < bns_.size(); ++b) {
      const std::string pre = "block" + std::to_string(b) + ".bn.";
      out.push_back({pre + "running_mean", &bns_[b].running_mean});
      out.push_back({pre + "running_var", &bns_[b].running_var});
    }
    return out;
  }

  /// Throws naming the first parameter with a non-finite gradient.
  void check_finite_gradients() {
    for (auto& p : parameters()) {
      for (T g : p.tensor->grad) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw std::runtime_error("non-finite gradient in " + p.name);
        }
      }
    }
  }

  BatchNorm<T>& batch_norm(int b) { return bns_.at(b); }

 private:
  static void init_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.value) v = static_cast<T>(u(rng));
  }

  // (C x N*S*S) channel-major -> (C*S*S x N) per-sample features.
  static Mat<T> flatten(const Act<T>& x, int n, int size) {
    const int hw = size * size;
    Mat<T> f(x.rows() * hw, n);
    for (int s = 0; s < n; ++s) {
      for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (int p = 0; p < hw; ++p) f(c * hw + p, s) = x(c, static_cast<Eigen::Index>(s) * hw + p);
      }
    }
    return f;
  }

  static Act<T> unflatten(const Mat<T>& f, int n, int size) {
    const int hw = size * size;
    const Eigen::Index channels = f.rows() / hw;
    Act<T> x(channels, static_cast<Eigen::Index>(n) * hw);
    for (int s = 0; s < n; ++s) {
      for (Eigen::Index c = 0; c < channels; ++c) {
        for (int p = 0; p < hw; ++p) x(c, static_cast<Eigen::Index>(s) * hw + p) = f(c * hw + p, s);
      }
    }
    return x;
  }

  NetConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
  std::vector<Linear<T>> head_;
  std::vector<int> sizes_;
  std::vector<Act<T>> acts_;  // block inputs/outputs of the last train pass
  Mat<T> flat_;
  int batch_ = 0;
};

// ---------------------------------------------------------------------------
// Optimizer.

template <typename T>
class RMSPropState {
 public:
  RMSPropState(ConvPolicyNet<T>& net, double lr = 1e-3, double decay = 0.99, double eps = 1e-8)
      : lr_(lr), decay_(decay), eps_(eps) {
    if (!(lr >= 0.0)) throw std::invalid_argument("RMSProp: negative learning rate");
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("RMSProp: decay must lie in [0,1)");
    for (auto& p : net.parameters()) sq_.emplace_back(p.tensor->numel(), 0.0);
  }

  void step(ConvPolicyNet<T>& net) {
    auto params = net.parameters();
    if (params.size() != sq_.size()) throw std::invalid_argument("RMSProp: network mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<T>& t = *params[k].tensor;
      auto& acc = sq_[k];
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double g = static_cast<double>(t.grad[i]);
        acc[i] = decay_ * acc[i] + (1.0 - decay_) * g * g;
        t.value[i] = static_cast<T>(static_cast<double>(t.value[i]) - lr_ * g / (std::sqrt(acc[i]) + eps_));
      }
    }
  }

  const std::vector<std::vector<double>>& accumulators() const { return sq_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double decay_;
  double eps_;
  std::vector<std::vector<double>> sq_;
};

// ---------------------------------------------------------------------------
// Reinforce.

struct TrainSpec {
  int batch_episodes = 64;
  double discount = 0.99;
  double entropy_weight = 0.0;
  long total_episodes = 20000;
  double learning_rate = 1e-3;
  bool baseline = false;

  void validate() const {
    if (batch_episodes < 1) throw std::invalid_argument("TrainSpec: batch_episodes must be >= 1");
    if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("TrainSpec: discount must lie in (0,1]");
    if (!(entropy_weight >= 0.0)) throw std::invalid_argument("TrainSpec: entropy_weight must be >= 0");
    if (total_episodes < 1) throw std::invalid_argument("TrainSpec: total_episodes must be >= 1");
  }
};

/// One agent's view of one episode: observations [step][C][H][W], actions and
/// (already mixed) rewards.
template <typename T>
struct EpisodeBuffer {
  std::vector<T> observations;
  std::vector<int> actions;
  std::vector<double> rewards;

  std::size_t steps() const { return actions.size(); }
  void clear() {
    observations.clear();
    actions.clear();
    rewards.clear();
  }
};

struct PolicyLoss {
  double loss = 0.0;
  double mean_entropy = 0.0;
};

/// loss = -mean_t [log pi(a_t) * w_t] - entropy_weight * mean_t H(pi(.|s_t)),
/// and its gradient with respect to the logits.
template <typename T>
PolicyLoss policy_loss(const Mat<T>& logits, std::span<const int> actions,
                       std::span<const double> weights, double entropy_weight, Mat<T>* dlogits) {
  const Eigen::Index n = logits.cols();
  if (static_cast<Eigen::Index>(actions.size()) != n || static_cast<Eigen::Index>(weights.size()) != n || n == 0) {
    throw std::invalid_argument("policy_loss: batch size mismatch");
  }
  const Mat<T> logp = log_softmax(logits);
  PolicyLoss out;
  double loss = 0.0;
  double ent_sum = 0.0;
  if (dlogits) dlogits->resize(logits.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k) {
      const double lp = static_cast<double>(logp(k, s));
      h -= std::exp(lp) * lp;
    }
    ent_sum += h;
    const int a = actions[static_cast<std::size_t>(s)];
    if (a < 0 || a >= logits.rows()) throw std::invalid_argument("policy_loss: action out of range");
    const double w = weights[static_cast<std::size_t>(s)];
    loss -= static_cast<double>(logp(a, s)) * w;
    if (dlogits) {
      for (Eigen::Index k = 0; k < logits.rows(); ++k) {
        const double lp = static_cast<double>(logp(k, s));
        const double p = std::exp(lp);
        double g = w * p;                               // -w (onehot - p)
        g += entropy_weight * p * (lp + h);             // -entropy_weight dH/dz
        (*dlogits)(k, s) = static_cast<T>(g * inv_n);
      }
      (*dlogits)(a, s) -= static_cast<T>(w * inv_n);
    }
  }
  out.loss = (loss - entropy_weight * ent_sum) * inv_n;
  out.mean_entropy = ent_sum * inv_n;
  return out;
}

struct UpdateStats {
  double loss = 0.0;
  double mean_entropy = 0.0;
  std::size_t steps = 0;
};

/// One RMSProp step on the Reinforce loss over every step of the batch.
/// Episodes without steps do not enter the mean.
template <typename T>
UpdateStats reinforce_batch_update(ConvPolicyNet<T>& net, std::span<const EpisodeBuffer<T>> batch,
                                   const TrainSpec& spec, RMSPropState<T>& opt,
                                   RunningBaseline* baseline = nullptr) {
  spec.validate();
  const int obs_size = net.observation_size();
  std::size_t total = 0;
  for (const auto& ep : batch) {
    if (ep.rewards.size() != ep.actions.size() ||
        ep.observations.size() != ep.actions.size() * static_cast<std::size_t>(obs_size)) {
      throw std::invalid_argument("reinforce_batch_update: inconsistent episode buffer");
    }
    total += ep.steps();
  }
  if (total == 0) throw std::invalid_argument("reinforce_batch_update: batch has no steps");
  std::vector<T> obs;
  obs.reserve(total * static_cast<std::size_t>(obs_size));
  std::vector<int> actions;
  actions.reserve(total);
  std::vector<double> weights;
  weights.reserve(total);
  for (const auto& ep : batch) {
    if (ep.steps() == 0) continue;
    obs.insert(obs.end(), ep.observations.begin(), ep.observations.end());
    actions.insert(actions.end(), ep.actions.begin(), ep.actions.end());
    const auto g = discounted_returns(ep.rewards, spec.discount);
    weights.insert(weights.end(), g.begin(), g.end());
  }
  double mean_return = 0.0;
  for (double w : weights) mean_return += w;
  mean_return /= static_cast<double>(weights.size());
  if (spec.baseline && baseline) {
    const double b = baseline->value;
    for (auto& w : weights) w -= b;
  }
  net.zero_grad();
  const Mat<T> logits = net.forward(obs, static_cast<int>(total), Mode::kTrain);
  Mat<T> dlogits;
  const PolicyLoss pl = policy_loss<T>(logits, actions, weights, spec.entropy_weight, &dlogits);
  if (!std::isfinite(pl.loss)) throw std::runtime_error("reinforce_batch_update: non-finite loss");
  net.backward(dlogits);
  net.check_finite_gradients();
  opt.step(net);
  if (spec.baseline && baseline) baseline->observe(mean_return);
  return {pl.loss, pl.mean_entropy, total};
}

// ---------------------------------------------------------------------------
// Checkpoints: a text container of (name, shape, values) records with values
// in hexadecimal floating point, so a save/load round trip is bit-exact.

template <typename T>
void save_checkpoint(ConvPolicyNet<T>& net, std::ostream& os) {
  os << "prosocial-net 1\n";
  auto write = [&os](const NamedTensor<T>& p) {
    os << p.name << ' ' << p.tensor->shape.size();
    for (auto d : p.tensor->shape) os << ' ' << d;
    os << '\n';
    char buf[64];
    for (std::size_t i = 0; i < p.tensor->numel(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", static_cast<double>(p.tensor->value[i]));
      os << (i ? " " : "") << buf;
    }
    os << '\n';
  };
  for (const auto& p : net.parameters()) write(p);
  for (const auto& p : net.buffers()) write(p);
}

template <typename T>
void load_checkpoint(ConvPolicyNet<T>& net, std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "prosocial-net" || version != 1) {
    throw std::runtime_error("load_checkpoint: not a prosocial-net v1 checkpoint");
  }
  auto targets = net.parameters();
  for (auto& b : net.buffers()) targets.push_back(b);
  for (auto& p : targets) {
    std::string name;
    std::size_t ndims = 0;
    if (!(is >> name >> ndims) || name != p.name) {
      throw std::runtime_error("load_checkpoint: expected tensor '" + p.name + "'");
    }
    std::vector<std::size_t> shape(ndims);
    for (auto& d : shape) is >> d;
    if (shape != p.tensor->shape) throw std::runtime_error("load_checkpoint: shape mismatch for " + p.name);
    for (auto& v : p.tensor->value) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("load_checkpoint: truncated values for " + p.name);
      v = static_cast<T>(std::strtod(tok.c_str(), nullptr));
    }
  }
}

}  // namespace prosocial::nn
