#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "touchloc/contact_render.hpp"
#include "touchloc/errors.hpp"
#include "touchloc/rng.hpp"

namespace touchloc::nn {

// CHW tensor backed by a flat buffer.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  void resize(int C, int H, int W) {
    c = C;
    h = H;
    w = W;
    v.assign(static_cast<size_t>(C) * H * W, T(0));
  }
  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
};

template <typename T>
struct ParamRef {
  T* w;
  T* g;
  size_t n;
};

// Fixed-order reduction kernels. Eigen's GEMV peels loops based on runtime
// pointer alignment, which makes summation order depend on where the heap
// placed a buffer; these kernels use an index-based 8-lane tree instead, so
// results are bit-reproducible across runs. GEMM paths (which pack operands)
// do not have this problem and stay on Eigen.
template <typename T>
T det_dot(const T* a, const T* b, size_t n) {
  T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) lane[k] += a[i + k] * b[i + k];
  }
  for (; i < n; ++i) lane[i & 7] += a[i] * b[i];
  return ((lane[0] + lane[4]) + (lane[1] + lane[5])) +
         ((lane[2] + lane[6]) + (lane[3] + lane[7]));
}

// y = M x (row-major M), deterministic per-row dots.
template <typename T>
void det_matvec(const T* m, size_t rows, size_t cols, const T* x, T* y) {
  for (size_t r = 0; r < rows; ++r) y[r] = det_dot(m + r * cols, x, cols);
}

// y += s * x, elementwise (no reduction, deterministic by construction).
template <typename T>
void det_axpy(T s, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

template <typename T>
T det_sum(const T* a, size_t n) {
  T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) lane[k] += a[i + k];
  }
  for (; i < n; ++i) lane[i & 7] += a[i];
  return ((lane[0] + lane[4]) + (lane[1] + lane[5])) +
         ((lane[2] + lane[6]) + (lane[3] + lane[7]));
}

template <typename T>
using MatMap = Eigen::Map<
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int k, int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    weight_.assign(static_cast<size_t>(out_c) * in_c * k * k, T(0));
    bias_.assign(out_c, T(0));
    wgrad_.assign(weight_.size(), T(0));
    bgrad_.assign(bias_.size(), T(0));
  }

  void init(Rng& rng) {
    double std = std::sqrt(2.0 / (static_cast<double>(in_c_) * k_ * k_));
    for (auto& w : weight_) w = static_cast<T>(rng.normal() * std);
    for (auto& b : bias_) b = T(0);
  }

  int out_dim(int in_dim) const { return (in_dim + 2 * pad_ - k_) / stride_ + 1; }

  void im2col(const Tensor<T>& in, Tensor<T>& col) const {
    const int oh = out_dim(in.h), ow = out_dim(in.w);
    col.resize(1, in_c_ * k_ * k_, oh * ow);
    T* dst = col.data();
    for (int c = 0; c < in_c_; ++c) {
      const T* src = in.data() + static_cast<size_t>(c) * in.h * in.w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in.h) {
              for (int ox = 0; ox < ow; ++ox) *dst++ = T(0);
              continue;
            }
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ + kx - pad_;
              *dst++ = (ix >= 0 && ix < in.w)
                           ? src[static_cast<size_t>(iy) * in.w + ix]
                           : T(0);
            }
          }
        }
      }
    }
  }

  void forward(const Tensor<T>& in, Tensor<T>& out, Tensor<T>& col) const {
    if (in.c != in_c_) throw DimensionMismatch("conv input channels");
    const int oh = out_dim(in.h), ow = out_dim(in.w);
    im2col(in, col);
    out.resize(out_c_, oh, ow);
    ConstMatMap<T> w(weight_.data(), out_c_, in_c_ * k_ * k_);
    ConstMatMap<T> c(col.data(), in_c_ * k_ * k_, oh * ow);
    MatMap<T> o(out.data(), out_c_, oh * ow);
    o.noalias() = w * c;
    for (int oc = 0; oc < out_c_; ++oc) o.row(oc).array() += bias_[oc];
  }

  // dout is the gradient at the (pre-activation) output; accumulates into the
  // parameter grads and writes din (skipped when din == nullptr).
  void backward(const Tensor<T>& in, const Tensor<T>& col, const Tensor<T>& dout,
                Tensor<T>* din) {
    const int oh = dout.h, ow = dout.w;
    ConstMatMap<T> dO(dout.data(), out_c_, oh * ow);
    ConstMatMap<T> C(col.data(), in_c_ * k_ * k_, oh * ow);
    MatMap<T> dW(wgrad_.data(), out_c_, in_c_ * k_ * k_);
    dW.noalias() += dO * C.transpose();
    for (int oc = 0; oc < out_c_; ++oc) {
      bgrad_[oc] += det_sum(dout.data() + static_cast<size_t>(oc) * oh * ow,
                            static_cast<size_t>(oh) * ow);
    }
    if (!din) return;
    // dcol = W^T * dO, then scatter back (col2im).
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dcol;
    ConstMatMap<T> W(weight_.data(), out_c_, in_c_ * k_ * k_);
    dcol.noalias() = W.transpose() * dO;
    din->resize(in.c, in.h, in.w);
    const T* src = dcol.data();
    for (int c = 0; c < in_c_; ++c) {
      T* dst = din->data() + static_cast<size_t>(c) * in.h * in.w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in.h) {
              src += ow;
              continue;
            }
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < in.w) {
                dst[static_cast<size_t>(iy) * in.w + ix] += *src;
              }
              ++src;
            }
          }
        }
      }
    }
  }

  std::vector<ParamRef<T>> params() {
    return {{weight_.data(), wgrad_.data(), weight_.size()},
            {bias_.data(), bgrad_.data(), bias_.size()}};
  }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

 private:
  int in_c_, out_c_, k_, stride_, pad_;
  std::vector<T> weight_, bias_, wgrad_, bgrad_;
};

template <typename T>
class Linear {
 public:
  Linear(int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
    weight_.assign(static_cast<size_t>(in_dim) * out_dim, T(0));
    bias_.assign(out_dim, T(0));
    wgrad_.assign(weight_.size(), T(0));
    bgrad_.assign(bias_.size(), T(0));
  }

  void init(Rng& rng) {
    double std = std::sqrt(1.0 / in_);
    for (auto& w : weight_) w = static_cast<T>(rng.normal() * std);
    for (auto& b : bias_) b = T(0);
  }

  void forward(const T* x, T* y) const {
    det_matvec(weight_.data(), static_cast<size_t>(out_),
               static_cast<size_t>(in_), x, y);
    for (int i = 0; i < out_; ++i) y[i] += bias_[i];
  }

  void backward(const T* x, const T* dy, T* dx) {
    for (int i = 0; i < out_; ++i) {
      det_axpy(dy[i], x, wgrad_.data() + static_cast<size_t>(i) * in_,
               static_cast<size_t>(in_));
      bgrad_[i] += dy[i];
    }
    if (dx) {
      std::fill(dx, dx + in_, T(0));
      for (int i = 0; i < out_; ++i) {
        det_axpy(dy[i], weight_.data() + static_cast<size_t>(i) * in_, dx,
                 static_cast<size_t>(in_));
      }
    }
  }

  std::vector<ParamRef<T>> params() {
    return {{weight_.data(), wgrad_.data(), weight_.size()},
            {bias_.data(), bgrad_.data(), bias_.size()}};
  }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

 private:
  int in_, out_;
  std::vector<T> weight_, bias_, wgrad_, bgrad_;
};

// Per-sample forward state, reused across samples; one per thread.
template <typename T>
struct Workspace {
  std::vector<Tensor<T>> act;   // act[0] = input, act[i+1] = conv_i output
  std::vector<Tensor<T>> col;   // im2col scratch per conv
  std::vector<T> feature;       // flattened final activation
  std::vector<T> pre_norm;      // projection output before normalization
  std::vector<T> embedding;     // unit vector
  double pre_norm_len = 0;
  std::vector<T> dfeat, dpre, demb;
  Tensor<T> dact_a, dact_b;
};

// Convolution/ReLU stack; spatial feature map flattened at the end.
template <typename T>
class ConvStack {
 public:
  ConvStack(int in_channels, const std::vector<int>& channels, int input_size,
            int kernel = 3, int stride = 2) {
    int c = in_channels;
    int dim = input_size;
    for (int oc : channels) {
      convs_.emplace_back(c, oc, kernel, stride, kernel / 2);
      dim = convs_.back().out_dim(dim);
      c = oc;
    }
    out_c_ = c;
    out_dim_ = dim;
    if (dim <= 0) throw ConfigError("conv stack collapses below 1x1");
  }

  void init(Rng& rng) {
    for (auto& conv : convs_) conv.init(rng);
  }

  size_t feature_size() const {
    return static_cast<size_t>(out_c_) * out_dim_ * out_dim_;
  }

  // Input tensor must be (in_channels, input_size, input_size).
  const std::vector<T>& forward(const Tensor<T>& input, Workspace<T>& ws) const {
    ws.act.resize(convs_.size() + 1);
    ws.col.resize(convs_.size());
    ws.act[0] = input;
    for (size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].forward(ws.act[i], ws.act[i + 1], ws.col[i]);
      for (auto& x : ws.act[i + 1].v) x = x > T(0) ? x : T(0);  // ReLU
    }
    const auto& last = ws.act.back();
    ws.feature.assign(last.v.begin(), last.v.end());
    return ws.feature;
  }

  void backward(const std::vector<T>& dfeature, Workspace<T>& ws) {
    Tensor<T>* dcur = &ws.dact_a;
    Tensor<T>* dnext = &ws.dact_b;
    const auto& last = ws.act.back();
    dcur->resize(last.c, last.h, last.w);
    for (size_t i = 0; i < dfeature.size(); ++i) dcur->v[i] = dfeature[i];
    for (size_t i = convs_.size(); i-- > 0;) {
      // ReLU mask from the stored post-activation values.
      const auto& out = ws.act[i + 1];
      for (size_t j = 0; j < out.v.size(); ++j) {
        if (out.v[j] <= T(0)) dcur->v[j] = T(0);
      }
      convs_[i].backward(ws.act[i], ws.col[i], *dcur, i > 0 ? dnext : nullptr);
      std::swap(dcur, dnext);
    }
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> p;
    for (auto& conv : convs_) {
      auto cp = conv.params();
      p.insert(p.end(), cp.begin(), cp.end());
    }
    return p;
  }

  const std::vector<Conv2d<T>>& convs() const { return convs_; }

 private:
  std::vector<Conv2d<T>> convs_;
  int out_c_ = 0;
  int out_dim_ = 0;
};

// SGD with classical momentum and optional L2 weight decay.
template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<ParamRef<T>> params, double momentum = 0.9,
                        double weight_decay = 0.0)
      : params_(std::move(params)), momentum_(momentum), wd_(weight_decay) {
    for (const auto& p : params_) velocity_.emplace_back(p.n, T(0));
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.g, p.g + p.n, T(0));
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& v = velocity_[i];
      for (size_t j = 0; j < p.n; ++j) {
        T g = p.g[j] + static_cast<T>(wd_) * p.w[j];
        v[j] = static_cast<T>(momentum_) * v[j] + g;
        p.w[j] -= static_cast<T>(lr) * v[j];
      }
    }
  }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_, wd_;
};

// Conv stack + projection + L2 normalization: the embedding network body,
// shared between the float production path and the double gradient checks.
template <typename T>
class EmbedNet {
 public:
  EmbedNet(const std::vector<int>& channels, int input_size, int kernel,
           int embedding_dim)
      : stack_(1, channels, input_size, kernel, 2),
        proj_(static_cast<int>(stack_.feature_size()), embedding_dim),
        dim_(embedding_dim) {}

  void init(Rng& rng) {
    stack_.init(rng);
    proj_.init(rng);
  }

  void forward(const Tensor<T>& input, Workspace<T>& ws) const {
    stack_.forward(input, ws);
    ws.pre_norm.resize(static_cast<size_t>(dim_));
    proj_.forward(ws.feature.data(), ws.pre_norm.data());
    double n2 = 0;
    for (T v : ws.pre_norm) n2 += static_cast<double>(v) * v;
    ws.pre_norm_len = std::sqrt(n2);
    ws.embedding.resize(ws.pre_norm.size());
    if (ws.pre_norm_len < 1e-12) {
      // Degenerate activation (e.g. an all-zero input through dead units):
      // fall back to a fixed unit vector to keep the contract.
      std::fill(ws.embedding.begin(), ws.embedding.end(), T(0));
      ws.embedding[0] = T(1);
      ws.pre_norm_len = 0;
      return;
    }
    T inv = static_cast<T>(1.0 / ws.pre_norm_len);
    for (size_t i = 0; i < ws.pre_norm.size(); ++i) {
      ws.embedding[i] = ws.pre_norm[i] * inv;
    }
  }

  void backward(const std::vector<T>& dembedding, Workspace<T>& ws) {
    const size_t d = ws.embedding.size();
    ws.dpre.resize(d);
    if (ws.pre_norm_len == 0) {
      std::fill(ws.dpre.begin(), ws.dpre.end(), T(0));
    } else {
      // d/dv of v/|v|: (g - q (q . g)) / |v|
      double dot = 0;
      for (size_t i = 0; i < d; ++i) {
        dot += static_cast<double>(ws.embedding[i]) * dembedding[i];
      }
      T inv = static_cast<T>(1.0 / ws.pre_norm_len);
      for (size_t i = 0; i < d; ++i) {
        ws.dpre[i] =
            (dembedding[i] - static_cast<T>(dot) * ws.embedding[i]) * inv;
      }
    }
    ws.dfeat.resize(ws.feature.size());
    proj_.backward(ws.feature.data(), ws.dpre.data(), ws.dfeat.data());
    stack_.backward(ws.dfeat, ws);
  }

  std::vector<ParamRef<T>> params() {
    auto p = stack_.params();
    auto pp = proj_.params();
    p.insert(p.end(), pp.begin(), pp.end());
    return p;
  }

  int embedding_dim() const { return dim_; }

 private:
  ConvStack<T> stack_;
  Linear<T> proj_;
  int dim_;
};

// Cross-entropy over logits with a one-hot target; returns loss and writes
// dlogits = softmax - onehot. Softmax uses max-subtraction.
template <typename T>
double cross_entropy_grad(const T* logits, size_t n, size_t target,
                          T* dlogits, double* out_max_prob = nullptr,
                          size_t* out_argmax = nullptr) {
  double mx = -1e300;
  size_t am = 0;
  for (size_t i = 0; i < n; ++i) {
    if (logits[i] > mx) {
      mx = logits[i];
      am = i;
    }
  }
  double sum = 0;
  for (size_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
  double logz = std::log(sum) + mx;
  for (size_t i = 0; i < n; ++i) {
    double p = std::exp(static_cast<double>(logits[i]) - logz);
    dlogits[i] = static_cast<T>(p - (i == target ? 1.0 : 0.0));
  }
  if (out_max_prob) *out_max_prob = std::exp(static_cast<double>(logits[am]) - logz);
  if (out_argmax) *out_argmax = am;
  return logz - static_cast<double>(logits[target]);
}

void mask_to_tensor(const ContactMask& mask, Tensor<float>& out);
void mask_to_tensor(const ContactMask& mask, Tensor<double>& out);

}  // namespace touchloc::nn
