#include "core/nn/layers.hpp"

#include "core/common/errors.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sslseg::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Param make_param(Tensor value, int fan_in, Init init, bool trainable = true) {
  Param p;
  p.grad = zeros_like(value);
  p.value = std::move(value);
  p.fan_in = fan_in;
  p.init = init;
  p.trainable = trainable;
  return p;
}

}  // namespace

std::string shape_string(const std::array<int, 4>& shape) {
  return fmt::format("[{}, {}, {}, {}]", shape[0], shape[1], shape[2], shape[3]);
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ValidationError(fmt::format("tensor shape mismatch {} vs {}", shape_string(a.shape),
                                      shape_string(b.shape)));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
    throw ValidationError("concat_batch: per-sample shapes differ");
  }
  Tensor out(a.n() + b.n(), a.c(), a.h(), a.w());
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

Tensor slice_batch(const Tensor& t, int begin, int end) {
  Tensor out(end - begin, t.c(), t.h(), t.w());
  auto first = t.data.begin() + static_cast<std::ptrdiff_t>(begin * t.sample_size());
  std::copy(first, first + static_cast<std::ptrdiff_t>(out.size()), out.data.begin());
  return out;
}

void initialize(const ParamList& params, std::uint64_t seed) {
  for (const auto& ref : params) {
    Param& p = *ref.param;
    switch (p.init) {
      case Init::kZero: p.value.fill(0.0); break;
      case Init::kOne: p.value.fill(1.0); break;
      case Init::kFanInUniform: {
        Rng rng = make_rng(seed, fnv1a(ref.name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, p.fan_in)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : p.value.data) v = dist(rng);
        break;
      }
    }
    p.grad.fill(0.0);
  }
}

void zero_grad(const ParamList& params) {
  for (const auto& ref : params) ref.param->grad.fill(0.0);
}

double grad_norm_squared(const ParamList& params) {
  double s = 0.0;
  for (const auto& ref : params) {
    if (!ref.param->trainable) continue;
    for (double g : ref.param->grad.data) s += g * g;
  }
  return s;
}

std::size_t count_trainable(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& ref : params) {
    if (ref.param->trainable) n += ref.param->value.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {
  const int fan_in = in_channels * kernel * kernel;
  weight_ = make_param(Tensor(out_channels, in_channels, kernel, kernel), fan_in,
                       Init::kFanInUniform);
  if (has_bias_) bias_ = make_param(Tensor(1, out_channels), fan_in, Init::kFanInUniform);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight_});
  if (has_bias_) out.push_back({prefix + ".bias", &bias_});
}

void Conv2d::im2col(const double* src, int h, int w, double* cols) const {
  const int ho = out_size(h), wo = out_size(w);
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kernel_; ++ki) {
      for (int kj = 0; kj < kernel_; ++kj, ++row) {
        double* dst = cols + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ki;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * wo, dst + (oy + 1) * wo, 0.0);
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - padding_ + kj;
            dst[oy * wo + ox] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const double* cols, int h, int w, double* dst) const {
  const int ho = out_size(h), wo = out_size(w);
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kernel_; ++ki) {
      for (int kj = 0; kj < kernel_; ++kj, ++row) {
        const double* src = cols + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - padding_ + kj;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
  if (x.c() != in_channels_) {
    throw ValidationError(fmt::format("conv expects {} input channels, got {}", in_channels_, x.c()));
  }
  input_ = x;
  const int h = x.h(), w = x.w();
  const int ho = out_size(h), wo = out_size(w);
  const int rows = in_channels_ * kernel_ * kernel_;
  const int cols_n = ho * wo;
  const bool pointwise = kernel_ == 1 && stride_ == 1 && padding_ == 0;
  Tensor y(x.n(), out_channels_, ho, wo);
  ConstMapMat wmat(weight_.value.data.data(), out_channels_, rows);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * cols_n);
  for (int n = 0; n < x.n(); ++n) {
    const double* in = x.sample(n).data();
    if (!pointwise) im2col(in, h, w, cols.data());
    ConstMapMat cmat(pointwise ? in : cols.data(), rows, cols_n);
    MapMat ymat(y.sample(n).data(), out_channels_, cols_n);
    ymat.noalias() = wmat * cmat;
    if (has_bias_) {
      for (int o = 0; o < out_channels_; ++o) ymat.row(o).array() += bias_.value.data[o];
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const int h = x.h(), w = x.w();
  const int ho = out_size(h), wo = out_size(w);
  const int rows = in_channels_ * kernel_ * kernel_;
  const int cols_n = ho * wo;
  const bool pointwise = kernel_ == 1 && stride_ == 1 && padding_ == 0;
  Tensor dx = zeros_like(x);
  ConstMapMat wmat(weight_.value.data.data(), out_channels_, rows);
  MapMat dw(weight_.grad.data.data(), out_channels_, rows);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * cols_n);
  RowMat dcols(rows, cols_n);
  for (int n = 0; n < x.n(); ++n) {
    const double* in = x.sample(n).data();
    if (!pointwise) im2col(in, h, w, cols.data());
    ConstMapMat cmat(pointwise ? in : cols.data(), rows, cols_n);
    ConstMapMat gy(grad_out.sample(n).data(), out_channels_, cols_n);
    dw.noalias() += gy * cmat.transpose();
    if (has_bias_) {
      for (int o = 0; o < out_channels_; ++o) bias_.grad.data[o] += gy.row(o).sum();
    }
    if (pointwise) {
      MapMat dxm(dx.sample(n).data(), rows, cols_n);
      dxm.noalias() = wmat.transpose() * gy;
    } else {
      dcols.noalias() = wmat.transpose() * gy;
      col2im(dcols.data(), h, w, dx.sample(n).data());
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = make_param(Tensor(1, channels), 1, Init::kOne);
  beta_ = make_param(Tensor(1, channels), 1, Init::kZero);
  running_mean_ = make_param(Tensor(1, channels), 1, Init::kZero, false);
  running_var_ = make_param(Tensor(1, channels, 1, 1, 1.0), 1, Init::kOne, false);
}

void BatchNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &gamma_});
  out.push_back({prefix + ".bias", &beta_});
  out.push_back({prefix + ".running_mean", &running_mean_});
  out.push_back({prefix + ".running_var", &running_var_});
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.c() != channels_) {
    throw ValidationError(fmt::format("batchnorm expects {} channels, got {}", channels_, x.c()));
  }
  const int n = x.n();
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  Tensor y = zeros_like(x);
  xhat_ = zeros_like(x);
  inv_std_.assign(channels_, 0.0);
  used_batch_stats_ = mode != Mode::kEval;
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (used_batch_stats_) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = x.data.data() + (static_cast<std::size_t>(b) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = x.data.data() + (static_cast<std::size_t>(b) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
      if (mode == Mode::kTrain) {
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean_.value.data[c] = (1 - momentum_) * running_mean_.value.data[c] + momentum_ * mean;
        running_var_.value.data[c] = (1 - momentum_) * running_var_.value.data[c] + momentum_ * unbiased;
      }
    } else {
      mean = running_mean_.value.data[c];
      var = running_var_.value.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma_.value.data[c], bta = beta_.value.data[c];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x.data[off + i] - mean) * inv;
        xhat_.data[off + i] = xh;
        y.data[off + i] = g * xh + bta;
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const int n = grad_out.n();
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  Tensor dx = zeros_like(grad_out);
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += grad_out.data[off + i];
        sum_dy_xhat += grad_out.data[off + i] * xhat_.data[off + i];
      }
    }
    gamma_.grad.data[c] += sum_dy_xhat;
    beta_.grad.data[c] += sum_dy;
    const double scale = gamma_.value.data[c] * inv_std_[c];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (used_batch_stats_) {
          dx.data[off + i] = scale / count *
                             (count * grad_out.data[off + i] - sum_dy - xhat_.data[off + i] * sum_dy_xhat);
        } else {
          dx.data[off + i] = scale * grad_out.data[off + i];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU / MaxPool2 / Linear

Tensor ReLU::forward(const Tensor& x, Mode) {
  shape_ = x.shape;
  mask_.resize(x.size());
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask_[i] = y.data[i] > 0.0;
    if (!mask_[i]) y.data[i] = 0.0;
  }
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

Tensor MaxPool2::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape;
  const int ho = x.h() / 2, wo = x.w() / 2;
  if (ho < 1 || wo < 1) throw ValidationError("max-pool input smaller than 2x2");
  Tensor y(x.n(), x.c(), ho, wo);
  argmax_.resize(y.size());
  std::size_t k = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++k) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(n) * x.c() + c) * x.h() + 2 * oy + dy) * x.w() + 2 * ox + dx;
              if (x.data[idx] > best) {
                best = x.data[idx];
                arg = idx;
              }
            }
          }
          y.data[k] = best;
          argmax_[k] = arg;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  for (std::size_t k = 0; k < grad_out.size(); ++k) dx.data[argmax_[k]] += grad_out.data[k];
  return dx;
}

Linear::Linear(int in_features, int out_features, bool bias)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  weight_ = make_param(Tensor(out_features, in_features), in_features, Init::kFanInUniform);
  if (has_bias_) bias_ = make_param(Tensor(1, out_features), in_features, Init::kFanInUniform);
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight_});
  if (has_bias_) out.push_back({prefix + ".bias", &bias_});
}

Tensor Linear::forward(const Tensor& x, Mode) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw ValidationError(fmt::format("linear expects {} features, got {}", in_, x.sample_size()));
  }
  input_ = x;
  Tensor y(x.n(), out_);
  ConstMapMat xm(x.data.data(), x.n(), in_);
  ConstMapMat wm(weight_.value.data.data(), out_, in_);
  MapMat ym(y.data.data(), x.n(), out_);
  ym.noalias() = xm * wm.transpose();
  if (has_bias_) {
    for (int r = 0; r < x.n(); ++r) {
      for (int o = 0; o < out_; ++o) ym(r, o) += bias_.value.data[o];
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int n = input_.n();
  ConstMapMat xm(input_.data.data(), n, in_);
  ConstMapMat wm(weight_.value.data.data(), out_, in_);
  ConstMapMat gy(grad_out.data.data(), n, out_);
  MapMat dw(weight_.grad.data.data(), out_, in_);
  dw.noalias() += gy.transpose() * xm;
  if (has_bias_) {
    for (int o = 0; o < out_; ++o) bias_.grad.data[o] += gy.col(o).sum();
  }
  Tensor dx = zeros_like(input_);
  MapMat dxm(dx.data.data(), n, in_);
  dxm.noalias() = gy * wm;
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Sequential& Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, ParamList& out) {
  for (auto& [name, layer] : layers_) layer->collect(prefix.empty() ? name : prefix + "." + name, out);
}

// ---------------------------------------------------------------------------
// Stateless ops

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n(), x.c());
  const std::size_t plane = x.plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.data.data() + (static_cast<std::size_t>(n) * x.c() + c) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      y.data[static_cast<std::size_t>(n) * x.c() + c] = s / static_cast<double>(plane);
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& grad, int h, int w) {
  Tensor dx(grad.n(), grad.c(), h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < grad.n(); ++n) {
    for (int c = 0; c < grad.c(); ++c) {
      const double g = grad.data[static_cast<std::size_t>(n) * grad.c() + c] / static_cast<double>(plane);
      double* p = dx.data.data() + (static_cast<std::size_t>(n) * grad.c() + c) * plane;
      std::fill(p, p + plane, g);
    }
  }
  return dx;
}

namespace {

struct Tap {
  int i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.h() == out_h && x.w() == out_w) return x;
  const auto ty = bilinear_taps(x.h(), out_h), tx = bilinear_taps(x.w(), out_w);
  Tensor y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[ox];
          const double top = (1 - b.w1) * x.at(n, c, a.i0, b.i0) + b.w1 * x.at(n, c, a.i0, b.i1);
          const double bot = (1 - b.w1) * x.at(n, c, a.i1, b.i0) + b.w1 * x.at(n, c, a.i1, b.i1);
          y.at(n, c, oy, ox) = (1 - a.w1) * top + a.w1 * bot;
        }
      }
    }
  }
  return y;
}

Tensor upsample_bilinear_backward(const Tensor& grad, int in_h, int in_w) {
  if (grad.h() == in_h && grad.w() == in_w) return grad;
  const auto ty = bilinear_taps(in_h, grad.h()), tx = bilinear_taps(in_w, grad.w());
  Tensor dx(grad.n(), grad.c(), in_h, in_w);
  for (int n = 0; n < grad.n(); ++n) {
    for (int c = 0; c < grad.c(); ++c) {
      for (int oy = 0; oy < grad.h(); ++oy) {
        const Tap& a = ty[oy];
        for (int ox = 0; ox < grad.w(); ++ox) {
          const Tap& b = tx[ox];
          const double g = grad.at(n, c, oy, ox);
          dx.at(n, c, a.i0, b.i0) += (1 - a.w1) * (1 - b.w1) * g;
          dx.at(n, c, a.i0, b.i1) += (1 - a.w1) * b.w1 * g;
          dx.at(n, c, a.i1, b.i0) += a.w1 * (1 - b.w1) * g;
          dx.at(n, c, a.i1, b.i1) += a.w1 * b.w1 * g;
        }
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ValidationError(fmt::format("concat_channels: {} vs {}", shape_string(a.shape),
                                      shape_string(b.shape)));
  }
  Tensor y(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    auto dst = y.sample(n);
    auto sa = a.sample(n), sb = b.sample(n);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
  }
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels) {
  Tensor a(t.n(), first_channels, t.h(), t.w());
  Tensor b(t.n(), t.c() - first_channels, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n) {
    auto src = t.sample(n);
    auto da = a.sample(n), db = b.sample(n);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(da.size()), da.begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(da.size()), src.end(), db.begin());
  }
  return {std::move(a), std::move(b)};
}

}  // namespace sslseg::nn
