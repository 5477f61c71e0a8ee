#pragma once

#include "core/common/rng.hpp"
#include "core/nn/tensor.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace sslseg::nn {

// kTrain normalises with batch statistics and updates running statistics;
// kProbe uses batch statistics without touching running statistics;
// kEval uses running statistics.
enum class Mode { kTrain, kProbe, kEval };

enum class Init { kFanInUniform, kZero, kOne };

struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;
  int fan_in = 1;
  Init init = Init::kFanInUniform;
};

struct ParamRef {
  std::string name;
  Param* param;
};
using ParamList = std::vector<ParamRef>;

// Seeds every parameter from (seed, full name) so the value of one
// parameter never depends on construction order.
void initialize(const ParamList& params, std::uint64_t seed);
void zero_grad(const ParamList& params);
// Sum of squared gradient entries over trainable parameters.
double grad_norm_squared(const ParamList& params);
std::size_t count_trainable(const ParamList& params);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Accumulates parameter gradients and returns the input gradient. Uses
  // state cached by the most recent forward().
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, ParamList& out) { (void)prefix, (void)out; }
};

class Conv2d : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0,
         bool bias = true);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;

  int out_channels() const { return out_channels_; }
  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  void im2col(const double* src, int h, int w, double* cols) const;
  void col2im(const double* cols, int h, int w, double* dst) const;

  int in_channels_, out_channels_, kernel_, stride_, padding_;
  bool has_bias_;
  Param weight_;
  Param bias_;
  Tensor input_;
};

// Per-channel normalisation over (N, H, W); also used on [N, C] features.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;

 private:
  int channels_;
  double momentum_, eps_;
  Param gamma_, beta_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool used_batch_stats_ = true;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<unsigned char> mask_;
  std::array<int, 4> shape_{};
};

// 2x2 window, stride 2, floor on odd sizes.
class MaxPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> argmax_;
  std::array<int, 4> in_shape_{};
};

// Input [N, F, H, W] is read as N rows of F*H*W features; output [N, out].
class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, bool bias = true);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;

 private:
  int in_, out_;
  bool has_bias_;
  Param weight_, bias_;
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::string name, std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  Sequential& emplace(std::string name, Args&&... args) {
    return add(std::move(name), std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

// Stateless ops used to wire skip connections and pooling heads.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad, int h, int w);
// Bilinear resampling with half-pixel centres (align_corners = false).
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& grad, int in_h, int in_w);
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels);

}  // namespace sslseg::nn
