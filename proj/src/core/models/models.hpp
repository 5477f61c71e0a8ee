#pragma once

#include "core/nn/layers.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sslseg::models {

enum class Arch { kUnet, kResnet18Unet, kResnet50Unet };
enum class Head { kNone, kProj2Layer, kProj3LayerPlusPred };
enum class Method { kSimclr, kMoco, kSimsiam, kNone };

std::string_view arch_name(Arch a);  // "unet", "resnet18_unet", "resnet50_unet"
Arch parse_arch(std::string_view s);
std::string_view method_name(Method m);  // "SimCLR", "MoCo", "SimSiam", "Supervised"
Method parse_method(std::string_view s);  // case-insensitive; "none"/"supervised" -> kNone
Head head_for(Method m);

struct NetworkSpec {
  Arch arch = Arch::kUnet;
  int input_size = 32;
  Head head = Head::kNone;
  int embedding_dim = 128;
  int in_channels = 3;
  // U-Net stage width and the decoder width for every architecture.
  int base_width = 64;
  // Down/up stages of the plain U-Net.
  int depth = 4;
  // Stem width of the residual encoders.
  int resnet_width = 64;
  // 0 selects max(feature dim, embedding_dim).
  int head_hidden = 0;
  // SimSiam predictor bottleneck.
  int pred_hidden = 32;

  bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec with_head(NetworkSpec spec, Head head);
// Throws ConfigError on unsupported (arch, size) or bad widths.
void validate(const NetworkSpec& spec);

// Pyramid of feature maps, shallowest first; the last entry is the bottleneck.
class Encoder {
 public:
  explicit Encoder(const NetworkSpec& spec);
  std::vector<nn::Tensor> forward(const nn::Tensor& x, nn::Mode mode);
  // grads[i] is dL/d(feature i); an empty tensor means zero.
  nn::Tensor backward(std::vector<nn::Tensor> grads);
  void collect(const std::string& prefix, nn::ParamList& out);
  const std::vector<int>& channels() const { return channels_; }

 private:
  std::vector<std::unique_ptr<nn::Sequential>> stages_;
  std::vector<int> channels_;
  std::vector<std::array<int, 4>> shapes_;
};

// U-Net expanding path: upsample to the skip's size, concatenate, double conv.
class Decoder {
 public:
  Decoder(const std::vector<int>& skip_channels, int base_width);
  nn::Tensor forward(const std::vector<nn::Tensor>& features, nn::Mode mode);
  std::vector<nn::Tensor> backward(const nn::Tensor& grad_out);
  void collect(const std::string& prefix, nn::ParamList& out);
  int out_channels() const { return out_channels_; }

 private:
  struct Up {
    std::unique_ptr<nn::Sequential> conv;
    int skip_channels;
    std::array<int, 4> below_shape;
  };
  std::vector<Up> ups_;  // deepest first
  int levels_;
  int out_channels_;
};

struct SslOutput {
  nn::Tensor z;  // projection, [B, D]
  nn::Tensor p;  // prediction, [B, D]; empty unless SimSiam
};

// Encoder (+ decoder for the plain U-Net), global average pool, projection
// head and, for SimSiam, the predictor. Parameter segments: encoder,
// decoder, head.
class SslNetwork {
 public:
  SslNetwork(const NetworkSpec& spec, Method method, std::uint64_t seed);
  SslOutput forward(const nn::Tensor& x, nn::Mode mode);
  // dp may be empty. Accumulates into parameter gradients.
  void backward(const nn::Tensor& dz, const nn::Tensor& dp = {});
  nn::ParamList params();
  const NetworkSpec& spec() const { return spec_; }
  Method method() const { return method_; }
  bool has_decoder() const { return decoder_ != nullptr; }
  int feature_dim() const { return feature_dim_; }

 private:
  NetworkSpec spec_;
  Method method_;
  Encoder encoder_;
  std::unique_ptr<Decoder> decoder_;
  nn::Sequential projector_;
  std::unique_ptr<nn::Sequential> predictor_;
  int feature_dim_;
  std::array<int, 4> pooled_from_{};
};

// Encoder, decoder and a 1x1 output conv producing per-pixel lesion logits.
// Parameter segments: encoder, decoder, output.
class SegmentationNetwork {
 public:
  SegmentationNetwork(const NetworkSpec& spec, std::uint64_t seed);
  // Logits [B, 1, S, S].
  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode);
  void backward(const nn::Tensor& grad_logits);
  nn::ParamList params();
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  Encoder encoder_;
  Decoder decoder_;
  nn::Conv2d output_;
};

std::unique_ptr<SslNetwork> build_ssl_network(const NetworkSpec& spec, Method method, std::uint64_t seed);
std::unique_ptr<SegmentationNetwork> build_segmentation_network(const NetworkSpec& spec, std::uint64_t seed);

// Segment of a dotted parameter name ("encoder.stage0.conv1.weight" -> "encoder").
std::string_view segment_of(std::string_view name);
nn::ParamList select_segment(const nn::ParamList& params, std::string_view segment);
// Copies values between lists with identical names and shapes.
void copy_params(const nn::ParamList& from, const nn::ParamList& to);

}  // namespace sslseg::models
