#include "core/models/models.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace sslseg::models {
namespace {

using nn::Mode;
using nn::Sequential;
using nn::Tensor;

std::unique_ptr<Sequential> double_conv(int in, int out) {
  auto s = std::make_unique<Sequential>();
  s->emplace<nn::Conv2d>("conv1", in, out, 3, 1, 1, false)
      .emplace<nn::BatchNorm>("bn1", out)
      .emplace<nn::ReLU>("relu1")
      .emplace<nn::Conv2d>("conv2", out, out, 3, 1, 1, false)
      .emplace<nn::BatchNorm>("bn2", out)
      .emplace<nn::ReLU>("relu2");
  return s;
}

// relu(main(x) + shortcut(x)); shortcut is identity when shapes agree.
class ResidualBlock : public nn::Layer {
 public:
  ResidualBlock(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut)
      : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

  Tensor forward(const Tensor& x, Mode mode) override {
    Tensor y = main_->forward(x, mode);
    if (shortcut_) nn::add_inplace(y, shortcut_->forward(x, mode));
    else nn::add_inplace(y, x);
    return relu_.forward(y, mode);
  }

  Tensor backward(const Tensor& grad_out) override {
    const Tensor g = relu_.backward(grad_out);
    Tensor dx = main_->backward(g);
    if (shortcut_) nn::add_inplace(dx, shortcut_->backward(g));
    else nn::add_inplace(dx, g);
    return dx;
  }

  void collect(const std::string& prefix, nn::ParamList& out) override {
    main_->collect(prefix, out);
    if (shortcut_) shortcut_->collect(prefix + ".downsample", out);
  }

 private:
  std::unique_ptr<Sequential> main_;
  std::unique_ptr<Sequential> shortcut_;
  nn::ReLU relu_;
};

std::unique_ptr<Sequential> projection_shortcut(int in, int out, int stride) {
  if (in == out && stride == 1) return nullptr;
  auto s = std::make_unique<Sequential>();
  s->emplace<nn::Conv2d>("conv", in, out, 1, stride, 0, false).emplace<nn::BatchNorm>("bn", out);
  return s;
}

std::unique_ptr<nn::Layer> basic_block(int in, int out, int stride) {
  auto m = std::make_unique<Sequential>();
  m->emplace<nn::Conv2d>("conv1", in, out, 3, stride, 1, false)
      .emplace<nn::BatchNorm>("bn1", out)
      .emplace<nn::ReLU>("relu1")
      .emplace<nn::Conv2d>("conv2", out, out, 3, 1, 1, false)
      .emplace<nn::BatchNorm>("bn2", out);
  return std::make_unique<ResidualBlock>(std::move(m), projection_shortcut(in, out, stride));
}

std::unique_ptr<nn::Layer> bottleneck_block(int in, int mid, int stride) {
  const int out = 4 * mid;
  auto m = std::make_unique<Sequential>();
  m->emplace<nn::Conv2d>("conv1", in, mid, 1, 1, 0, false)
      .emplace<nn::BatchNorm>("bn1", mid)
      .emplace<nn::ReLU>("relu1")
      .emplace<nn::Conv2d>("conv2", mid, mid, 3, stride, 1, false)
      .emplace<nn::BatchNorm>("bn2", mid)
      .emplace<nn::ReLU>("relu2")
      .emplace<nn::Conv2d>("conv3", mid, out, 1, 1, 0, false)
      .emplace<nn::BatchNorm>("bn3", out);
  return std::make_unique<ResidualBlock>(std::move(m), projection_shortcut(in, out, stride));
}

Tensor zeros_of(const std::array<int, 4>& s) { return Tensor(s[0], s[1], s[2], s[3]); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::kUnet: return "unet";
    case Arch::kResnet18Unet: return "resnet18_unet";
    case Arch::kResnet50Unet: return "resnet50_unet";
  }
  return "?";
}

Arch parse_arch(std::string_view s) {
  const auto l = lower(s);
  if (l == "unet") return Arch::kUnet;
  if (l == "resnet18_unet") return Arch::kResnet18Unet;
  if (l == "resnet50_unet") return Arch::kResnet50Unet;
  throw ConfigError(fmt::format("unknown architecture '{}'", s));
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kSimclr: return "SimCLR";
    case Method::kMoco: return "MoCo";
    case Method::kSimsiam: return "SimSiam";
    case Method::kNone: return "Supervised";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  const auto l = lower(s);
  if (l == "simclr") return Method::kSimclr;
  if (l == "moco") return Method::kMoco;
  if (l == "simsiam") return Method::kSimsiam;
  if (l == "none" || l == "supervised") return Method::kNone;
  throw ConfigError(fmt::format("unknown method '{}'", s));
}

Head head_for(Method m) {
  switch (m) {
    case Method::kSimclr:
    case Method::kMoco: return Head::kProj2Layer;
    case Method::kSimsiam: return Head::kProj3LayerPlusPred;
    case Method::kNone: return Head::kNone;
  }
  return Head::kNone;
}

NetworkSpec with_head(NetworkSpec spec, Head head) {
  spec.head = head;
  return spec;
}

void validate(const NetworkSpec& spec) {
  if (spec.embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
  if (spec.in_channels <= 0 || spec.base_width <= 0 || spec.resnet_width <= 0 || spec.pred_hidden <= 0) {
    throw ConfigError("network widths must be positive");
  }
  if (spec.arch == Arch::kUnet) {
    if (spec.depth < 1) throw ConfigError("U-Net depth must be at least 1");
    if ((spec.input_size >> spec.depth) < 1) {
      throw ConfigError(fmt::format("input size {} is too small for a depth-{} U-Net", spec.input_size, spec.depth));
    }
  } else if (spec.input_size < 8) {
    throw ConfigError(fmt::format("input size {} is too small for {}", spec.input_size, arch_name(spec.arch)));
  }
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const NetworkSpec& spec) {
  validate(spec);
  if (spec.arch == Arch::kUnet) {
    int width = spec.base_width;
    stages_.push_back(double_conv(spec.in_channels, width));
    channels_.push_back(width);
    for (int i = 1; i <= spec.depth; ++i) {
      auto stage = std::make_unique<Sequential>();
      stage->emplace<nn::MaxPool2>("pool");
      stage->add("block", double_conv(width, width * 2));
      width *= 2;
      stages_.push_back(std::move(stage));
      channels_.push_back(width);
    }
    return;
  }
  const bool bottleneck = spec.arch == Arch::kResnet50Unet;
  const int blocks[4] = {bottleneck ? 3 : 2, bottleneck ? 4 : 2, bottleneck ? 6 : 2, bottleneck ? 3 : 2};
  const int w = spec.resnet_width;
  auto stem = std::make_unique<Sequential>();
  stem->emplace<nn::Conv2d>("conv", spec.in_channels, w, 3, 1, 1, false)
      .emplace<nn::BatchNorm>("bn", w)
      .emplace<nn::ReLU>("relu");
  stages_.push_back(std::move(stem));
  channels_.push_back(w);
  int in = w;
  for (int layer = 0; layer < 4; ++layer) {
    const int mid = w << layer;
    auto stage = std::make_unique<Sequential>();
    for (int b = 0; b < blocks[layer]; ++b) {
      const int stride = (b == 0 && layer > 0) ? 2 : 1;
      stage->add(fmt::format("block{}", b), bottleneck ? bottleneck_block(in, mid, stride) : basic_block(in, mid, stride));
      in = bottleneck ? 4 * mid : mid;
    }
    stages_.push_back(std::move(stage));
    channels_.push_back(in);
  }
}

std::vector<Tensor> Encoder::forward(const Tensor& x, Mode mode) {
  std::vector<Tensor> feats;
  feats.reserve(stages_.size());
  shapes_.clear();
  const Tensor* in = &x;
  for (auto& stage : stages_) {
    feats.push_back(stage->forward(*in, mode));
    shapes_.push_back(feats.back().shape);
    in = &feats.back();
  }
  return feats;
}

Tensor Encoder::backward(std::vector<Tensor> grads) {
  grads.resize(stages_.size());
  const std::size_t last = stages_.size() - 1;
  Tensor g = grads[last].empty() ? zeros_of(shapes_[last]) : std::move(grads[last]);
  for (std::size_t i = last; i >= 1; --i) {
    g = stages_[i]->backward(g);
    if (!grads[i - 1].empty()) nn::add_inplace(g, grads[i - 1]);
  }
  return stages_[0]->backward(g);
}

void Encoder::collect(const std::string& prefix, nn::ParamList& out) {
  for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i]->collect(fmt::format("{}.stage{}", prefix, i), out);
}

// ---------------------------------------------------------------------------

Decoder::Decoder(const std::vector<int>& skip_channels, int base_width)
    : levels_(static_cast<int>(skip_channels.size()) - 1) {
  int below = skip_channels.back();
  for (int i = levels_ - 1; i >= 0; --i) {
    const int out = base_width << i;
    ups_.push_back({double_conv(skip_channels[i] + below, out), skip_channels[i], {}});
    below = out;
  }
  out_channels_ = below;
}

Tensor Decoder::forward(const std::vector<Tensor>& features, Mode mode) {
  Tensor x = features.back();
  int level = levels_ - 1;
  for (auto& up : ups_) {
    const Tensor& skip = features[level--];
    up.below_shape = x.shape;
    x = up.conv->forward(nn::concat_channels(skip, nn::upsample_bilinear(x, skip.h(), skip.w())), mode);
  }
  return x;
}

std::vector<Tensor> Decoder::backward(const Tensor& grad_out) {
  std::vector<Tensor> grads(levels_ + 1);
  Tensor g = grad_out;
  int level = 0;
  for (auto it = ups_.rbegin(); it != ups_.rend(); ++it, ++level) {
    auto [g_skip, g_up] = nn::split_channels(it->conv->backward(g), it->skip_channels);
    grads[level] = std::move(g_skip);
    g = nn::upsample_bilinear_backward(g_up, it->below_shape[2], it->below_shape[3]);
  }
  grads[levels_] = std::move(g);
  return grads;
}

void Decoder::collect(const std::string& prefix, nn::ParamList& out) {
  int level = levels_ - 1;
  for (auto& up : ups_) up.conv->collect(fmt::format("{}.up{}", prefix, level--), out);
}

// ---------------------------------------------------------------------------

SslNetwork::SslNetwork(const NetworkSpec& spec, Method method, std::uint64_t seed)
    : spec_(spec), method_(method), encoder_(spec) {
  if (method == Method::kNone) throw ConfigError("an SSL network needs a method");
  if (spec.head != head_for(method)) {
    throw ConfigError(fmt::format("{} requires a different head than the one in the network spec", method_name(method)));
  }
  if (spec.arch == Arch::kUnet) {
    decoder_ = std::make_unique<Decoder>(encoder_.channels(), spec.base_width);
    feature_dim_ = decoder_->out_channels();
  } else {
    feature_dim_ = encoder_.channels().back();
  }
  const int d = spec.embedding_dim;
  const int h = spec.head_hidden > 0 ? spec.head_hidden : std::max(feature_dim_, d);
  if (spec.head == Head::kProj2Layer) {
    projector_.emplace<nn::Linear>("fc1", feature_dim_, h).emplace<nn::ReLU>("relu1").emplace<nn::Linear>("fc2", h, d);
  } else {
    projector_.emplace<nn::Linear>("fc1", feature_dim_, h)
        .emplace<nn::BatchNorm>("bn1", h)
        .emplace<nn::ReLU>("relu1")
        .emplace<nn::Linear>("fc2", h, h)
        .emplace<nn::BatchNorm>("bn2", h)
        .emplace<nn::ReLU>("relu2")
        .emplace<nn::Linear>("fc3", h, d)
        .emplace<nn::BatchNorm>("bn3", d);
    predictor_ = std::make_unique<Sequential>();
    predictor_->emplace<nn::Linear>("fc1", d, spec.pred_hidden)
        .emplace<nn::BatchNorm>("bn1", spec.pred_hidden)
        .emplace<nn::ReLU>("relu1")
        .emplace<nn::Linear>("fc2", spec.pred_hidden, d);
  }
  nn::initialize(params(), seed);
}

SslOutput SslNetwork::forward(const Tensor& x, Mode mode) {
  auto feats = encoder_.forward(x, mode);
  Tensor map = decoder_ ? decoder_->forward(feats, mode) : std::move(feats.back());
  pooled_from_ = map.shape;
  SslOutput out;
  out.z = projector_.forward(nn::global_avg_pool(map), mode);
  if (predictor_) out.p = predictor_->forward(out.z, mode);
  return out;
}

void SslNetwork::backward(const Tensor& dz, const Tensor& dp) {
  Tensor gz = dz;
  if (!dp.empty()) {
    if (!predictor_) throw ValidationError("prediction gradient given to a network without predictor");
    Tensor from_pred = predictor_->backward(dp);
    if (gz.empty()) gz = std::move(from_pred);
    else nn::add_inplace(gz, from_pred);
  }
  const Tensor g_map =
      nn::global_avg_pool_backward(projector_.backward(gz), pooled_from_[2], pooled_from_[3]);
  if (decoder_) {
    encoder_.backward(decoder_->backward(g_map));
  } else {
    std::vector<Tensor> grads(encoder_.channels().size());
    grads.back() = g_map;
    encoder_.backward(std::move(grads));
  }
}

nn::ParamList SslNetwork::params() {
  nn::ParamList out;
  encoder_.collect("encoder", out);
  if (decoder_) decoder_->collect("decoder", out);
  projector_.collect("head.proj", out);
  if (predictor_) predictor_->collect("head.pred", out);
  return out;
}

// ---------------------------------------------------------------------------

SegmentationNetwork::SegmentationNetwork(const NetworkSpec& spec, std::uint64_t seed)
    : spec_(spec), encoder_(spec), decoder_(encoder_.channels(), spec.base_width),
      output_(decoder_.out_channels(), 1, 1, 1, 0, true) {
  if (spec.head != Head::kNone) throw ConfigError("a segmentation network must not carry an SSL head");
  nn::initialize(params(), seed);
}

Tensor SegmentationNetwork::forward(const Tensor& x, Mode mode) {
  return output_.forward(decoder_.forward(encoder_.forward(x, mode), mode), mode);
}

void SegmentationNetwork::backward(const Tensor& grad_logits) {
  encoder_.backward(decoder_.backward(output_.backward(grad_logits)));
}

nn::ParamList SegmentationNetwork::params() {
  nn::ParamList out;
  encoder_.collect("encoder", out);
  decoder_.collect("decoder", out);
  output_.collect("output", out);
  return out;
}

std::unique_ptr<SslNetwork> build_ssl_network(const NetworkSpec& spec, Method method, std::uint64_t seed) {
  return std::make_unique<SslNetwork>(spec, method, seed);
}

std::unique_ptr<SegmentationNetwork> build_segmentation_network(const NetworkSpec& spec, std::uint64_t seed) {
  return std::make_unique<SegmentationNetwork>(spec, seed);
}

std::string_view segment_of(std::string_view name) { return name.substr(0, name.find('.')); }

nn::ParamList select_segment(const nn::ParamList& params, std::string_view segment) {
  nn::ParamList out;
  for (const auto& ref : params) {
    if (segment_of(ref.name) == segment) out.push_back(ref);
  }
  return out;
}

void copy_params(const nn::ParamList& from, const nn::ParamList& to) {
  if (from.size() != to.size()) throw ValidationError("copy_params: parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name || !from[i].param->value.same_shape(to[i].param->value)) {
      throw ValidationError(fmt::format("copy_params: {} does not match {}", from[i].name, to[i].name));
    }
    to[i].param->value.data = from[i].param->value.data;
  }
}

}  // namespace sslseg::models
