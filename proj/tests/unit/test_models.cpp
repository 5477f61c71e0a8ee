#include "core/common/errors.hpp"
#include "core/models/checkpoint.hpp"
#include "core/models/models.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace sslseg;
using namespace sslseg::models;

namespace {

NetworkSpec tiny(Arch arch = Arch::kUnet, int size = 16) {
  NetworkSpec s;
  s.arch = arch;
  s.input_size = size;
  s.base_width = 4;
  s.depth = 2;
  s.resnet_width = 4;
  s.embedding_dim = 8;
  s.pred_hidden = 4;
  return s;
}

std::vector<double> values(const nn::ParamList& params, std::string_view segment) {
  std::vector<double> out;
  for (const auto& r : select_segment(params, segment)) {
    out.insert(out.end(), r.param->value.data.begin(), r.param->value.data.end());
  }
  return out;
}

}  // namespace

TEST(Models, NamesRoundTrip) {
  for (Arch a : {Arch::kUnet, Arch::kResnet18Unet, Arch::kResnet50Unet}) EXPECT_EQ(parse_arch(arch_name(a)), a);
  EXPECT_EQ(parse_method("simclr"), Method::kSimclr);
  EXPECT_EQ(parse_method("MoCo"), Method::kMoco);
  EXPECT_EQ(parse_method("supervised"), Method::kNone);
  EXPECT_THROW(parse_method("byol"), ConfigError);
  EXPECT_THROW(parse_arch("vit"), ConfigError);
  EXPECT_EQ(head_for(Method::kSimsiam), Head::kProj3LayerPlusPred);
  EXPECT_EQ(head_for(Method::kMoco), Head::kProj2Layer);
}

TEST(Models, RejectsUnsupportedSpecs) {
  NetworkSpec s = tiny();
  s.depth = 5;
  EXPECT_THROW(validate(s), ConfigError);
  s = tiny();
  s.embedding_dim = 0;
  EXPECT_THROW(validate(s), ConfigError);
}

TEST(Models, SegmentationOutputShapeForEveryArch) {
  std::mt19937_64 rng(1);
  for (Arch a : {Arch::kUnet, Arch::kResnet18Unet, Arch::kResnet50Unet}) {
    for (int size : {16, 32, 50}) {
      auto net = build_segmentation_network(tiny(a, size), 3);
      const nn::Tensor y = net->forward(testutil::random_tensor(rng, 2, 3, size, size), nn::Mode::kEval);
      EXPECT_EQ(y.shape, (std::array<int, 4>{2, 1, size, size})) << arch_name(a) << " " << size;
    }
  }
}

TEST(Models, SslOutputShapes) {
  std::mt19937_64 rng(2);
  const nn::Tensor x = testutil::random_tensor(rng, 3, 3, 16, 16);
  for (Method m : {Method::kSimclr, Method::kMoco, Method::kSimsiam}) {
    auto net = build_ssl_network(with_head(tiny(), head_for(m)), m, 1);
    const SslOutput out = net->forward(x, nn::Mode::kTrain);
    EXPECT_EQ(out.z.n(), 3);
    EXPECT_EQ(out.z.c(), 8);
    EXPECT_EQ(out.p.empty(), m != Method::kSimsiam);
  }
}

TEST(Models, SegmentsPartitionParameters) {
  auto ssl = build_ssl_network(with_head(tiny(), Head::kProj2Layer), Method::kSimclr, 1);
  const auto params = ssl->params();
  std::size_t total = 0;
  for (std::string_view seg : {"encoder", "decoder", "head"}) {
    const auto part = select_segment(params, seg);
    EXPECT_FALSE(part.empty()) << seg;
    total += part.size();
  }
  EXPECT_EQ(total, params.size());
  EXPECT_TRUE(ssl->has_decoder());

  auto res = build_ssl_network(with_head(tiny(Arch::kResnet18Unet), Head::kProj2Layer), Method::kMoco, 1);
  EXPECT_FALSE(res->has_decoder());
  EXPECT_TRUE(select_segment(res->params(), "decoder").empty());

  auto seg = build_segmentation_network(tiny(), 1);
  EXPECT_FALSE(select_segment(seg->params(), "output").empty());
  EXPECT_EQ(segment_of("encoder.stage0.conv1.weight"), "encoder");
}

TEST(Models, SeedReproducesWeights) {
  auto a = build_segmentation_network(tiny(), 5), b = build_segmentation_network(tiny(), 5),
       c = build_segmentation_network(tiny(), 6);
  EXPECT_EQ(values(a->params(), "encoder"), values(b->params(), "encoder"));
  EXPECT_NE(values(a->params(), "encoder"), values(c->params(), "encoder"));
}

TEST(Models, SegmentationGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  NetworkSpec s = tiny();
  s.input_size = 8;
  s.base_width = 2;
  s.depth = 1;
  auto net = build_segmentation_network(s, 2);
  const nn::Tensor x = testutil::random_tensor(rng, 2, 3, 8, 8);
  const nn::Tensor g = testutil::random_tensor(rng, 2, 1, 8, 8);
  const auto loss = [&] {
    const nn::Tensor y = net->forward(x, nn::Mode::kProbe);
    double v = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) v += y.data[i] * g.data[i];
    return v;
  };
  const auto params = net->params();
  nn::zero_grad(params);
  net->forward(x, nn::Mode::kProbe);
  net->backward(g);
  for (const auto& r : params) {
    if (!r.param->trainable) continue;
    const auto numeric = testutil::numeric_gradient(r.param->value.data, loss);
    EXPECT_LT(testutil::max_rel_error(r.param->grad.data, numeric), 1e-5) << r.name;
  }
}

TEST(Checkpoint, FileRoundTripIsBitExact) {
  testutil::TempDir dir("ckpt");
  auto net = build_ssl_network(with_head(tiny(), Head::kProj3LayerPlusPred), Method::kSimsiam, 9);
  const Checkpoint ck = snapshot(net->params(), Method::kSimsiam, "BUS", net->spec(), {3, 0.125, 9});
  save_checkpoint(dir / "ck.bin", ck);
  const Checkpoint back = load_checkpoint(dir / "ck.bin");
  EXPECT_EQ(back.method, Method::kSimsiam);
  EXPECT_EQ(back.corpus_name, "BUS");
  EXPECT_EQ(back.spec, ck.spec);
  EXPECT_EQ(back.meta.epochs, 3);
  EXPECT_EQ(back.meta.final_loss, 0.125);
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].first, ck.tensors[i].first);
    EXPECT_EQ(checksum(back.tensors[i].second), checksum(ck.tensors[i].second));
    EXPECT_EQ(back.tensors[i].second.data, ck.tensors[i].second.data);
  }
  EXPECT_EQ(back.segments(), (std::vector<std::string>{"encoder", "decoder", "head"}));

  // Forward outputs through a restored network are bit-identical.
  std::mt19937_64 rng(4);
  const nn::Tensor x = testutil::random_tensor(rng, 2, 3, 16, 16);
  auto other = build_ssl_network(net->spec(), Method::kSimsiam, 77);
  restore(back, other->params());
  EXPECT_EQ(net->forward(x, nn::Mode::kEval).z.data, other->forward(x, nn::Mode::kEval).z.data);
}

TEST(Checkpoint, NanFinalLossSurvives) {
  testutil::TempDir dir("ckpt_nan");
  auto net = build_segmentation_network(tiny(), 1);
  save_checkpoint(dir / "a.bin", snapshot(net->params(), Method::kNone, "", net->spec()));
  EXPECT_TRUE(std::isnan(load_checkpoint(dir / "a.bin").meta.final_loss));
}

TEST(Checkpoint, CorruptFilesRejected) {
  testutil::TempDir dir("ckpt_bad");
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IngestionError);
  std::ofstream(dir / "junk.bin") << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.bin"), IngestionError);

  auto net = build_segmentation_network(tiny(), 1);
  save_checkpoint(dir / "ok.bin", snapshot(net->params(), Method::kNone, "", net->spec()));
  std::string bytes;
  {
    std::ifstream in(dir / "ok.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 3] ^= 0x5a;
  std::ofstream(dir / "flipped.bin", std::ios::binary) << bytes;
  EXPECT_THROW(load_checkpoint(dir / "flipped.bin"), IngestionError);
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 100);
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), IngestionError);
}

TEST(Transfer, EncoderOnlyLeavesDecoderFresh) {
  auto ssl = build_ssl_network(with_head(tiny(), Head::kProj2Layer), Method::kSimclr, 1);
  const Checkpoint ck = snapshot(ssl->params(), Method::kSimclr, "BUS", ssl->spec());
  auto target = build_segmentation_network(tiny(), 2);
  auto fresh = build_segmentation_network(tiny(), 2);
  const TransferReport rep = transfer_weights(ck, *target, TransferScope::kEncoderOnly);
  EXPECT_EQ(rep.copied.size(), select_segment(target->params(), "encoder").size());
  EXPECT_EQ(values(target->params(), "encoder"), values(ssl->params(), "encoder"));
  EXPECT_EQ(values(target->params(), "decoder"), values(fresh->params(), "decoder"));
  EXPECT_EQ(values(target->params(), "output"), values(fresh->params(), "output"));
}

TEST(Transfer, EncoderAndDecoderCopiesBoth) {
  auto ssl = build_ssl_network(with_head(tiny(), Head::kProj2Layer), Method::kMoco, 1);
  const Checkpoint ck = snapshot(ssl->params(), Method::kMoco, "BUS", ssl->spec());
  auto target = build_segmentation_network(tiny(), 2);
  transfer_weights(ck, *target, TransferScope::kEncoderAndDecoder);
  EXPECT_EQ(values(target->params(), "decoder"), values(ssl->params(), "decoder"));
}

TEST(Transfer, Errors) {
  auto res = build_ssl_network(with_head(tiny(Arch::kResnet18Unet), Head::kProj2Layer), Method::kSimclr, 1);
  const Checkpoint res_ck = snapshot(res->params(), Method::kSimclr, "BUS", res->spec());
  auto unet_target = build_segmentation_network(tiny(), 2);
  EXPECT_THROW(transfer_weights(res_ck, *unet_target, TransferScope::kEncoderOnly), TransferError);
  auto res_target = build_segmentation_network(tiny(Arch::kResnet18Unet), 2);
  EXPECT_THROW(transfer_weights(res_ck, *res_target, TransferScope::kEncoderAndDecoder), TransferError);
  EXPECT_NO_THROW(transfer_weights(res_ck, *res_target, TransferScope::kEncoderOnly));

  NetworkSpec wide = tiny();
  wide.base_width = 8;
  auto ssl = build_ssl_network(with_head(tiny(), Head::kProj2Layer), Method::kSimclr, 1);
  const Checkpoint ck = snapshot(ssl->params(), Method::kSimclr, "BUS", ssl->spec());
  auto wide_target = build_segmentation_network(wide, 2);
  EXPECT_THROW(transfer_weights(ck, *wide_target, TransferScope::kEncoderOnly), TransferError);

  EXPECT_EQ(parse_scope("encoder_only"), TransferScope::kEncoderOnly);
  EXPECT_THROW(parse_scope("all"), ConfigError);
}

TEST(Transfer, SupervisedCheckpointIsNoOp) {
  auto target = build_segmentation_network(tiny(), 2);
  const auto before = values(target->params(), "encoder");
  Checkpoint none;
  none.spec = tiny();
  EXPECT_TRUE(transfer_weights(none, *target, TransferScope::kEncoderOnly).copied.empty());
  EXPECT_EQ(values(target->params(), "encoder"), before);
}

TEST(Checkpoint, RestoreRejectsShapeMismatch) {
  auto a = build_segmentation_network(tiny(), 1);
  NetworkSpec wide = tiny();
  wide.base_width = 8;
  auto b = build_segmentation_network(wide, 1);
  EXPECT_THROW(restore(snapshot(a->params(), Method::kNone, "", a->spec()), b->params()), TransferError);
}
