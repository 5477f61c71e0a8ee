#include "core/models/checkpoint.hpp"

#include "core/common/errors.hpp"
#include "core/common/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

namespace sslseg::models {
namespace {

constexpr char kMagic[8] = {'S', 'S', 'L', 'S', 'E', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::string_view head_name(Head h) {
  switch (h) {
    case Head::kNone: return "none";
    case Head::kProj2Layer: return "proj_2layer";
    case Head::kProj3LayerPlusPred: return "proj_3layer_plus_pred";
  }
  return "?";
}

Head parse_head(std::string_view s) {
  if (s == "none") return Head::kNone;
  if (s == "proj_2layer") return Head::kProj2Layer;
  if (s == "proj_3layer_plus_pred") return Head::kProj3LayerPlusPred;
  throw IngestionError(fmt::format("checkpoint: unknown head '{}'", s));
}

nlohmann::json spec_to_json(const NetworkSpec& s) {
  return {{"arch", arch_name(s.arch)},         {"input_size", s.input_size},   {"head", head_name(s.head)},
          {"embedding_dim", s.embedding_dim},  {"in_channels", s.in_channels}, {"base_width", s.base_width},
          {"depth", s.depth},                  {"resnet_width", s.resnet_width}, {"head_hidden", s.head_hidden},
          {"pred_hidden", s.pred_hidden}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.arch = parse_arch(j.at("arch").get<std::string>());
  s.input_size = j.at("input_size");
  s.head = parse_head(j.at("head").get<std::string>());
  s.embedding_dim = j.at("embedding_dim");
  s.in_channels = j.at("in_channels");
  s.base_width = j.at("base_width");
  s.depth = j.at("depth");
  s.resnet_width = j.at("resnet_width");
  s.head_hidden = j.at("head_hidden");
  s.pred_hidden = j.at("pred_hidden");
  return s;
}

std::uint64_t checksum_bytes(const double* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(data), n * sizeof(double)), h);
}

}  // namespace

bool Checkpoint::has_segment(std::string_view segment) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return segment_of(t.first) == segment; });
}

std::vector<std::string> Checkpoint::segments() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tensors) {
    std::string seg(segment_of(name));
    if (std::find(out.begin(), out.end(), seg) == out.end()) out.push_back(seg);
  }
  return out;
}

const nn::Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint snapshot(const nn::ParamList& params, Method method, std::string corpus_name, const NetworkSpec& spec,
                    TrainMeta meta) {
  Checkpoint ck;
  ck.method = method;
  ck.corpus_name = std::move(corpus_name);
  ck.spec = spec;
  ck.meta = meta;
  ck.tensors.reserve(params.size());
  for (const auto& ref : params) ck.tensors.emplace_back(ref.name, ref.param->value);
  return ck;
}

void restore(const Checkpoint& checkpoint, const nn::ParamList& params) {
  if (checkpoint.tensors.size() != params.size()) {
    throw TransferError(fmt::format("checkpoint has {} tensors, network has {}", checkpoint.tensors.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = checkpoint.tensors[i];
    if (name != params[i].name || !t.same_shape(params[i].param->value)) {
      throw TransferError(fmt::format("checkpoint tensor {} {} does not match network parameter {} {}", name,
                                      nn::shape_string(t.shape), params[i].name,
                                      nn::shape_string(params[i].param->value.shape)));
    }
    params[i].param->value.data = t.data;
  }
}

std::uint64_t checksum(const nn::Tensor& t) { return checksum_bytes(t.data.data(), t.data.size()); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["method"] = method_name(ck.method);
  header["corpus_name"] = ck.corpus_name;
  header["spec"] = spec_to_json(ck.spec);
  header["meta"] = {{"epochs", ck.meta.epochs}, {"seed", ck.meta.seed}};
  // JSON has no NaN; store the loss bit pattern so the round trip is exact.
  std::uint64_t loss_bits;
  std::memcpy(&loss_bits, &ck.meta.final_loss, sizeof loss_bits);
  header["meta"]["final_loss_bits"] = loss_bits;
  std::uint64_t offset = 0;
  std::uint64_t payload_hash = 0xcbf29ce484222325ULL;
  auto& manifest = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors) {
    manifest.push_back({{"name", name},
                        {"segment", std::string(segment_of(name))},
                        {"shape", t.shape},
                        {"offset", offset},
                        {"count", t.size()},
                        {"checksum", checksum(t)}});
    offset += t.size();
    payload_hash = checksum_bytes(t.data.data(), t.data.size(), payload_hash);
  }
  header["payload_checksum"] = payload_hash;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write checkpoint {}", path.string()));
  const std::uint64_t header_len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ck.tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError(fmt::format("short write on checkpoint {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(fmt::format("cannot open checkpoint {}", path.string()));
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IngestionError(fmt::format("{} is not a checkpoint", path.string()));
  }
  if (version != kVersion) throw IngestionError(fmt::format("{}: unsupported version {}", path.string(), version));
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(fmt::format("{}: corrupt header: {}", path.string(), e.what()));
  }

  Checkpoint ck;
  ck.method = parse_method(header.at("method").get<std::string>());
  ck.corpus_name = header.at("corpus_name");
  ck.spec = spec_from_json(header.at("spec"));
  ck.meta.epochs = header.at("meta").at("epochs");
  ck.meta.seed = header.at("meta").at("seed");
  const std::uint64_t loss_bits = header.at("meta").at("final_loss_bits");
  std::memcpy(&ck.meta.final_loss, &loss_bits, sizeof loss_bits);
  std::uint64_t payload_hash = 0xcbf29ce484222325ULL;
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::array<int, 4>>();
    nn::Tensor t(shape[0], shape[1], shape[2], shape[3]);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IngestionError(fmt::format("{}: truncated payload", path.string()));
    const std::string name = entry.at("name");
    if (checksum(t) != entry.at("checksum").get<std::uint64_t>()) {
      throw IngestionError(fmt::format("{}: checksum mismatch on {}", path.string(), name));
    }
    payload_hash = checksum_bytes(t.data.data(), t.data.size(), payload_hash);
    ck.tensors.emplace_back(name, std::move(t));
  }
  if (payload_hash != header.at("payload_checksum").get<std::uint64_t>()) {
    throw IngestionError(fmt::format("{}: payload checksum mismatch", path.string()));
  }
  return ck;
}

std::string_view scope_name(TransferScope s) {
  return s == TransferScope::kEncoderOnly ? "encoder_only" : "encoder_and_decoder";
}

TransferScope parse_scope(std::string_view s) {
  if (s == "encoder_only") return TransferScope::kEncoderOnly;
  if (s == "encoder_and_decoder") return TransferScope::kEncoderAndDecoder;
  throw ConfigError(fmt::format("unknown transfer scope '{}'", s));
}

TransferReport transfer_weights(const Checkpoint& ck, SegmentationNetwork& target, TransferScope scope) {
  TransferReport report;
  if (ck.method == Method::kNone) return report;
  if (ck.spec.arch != target.spec().arch) {
    throw TransferError(fmt::format("checkpoint architecture {} does not match target {}", arch_name(ck.spec.arch),
                                    arch_name(target.spec().arch)));
  }
  std::vector<std::string> segments = {"encoder"};
  if (scope == TransferScope::kEncoderAndDecoder) {
    if (!ck.has_segment("decoder")) {
      throw TransferError("encoder_and_decoder transfer needs a checkpoint with a decoder segment");
    }
    segments.push_back("decoder");
  }
  const auto params = target.params();
  std::vector<std::string> bad;
  for (const auto& seg : segments) {
    for (const auto& ref : select_segment(params, seg)) {
      const nn::Tensor* src = ck.find(ref.name);
      if (!src) bad.push_back(ref.name + " (missing)");
      else if (!src->same_shape(ref.param->value)) {
        bad.push_back(fmt::format("{} ({} vs {})", ref.name, nn::shape_string(src->shape),
                                  nn::shape_string(ref.param->value.shape)));
      }
    }
  }
  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    throw TransferError(fmt::format("cannot transfer segments: {}", list));
  }
  for (const auto& seg : segments) {
    for (const auto& ref : select_segment(params, seg)) {
      ref.param->value.data = ck.find(ref.name)->data;
      report.copied.push_back(ref.name);
    }
  }
  return report;
}

}  // namespace sslseg::models
