#pragma once

#include "core/models/models.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace sslseg::models {

struct TrainMeta {
  int epochs = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

// Named parameter blob. Segments are the first component of each name
// (encoder / decoder / head / output) and partition the blob.
struct Checkpoint {
  Method method = Method::kNone;
  std::string corpus_name;
  NetworkSpec spec;
  TrainMeta meta;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  bool has_segment(std::string_view segment) const;
  std::vector<std::string> segments() const;
  const nn::Tensor* find(std::string_view name) const;
};

Checkpoint snapshot(const nn::ParamList& params, Method method, std::string corpus_name, const NetworkSpec& spec,
                    TrainMeta meta = {});
// Names and shapes must match exactly.
void restore(const Checkpoint& checkpoint, const nn::ParamList& params);

// FNV-1a over the raw bytes of the values.
std::uint64_t checksum(const nn::Tensor& t);

// Layout: "SSLSEGCK", u32 version, u64 header length, JSON header (spec,
// meta, tensor manifest with shapes/offsets/checksums, payload checksum),
// raw little-endian float64 payload.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

enum class TransferScope { kEncoderOnly, kEncoderAndDecoder };
std::string_view scope_name(TransferScope s);
TransferScope parse_scope(std::string_view s);

struct TransferReport {
  std::vector<std::string> copied;
};

// Copies the encoder (and decoder) segment verbatim into `target`; every
// other target parameter keeps its fresh initialisation. SSL heads are
// dropped. A checkpoint with method kNone leaves the target untouched.
TransferReport transfer_weights(const Checkpoint& checkpoint, SegmentationNetwork& target, TransferScope scope);

}  // namespace sslseg::models
