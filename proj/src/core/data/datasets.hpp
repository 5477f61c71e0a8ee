#pragma once

#include "core/data/image.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sslseg::data {

enum class Source { kBus, kCamus, kLus, kCifar10, kMiniImagenet, kSynthetic };

std::string_view source_key(Source s);  // "bus", "camus", ...
Source parse_source(std::string_view key);
bool source_has_masks(Source s);

struct ImageSample {
  std::string id;
  Source source = Source::kBus;
  Image pixels;
  std::optional<Mask> mask;
};

// Throws ValidationError when pixels are out of range or non-finite, mask
// values are not binary, or the mask shape differs from the image.
void validate_sample(const ImageSample& sample);

// Manifest line: id<TAB>image_relpath<TAB>mask_relpath|-
struct ManifestEntry {
  std::string id;
  std::string image;
  std::optional<std::string> mask;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// Parses <root>/manifest.tsv without touching image files. Blank lines and
// lines starting with '#' are skipped. Result is sorted by id.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);

// Decodes every listed image (grayscale replicated to RGB) and mask.
std::vector<ImageSample> load_manifest(const std::filesystem::path& root, Source source);

std::vector<std::string> ids_of(std::span<const ImageSample> samples);
std::vector<std::string> ids_of(std::span<const ManifestEntry> entries);

inline constexpr double kLabelFractions[] = {1.0, 0.5, 0.25, 0.1};

struct SplitCounts {
  int train = 546;
  int val = 78;
  int test = 156;
  int total() const { return train + val + test; }
};

struct SplitSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids, val_ids, test_ids;
  // Nested label-fraction subsets of train_ids, keyed by fraction.
  std::map<double, std::vector<std::string>> fraction_subsets;

  const std::vector<std::string>& subset(double fraction) const;
};

// Seeded permutation of the (sorted) ids cut into train/val/test.
SplitSpec make_bus_split(std::span<const std::string> ids, std::uint64_t seed,
                         const SplitCounts& counts = {}, std::string name = "BUS");
SplitSpec make_bus_split(std::span<const ImageSample> samples, std::uint64_t seed,
                         const SplitCounts& counts = {}, std::string name = "BUS");

// floor(fraction * |train|) ids; prefixes of one seeded permutation, so the
// subsets for one seed are nested.
std::vector<std::string> subset_labels(const SplitSpec& split, double fraction, std::uint64_t seed);

struct SourceCounts {
  int train = 0;
  int val = 0;
};

inline constexpr SourceCounts kCamusCounts{1800, 200};
inline constexpr SourceCounts kLusCounts{207, 21};
inline constexpr SourceCounts kCifar10Counts{50000, 10000};
inline constexpr SourceCounts kMiniImagenetCounts{48000, 12000};

// Corpus ids are source-qualified ("camus:patient0001_2CH") so sources can
// never collide.
struct PretrainCorpus {
  std::string name;
  std::vector<std::string> train_ids, val_ids;
  int image_size = 32;
};

std::string qualify(Source source, std::string_view id);
std::pair<Source, std::string> unqualify(std::string_view qualified);

PretrainCorpus bus_corpus(const SplitSpec& bus_split, int image_size = 32);

PretrainCorpus make_multiorgan_corpus(const SplitSpec& bus_split, std::span<const std::string> camus_ids,
                                      std::span<const std::string> lus_ids, std::uint64_t seed,
                                      SourceCounts camus = kCamusCounts, SourceCounts lus = kLusCounts,
                                      int image_size = 32);

PretrainCorpus mix_with_natural(const SplitSpec& bus_split, std::span<const std::string> natural_ids,
                                Source natural_source, SourceCounts natural_split, std::uint64_t seed,
                                int image_size = 32);

// Natural images only, no BUS.
PretrainCorpus natural_corpus(std::span<const std::string> natural_ids, Source natural_source,
                              SourceCounts natural_split, std::uint64_t seed, int image_size = 32);

// Throws ConfigError if train and val overlap or any id is not in `known`.
void validate_corpus(const PretrainCorpus& corpus, const std::vector<std::string>& known);

// Bilinear pixels, nearest-neighbour mask.
ImageSample resize(const ImageSample& sample, int size);

}  // namespace sslseg::data
