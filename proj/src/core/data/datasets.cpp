#include "core/data/datasets.hpp"

#include "core/common/errors.hpp"
#include "core/common/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace sslseg::data {
namespace {

constexpr std::pair<Source, std::string_view> kSourceKeys[] = {
    {Source::kBus, "bus"},         {Source::kCamus, "camus"},
    {Source::kLus, "lus"},         {Source::kCifar10, "cifar10"},
    {Source::kMiniImagenet, "mini_imagenet"}, {Source::kSynthetic, "synthetic"},
};

std::vector<std::string> seeded_permutation(std::vector<std::string> ids, std::uint64_t seed,
                                            std::uint64_t stream) {
  std::sort(ids.begin(), ids.end());
  Rng rng = make_rng(seed, stream);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(ids[i - 1], ids[pick(rng)]);
  }
  return ids;
}

std::size_t fraction_size(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kSubsetStream = 2;

void append_source(PretrainCorpus& corpus, Source source, std::span<const std::string> ids,
                   SourceCounts counts, std::uint64_t seed, std::string_view what) {
  if (static_cast<int>(ids.size()) != counts.train + counts.val) {
    throw ConfigError(fmt::format("{} has {} samples but the corpus expects {} + {} = {}", what,
                                  ids.size(), counts.train, counts.val, counts.train + counts.val));
  }
  const auto perm = seeded_permutation({ids.begin(), ids.end()}, seed, fnv1a(what));
  for (int i = 0; i < counts.train + counts.val; ++i) {
    auto& dst = i < counts.train ? corpus.train_ids : corpus.val_ids;
    dst.push_back(qualify(source, perm[i]));
  }
}

}  // namespace

std::string_view source_key(Source s) {
  for (const auto& [src, key] : kSourceKeys) {
    if (src == s) return key;
  }
  return "?";
}

Source parse_source(std::string_view key) {
  for (const auto& [src, k] : kSourceKeys) {
    if (k == key) return src;
  }
  throw ConfigError(fmt::format("unknown source '{}'", key));
}

bool source_has_masks(Source s) { return s == Source::kBus || s == Source::kSynthetic; }

void validate_sample(const ImageSample& sample) {
  const Image& img = sample.pixels;
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels) {
    throw ValidationError(fmt::format("{}: pixel buffer does not match its shape", sample.id));
  }
  for (double v : img.pixels) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError(fmt::format("{}: pixel value {} outside [0,1]", sample.id, v));
    }
  }
  if (sample.mask) {
    if (sample.mask->height != img.height || sample.mask->width != img.width) {
      throw ValidationError(fmt::format("{}: mask {}x{} does not match image {}x{}", sample.id,
                                        sample.mask->height, sample.mask->width, img.height, img.width));
    }
    for (auto v : sample.mask->values) {
      if (v > 1) throw ValidationError(fmt::format("{}: mask is not binary", sample.id));
    }
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  const auto path = root / kManifestName;
  std::ifstream in(path);
  if (!in) throw IngestionError(fmt::format("cannot open manifest {}", path.string()));
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw IngestionError(fmt::format("{}:{}: expected 3 tab-separated fields, got {}", path.string(),
                                       lineno, fields.size()));
    }
    if (fields[0].empty()) throw IngestionError(fmt::format("{}:{}: empty id", path.string(), lineno));
    if (!seen.insert(fields[0]).second) {
      throw ValidationError(fmt::format("{}: duplicate id '{}'", path.string(), fields[0]));
    }
    ManifestEntry e{fields[0], fields[1], std::nullopt};
    if (fields[2] != "-") e.mask = fields[2];
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return entries;
}

std::vector<ImageSample> load_manifest(const std::filesystem::path& root, Source source) {
  const auto entries = read_manifest(root);
  std::vector<ImageSample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) {
    ImageSample s;
    s.id = e.id;
    s.source = source;
    const auto image_path = root / e.image;
    if (!std::filesystem::exists(image_path)) {
      throw IngestionError(fmt::format("sample '{}': missing image file {}", e.id, image_path.string()));
    }
    try {
      s.pixels = to_rgb(read_raster(image_path));
      if (e.mask && source_has_masks(source)) {
        const auto mask_path = root / *e.mask;
        if (!std::filesystem::exists(mask_path)) {
          throw IngestionError(fmt::format("missing mask file {}", mask_path.string()));
        }
        s.mask = read_mask(mask_path);
      }
    } catch (const IngestionError& err) {
      throw IngestionError(fmt::format("sample '{}': {}", e.id, err.what()));
    }
    validate_sample(s);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<std::string> ids_of(std::span<const ImageSample> samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

std::vector<std::string> ids_of(std::span<const ManifestEntry> entries) {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.id);
  return ids;
}

const std::vector<std::string>& SplitSpec::subset(double fraction) const {
  for (const auto& [f, ids] : fraction_subsets) {
    if (std::abs(f - fraction) < 1e-12) return ids;
  }
  throw ValidationError(fmt::format("split '{}' has no subset for fraction {}", name, fraction));
}

SplitSpec make_bus_split(std::span<const std::string> ids, std::uint64_t seed, const SplitCounts& counts,
                         std::string name) {
  if (counts.train < 0 || counts.val < 0 || counts.test < 0) throw ConfigError("split counts must be non-negative");
  if (static_cast<int>(ids.size()) != counts.total()) {
    throw ConfigError(fmt::format("split '{}' expects {} = {} + {} + {} samples, got {}", name, counts.total(),
                                  counts.train, counts.val, counts.test, ids.size()));
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ValidationError(fmt::format("split '{}': ids are not unique", name));
  }
  const auto perm = seeded_permutation({ids.begin(), ids.end()}, seed, kSplitStream);
  SplitSpec split;
  split.name = std::move(name);
  split.seed = seed;
  const auto a = perm.begin();
  split.train_ids.assign(a, a + counts.train);
  split.val_ids.assign(a + counts.train, a + counts.train + counts.val);
  split.test_ids.assign(a + counts.train + counts.val, perm.end());
  for (double f : kLabelFractions) split.fraction_subsets[f] = subset_labels(split, f, seed);
  return split;
}

SplitSpec make_bus_split(std::span<const ImageSample> samples, std::uint64_t seed, const SplitCounts& counts,
                         std::string name) {
  const auto ids = ids_of(samples);
  return make_bus_split(ids, seed, counts, std::move(name));
}

std::vector<std::string> subset_labels(const SplitSpec& split, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError(fmt::format("label fraction must lie in (0, 1], got {}", fraction));
  }
  if (fraction == 1.0) return split.train_ids;
  auto perm = seeded_permutation(split.train_ids, seed, kSubsetStream);
  perm.resize(fraction_size(fraction, perm.size()));
  return perm;
}

std::string qualify(Source source, std::string_view id) { return fmt::format("{}:{}", source_key(source), id); }

std::pair<Source, std::string> unqualify(std::string_view qualified) {
  const auto colon = qualified.find(':');
  if (colon == std::string_view::npos) throw ValidationError(fmt::format("'{}' is not a qualified id", qualified));
  return {parse_source(qualified.substr(0, colon)), std::string(qualified.substr(colon + 1))};
}

PretrainCorpus bus_corpus(const SplitSpec& bus_split, int image_size) {
  PretrainCorpus corpus{"BUS", {}, {}, image_size};
  for (const auto& id : bus_split.train_ids) corpus.train_ids.push_back(qualify(Source::kBus, id));
  for (const auto& id : bus_split.val_ids) corpus.val_ids.push_back(qualify(Source::kBus, id));
  return corpus;
}

PretrainCorpus make_multiorgan_corpus(const SplitSpec& bus_split, std::span<const std::string> camus_ids,
                                      std::span<const std::string> lus_ids, std::uint64_t seed,
                                      SourceCounts camus, SourceCounts lus, int image_size) {
  PretrainCorpus corpus = bus_corpus(bus_split, image_size);
  corpus.name = "Multi-organ";
  append_source(corpus, Source::kCamus, camus_ids, camus, seed, "camus");
  append_source(corpus, Source::kLus, lus_ids, lus, seed, "lus");
  return corpus;
}

PretrainCorpus mix_with_natural(const SplitSpec& bus_split, std::span<const std::string> natural_ids,
                                Source natural_source, SourceCounts natural_split, std::uint64_t seed,
                                int image_size) {
  PretrainCorpus corpus = bus_corpus(bus_split, image_size);
  const bool cifar = natural_source == Source::kCifar10;
  corpus.name = cifar ? "BUS+CIFAR-10" : natural_source == Source::kMiniImagenet ? "BUS+mini-ImageNet"
                                                                                : "BUS+natural";
  append_source(corpus, natural_source, natural_ids, natural_split, seed, source_key(natural_source));
  return corpus;
}

PretrainCorpus natural_corpus(std::span<const std::string> natural_ids, Source natural_source,
                              SourceCounts natural_split, std::uint64_t seed, int image_size) {
  PretrainCorpus corpus{natural_source == Source::kCifar10        ? "CIFAR-10"
                        : natural_source == Source::kMiniImagenet ? "mini-ImageNet"
                                                                  : std::string(source_key(natural_source)),
                        {}, {}, image_size};
  append_source(corpus, natural_source, natural_ids, natural_split, seed, source_key(natural_source));
  return corpus;
}

void validate_corpus(const PretrainCorpus& corpus, const std::vector<std::string>& known) {
  const std::set<std::string> known_set(known.begin(), known.end());
  const std::set<std::string> train(corpus.train_ids.begin(), corpus.train_ids.end());
  for (const auto& id : corpus.val_ids) {
    if (train.count(id)) throw ConfigError(fmt::format("corpus '{}': id '{}' is in train and val", corpus.name, id));
  }
  for (const auto* list : {&corpus.train_ids, &corpus.val_ids}) {
    for (const auto& id : *list) {
      if (!known_set.count(id)) throw ConfigError(fmt::format("corpus '{}': id '{}' has no manifest entry", corpus.name, id));
    }
  }
}

ImageSample resize(const ImageSample& sample, int size) {
  if (size <= 0) throw ValidationError(fmt::format("resize size must be positive, got {}", size));
  ImageSample out;
  out.id = sample.id;
  out.source = sample.source;
  out.pixels = resize_bilinear(sample.pixels, size, size);
  if (sample.mask) out.mask = resize_nearest(*sample.mask, size, size);
  return out;
}

}  // namespace sslseg::data
