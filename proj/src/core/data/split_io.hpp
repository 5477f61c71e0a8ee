#pragma once

#include "core/data/datasets.hpp"

#include <filesystem>

namespace sslseg::data {

// Flat text audit document: "key<TAB>value" lines followed by
// "list<TAB>label<TAB>count" headers, each followed by `count` id lines.
void write_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec read_split(const std::filesystem::path& path);

void write_corpus(const std::filesystem::path& path, const PretrainCorpus& corpus);
PretrainCorpus read_corpus(const std::filesystem::path& path);

}  // namespace sslseg::data
