#include "core/data/split_io.hpp"

#include "core/common/errors.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <sstream>

namespace sslseg::data {
namespace {

using Lists = std::map<std::string, std::vector<std::string>>;

void write_list(std::ostream& out, const std::string& label, const std::vector<std::string>& ids) {
  out << "list\t" << label << '\t' << ids.size() << '\n';
  for (const auto& id : ids) out << id << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  return out;
}

void parse(const std::filesystem::path& path, std::map<std::string, std::string>& keys, Lists& lists) {
  std::ifstream in(path);
  if (!in) throw IngestionError(fmt::format("cannot open {}", path.string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string key, value, count;
    std::getline(ss, key, '\t');
    std::getline(ss, value, '\t');
    if (key != "list") {
      keys[key] = value;
      continue;
    }
    std::getline(ss, count, '\t');
    const int n = std::stoi(count);
    auto& ids = lists[value];
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw IngestionError(fmt::format("{}: list '{}' is truncated", path.string(), value));
      ids.push_back(line);
    }
  }
}

}  // namespace

void write_split(const std::filesystem::path& path, const SplitSpec& split) {
  auto out = open_out(path);
  out << "# split audit\n";
  out << "name\t" << split.name << '\n';
  out << "seed\t" << split.seed << '\n';
  write_list(out, "train", split.train_ids);
  write_list(out, "val", split.val_ids);
  write_list(out, "test", split.test_ids);
  for (const auto& [f, ids] : split.fraction_subsets) write_list(out, fmt::format("fraction:{}", f), ids);
}

SplitSpec read_split(const std::filesystem::path& path) {
  std::map<std::string, std::string> keys;
  Lists lists;
  parse(path, keys, lists);
  SplitSpec split;
  split.name = keys["name"];
  split.seed = std::stoull(keys.count("seed") ? keys["seed"] : "0");
  split.train_ids = lists["train"];
  split.val_ids = lists["val"];
  split.test_ids = lists["test"];
  for (const auto& [label, ids] : lists) {
    if (label.rfind("fraction:", 0) == 0) split.fraction_subsets[std::stod(label.substr(9))] = ids;
  }
  return split;
}

void write_corpus(const std::filesystem::path& path, const PretrainCorpus& corpus) {
  auto out = open_out(path);
  out << "# corpus audit\n";
  out << "name\t" << corpus.name << '\n';
  out << "image_size\t" << corpus.image_size << '\n';
  write_list(out, "train", corpus.train_ids);
  write_list(out, "val", corpus.val_ids);
}

PretrainCorpus read_corpus(const std::filesystem::path& path) {
  std::map<std::string, std::string> keys;
  Lists lists;
  parse(path, keys, lists);
  PretrainCorpus corpus;
  corpus.name = keys["name"];
  corpus.image_size = std::stoi(keys.count("image_size") ? keys["image_size"] : "32");
  corpus.train_ids = lists["train"];
  corpus.val_ids = lists["val"];
  return corpus;
}

}  // namespace sslseg::data
