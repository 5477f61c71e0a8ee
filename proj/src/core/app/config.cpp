#include "core/app/config.hpp"

#include "core/common/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <cmath>

namespace sslseg::app {
namespace {

using VT = ValueType;

const std::vector<KeySpec> kSchema = {
    {"data.bus_root", VT::kPath, "", "directory holding the BUS manifest.tsv"},
    {"data.camus_root", VT::kPath, "", "CAMUS manifest directory (multi-organ corpus)"},
    {"data.lus_root", VT::kPath, "", "LUS manifest directory (multi-organ corpus)"},
    {"data.cifar10_root", VT::kPath, "", "CIFAR-10 manifest directory"},
    {"data.mini_imagenet_root", VT::kPath, "", "mini-ImageNet manifest directory"},
    {"data.synthetic_count", VT::kInt, "0", "> 0 replaces BUS with generated ellipse images"},
    {"data.split_seed", VT::kUInt, "0", "seed of the train/val/test permutation"},
    {"data.train_count", VT::kInt, "546", "BUS train partition size"},
    {"data.val_count", VT::kInt, "78", "BUS val partition size"},
    {"data.test_count", VT::kInt, "156", "BUS test partition size"},
    {"data.split_file", VT::kPath, "", "split written by `split`, read by later verbs when present"},
    {"data.corpus", VT::kString, "bus",
     "bus | multi_organ | bus_cifar10 | bus_mini_imagenet | cifar10 | mini_imagenet"},
    {"data.corpus_file", VT::kPath, "", "corpus listing written by `split`"},
    {"data.image_size", VT::kInt, "32", "working resolution (32, 50 or 64)"},

    {"model.arch", VT::kString, "unet", "unet | resnet18_unet | resnet50_unet"},
    {"model.base_width", VT::kInt, "64", "first U-Net stage / decoder width"},
    {"model.depth", VT::kInt, "4", "U-Net down-sampling stages"},
    {"model.resnet_width", VT::kInt, "64", "residual encoder stem width"},
    {"model.embedding_dim", VT::kInt, "128", "projection output dimension"},
    {"model.head_hidden", VT::kInt, "0", "projection hidden width, 0 = automatic"},
    {"model.pred_hidden", VT::kInt, "32", "SimSiam predictor bottleneck"},

    {"pretrain.method", VT::kString, "simclr", "simclr | moco | simsiam"},
    {"pretrain.batch_size", VT::kInt, "0", "0 = per-method default"},
    {"pretrain.epochs", VT::kInt, "200", ""},
    {"pretrain.lr", VT::kDouble, "0.001", ""},
    {"pretrain.weight_decay", VT::kDouble, "1e-06", ""},
    {"pretrain.tau", VT::kDouble, "0", "0 = 0.07 for MoCo, 0.5 for SimCLR"},
    {"pretrain.momentum", VT::kDouble, "0.999", "MoCo key encoder momentum"},
    {"pretrain.queue_size", VT::kInt, "0", "MoCo queue length, 0 = automatic"},
    {"pretrain.seed", VT::kUInt, "0", ""},
    {"pretrain.run_dir", VT::kPath, "runs/pretrain", "metrics, config echo and checkpoint.bin"},

    {"finetune.checkpoint", VT::kPath, "", "pre-trained checkpoint; empty = supervised baseline"},
    {"finetune.scope", VT::kString, "auto", "auto | encoder_only | encoder_and_decoder"},
    {"finetune.fraction", VT::kDouble, "1", "label fraction: 1, 0.5, 0.25 or 0.1"},
    {"finetune.lr", VT::kDouble, "0.0001", ""},
    {"finetune.weight_decay", VT::kDouble, "1e-06", ""},
    {"finetune.epochs", VT::kInt, "100", ""},
    {"finetune.batch_size", VT::kInt, "32", ""},
    {"finetune.patience", VT::kInt, "20", "early stop on val Dice, 0 disables"},
    {"finetune.seed", VT::kUInt, "0", "first seed; repeats use seed .. seed + repeats - 1"},
    {"finetune.repeats", VT::kInt, "10", ""},
    {"finetune.results_log", VT::kPath, "runs/results.tsv", "appended result lines"},
    {"finetune.model_out", VT::kPath, "", "fine-tuned weights of the last repeat"},

    {"report.results_log", VT::kPath, "runs/results.tsv", ""},
    {"report.out_dir", VT::kPath, "runs/report", "table files and smoke artifacts"},
    {"report.model", VT::kPath, "", "fine-tuned weights for evaluate / export-masks"},
    {"report.panel_ids", VT::kString, "", "comma-separated ids; empty = first 4 test ids"},
    {"report.panels_dir", VT::kPath, "runs/panels", ""},
};

void check_value(const KeySpec& spec, std::string_view value) {
  const auto fail = [&](std::string_view what) {
    throw ConfigError(fmt::format("{}: '{}' is not {}", spec.name, value, what));
  };
  const char* b = value.data();
  const char* e = value.data() + value.size();
  switch (spec.type) {
    case VT::kInt: {
      int v;
      const auto r = std::from_chars(b, e, v);
      if (r.ec != std::errc() || r.ptr != e) fail("an integer");
      break;
    }
    case VT::kUInt: {
      std::uint64_t v;
      const auto r = std::from_chars(b, e, v);
      if (r.ec != std::errc() || r.ptr != e) fail("an unsigned integer");
      break;
    }
    case VT::kDouble: {
      try {
        std::size_t used = 0;
        const double v = std::stod(std::string(value), &used);
        if (used != value.size() || !std::isfinite(v)) fail("a finite number");
      } catch (const std::logic_error&) {
        fail("a number");
      }
      break;
    }
    case VT::kString:
    case VT::kPath:
      break;
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<KeySpec>& schema() { return kSchema; }

const KeySpec* find_key(std::string_view name) {
  for (const auto& k : kSchema) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

Config::Config() {
  for (const auto& k : kSchema) values_[k.name] = k.default_value;
}

Config Config::smoke_preset() {
  Config c;
  c.set("data.synthetic_count", "200");
  c.set("data.train_count", "140");
  c.set("data.val_count", "20");
  c.set("data.test_count", "40");
  c.set("data.image_size", "32");
  c.set("model.arch", "unet");
  c.set("model.base_width", "16");
  c.set("model.depth", "2");
  c.set("pretrain.epochs", "20");
  c.set("pretrain.batch_size", "64");
  c.set("finetune.fraction", "0.25");
  c.set("finetune.epochs", "30");
  c.set("finetune.batch_size", "4");
  c.set("finetune.patience", "0");
  c.set("finetune.repeats", "1");
  c.set("report.out_dir", "smoke_out");
  return c;
}

void Config::merge_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("cannot parse config {}: {}", path.string(), e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("{}: key '{}' outside any section", path.string(), section));
    }
    for (const auto& [key, leaf] : body) {
      try {
        set(section + "." + key, trim(leaf.data()));
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
      }
    }
  }
}

void Config::set(std::string_view name, std::string_view value) {
  const KeySpec* spec = find_key(name);
  if (!spec) throw ConfigError(fmt::format("unknown config key '{}'", name));
  check_value(*spec, value);
  values_[spec->name] = std::string(value);
}

bool Config::is_set(std::string_view name) const {
  const KeySpec* spec = find_key(name);
  return spec && raw(name) != spec->default_value;
}

const std::string& Config::raw(std::string_view name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown config key '{}'", name));
  return it->second;
}

int Config::integer(std::string_view name) const { return std::stoi(raw(name)); }
std::uint64_t Config::uinteger(std::string_view name) const { return std::stoull(raw(name)); }
double Config::real(std::string_view name) const { return std::stod(raw(name)); }

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& k : kSchema) out.push_back(k.name);
  return out;
}

std::string Config::dump() const {
  std::string out;
  std::string section;
  for (const auto& k : kSchema) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += fmt::format("{}[{}]\n", section.empty() ? "" : "\n", sec);
      section = sec;
    }
    out += fmt::format("{} = {}\n", k.name.substr(dot + 1), values_.at(k.name));
  }
  return out;
}

}  // namespace sslseg::app
