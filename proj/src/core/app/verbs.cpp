#include "core/app/verbs.hpp"

#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/data/split_io.hpp"
#include "core/data/synthetic.hpp"
#include "core/report/report.hpp"

#include <boost/algorithm/string/classification.hpp>
#include <boost/algorithm/string/split.hpp>
#include <fmt/format.h>

#include <fstream>

namespace sslseg::app {
namespace {

struct NaturalSource {
  data::Source source;
  const char* root_key;
  data::SourceCounts counts;
};

std::filesystem::path out_dir(const Config& cfg) { return cfg.path("report.out_dir"); }

std::filesystem::path require_path(const Config& cfg, std::string_view key) {
  const auto p = cfg.path(key);
  if (p.empty()) throw ConfigError(fmt::format("{} must be set", key));
  return p;
}

std::vector<std::string> manifest_ids(const Config& cfg, std::string_view root_key) {
  const auto entries = data::read_manifest(require_path(cfg, root_key));
  return data::ids_of(entries);
}

data::SyntheticOptions synthetic_options(const Config& cfg) {
  data::SyntheticOptions opts;
  opts.count = cfg.integer("data.synthetic_count");
  opts.size = cfg.integer("data.image_size");
  return opts;
}

bool synthetic(const Config& cfg) { return cfg.integer("data.synthetic_count") > 0; }

std::vector<std::string> bus_ids(const Config& cfg) {
  if (synthetic(cfg)) return data::ids_of(data::generate_synthetic(synthetic_options(cfg), cfg.uinteger("data.split_seed")));
  return manifest_ids(cfg, "data.bus_root");
}

data::SplitSpec split_from_ids(const Config& cfg, const std::vector<std::string>& ids) {
  const auto split_file = cfg.path("data.split_file");
  if (!split_file.empty() && std::filesystem::exists(split_file)) return data::read_split(split_file);
  return data::make_bus_split(ids, cfg.uinteger("data.split_seed"), split_counts(cfg));
}

// Builds the configured pre-training corpus. With `index` set, the images of
// every non-BUS source are loaded into it as well.
data::PretrainCorpus build_corpus(const Config& cfg, const data::SplitSpec& split, pretrain::SampleIndex* index) {
  const std::string which = cfg.str("data.corpus");
  const int size = cfg.integer("data.image_size");
  const std::uint64_t seed = cfg.uinteger("data.split_seed");
  const auto load_into = [&](std::string_view root_key, data::Source source) {
    if (!index) return;
    for (auto& s : data::load_manifest(require_path(cfg, root_key), source)) {
      auto r = data::resize(s, size);
      r.id = data::qualify(source, s.id);
      (*index)[r.id] = std::move(r);
    }
  };
  const auto natural = [&](bool mixed, const NaturalSource& n) {
    const auto ids = manifest_ids(cfg, n.root_key);
    load_into(n.root_key, n.source);
    return mixed ? data::mix_with_natural(split, ids, n.source, n.counts, seed, size)
                 : data::natural_corpus(ids, n.source, n.counts, seed, size);
  };
  const NaturalSource cifar{data::Source::kCifar10, "data.cifar10_root", data::kCifar10Counts};
  const NaturalSource mini{data::Source::kMiniImagenet, "data.mini_imagenet_root", data::kMiniImagenetCounts};

  if (which == "bus") return data::bus_corpus(split, size);
  if (which == "multi_organ") {
    const auto camus = manifest_ids(cfg, "data.camus_root");
    const auto lus = manifest_ids(cfg, "data.lus_root");
    load_into("data.camus_root", data::Source::kCamus);
    load_into("data.lus_root", data::Source::kLus);
    return data::make_multiorgan_corpus(split, camus, lus, seed, data::kCamusCounts, data::kLusCounts, size);
  }
  if (which == "bus_cifar10") return natural(true, cifar);
  if (which == "bus_mini_imagenet") return natural(true, mini);
  if (which == "cifar10") return natural(false, cifar);
  if (which == "mini_imagenet") return natural(false, mini);
  throw ConfigError(fmt::format("data.corpus: unknown corpus '{}'", which));
}

std::string describe_split(const data::SplitSpec& split) {
  std::string out = fmt::format("split {}: train {} val {} test {}\nfractions:", split.name, split.train_ids.size(),
                                split.val_ids.size(), split.test_ids.size());
  for (double f : data::kLabelFractions) out += fmt::format(" {}={}", f, split.subset(f).size());
  return out + "\n";
}

std::string summarize_runs(const std::vector<finetune::RunResult>& runs) {
  std::string out;
  double sum = 0.0;
  for (const auto& r : runs) {
    out += finetune::format_result_line(r) + "\n";
    sum += r.test_dice;
  }
  out += fmt::format("mean test dice {:.4f} over {} run(s)\n", sum / static_cast<double>(runs.size()), runs.size());
  return out;
}

}  // namespace

models::NetworkSpec network_spec(const Config& cfg) {
  models::NetworkSpec spec;
  spec.arch = models::parse_arch(cfg.str("model.arch"));
  spec.input_size = cfg.integer("data.image_size");
  spec.base_width = cfg.integer("model.base_width");
  spec.depth = cfg.integer("model.depth");
  spec.resnet_width = cfg.integer("model.resnet_width");
  spec.embedding_dim = cfg.integer("model.embedding_dim");
  spec.head_hidden = cfg.integer("model.head_hidden");
  spec.pred_hidden = cfg.integer("model.pred_hidden");
  models::validate(spec);
  return spec;
}

data::SplitCounts split_counts(const Config& cfg) {
  return {cfg.integer("data.train_count"), cfg.integer("data.val_count"), cfg.integer("data.test_count")};
}

finetune::SampleIndex load_bus_samples(const Config& cfg) {
  const int size = cfg.integer("data.image_size");
  std::vector<data::ImageSample> samples =
      synthetic(cfg) ? data::generate_synthetic(synthetic_options(cfg), cfg.uinteger("data.split_seed"))
                     : data::load_manifest(require_path(cfg, "data.bus_root"), data::Source::kBus);
  finetune::SampleIndex index;
  for (auto& s : samples) {
    const std::string id = s.id;
    index.emplace(id, s.pixels.height == size && s.pixels.width == size ? std::move(s) : data::resize(s, size));
  }
  return index;
}

data::SplitSpec resolve_split(const Config& cfg, const finetune::SampleIndex& bus) {
  std::vector<std::string> ids;
  for (const auto& [id, s] : bus) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return split_from_ids(cfg, ids);
}

pretrain::SampleIndex qualify_index(const finetune::SampleIndex& bus, data::Source source) {
  pretrain::SampleIndex out;
  for (const auto& [id, s] : bus) {
    auto copy = s;
    copy.id = data::qualify(source, id);
    out.emplace(copy.id, std::move(copy));
  }
  return out;
}

pretrain::PretrainConfig pretrain_config(const Config& cfg) {
  pretrain::PretrainConfig pc;
  pc.method = models::parse_method(cfg.str("pretrain.method"));
  pc.network = network_spec(cfg);
  pc.batch_size = cfg.integer("pretrain.batch_size");
  pc.epochs = cfg.integer("pretrain.epochs");
  pc.lr = cfg.real("pretrain.lr");
  pc.weight_decay = cfg.real("pretrain.weight_decay");
  pc.tau = cfg.real("pretrain.tau");
  pc.momentum = cfg.real("pretrain.momentum");
  pc.queue_size = cfg.integer("pretrain.queue_size");
  pc.seed = cfg.uinteger("pretrain.seed");
  const auto dir = cfg.path("pretrain.run_dir");
  if (!dir.empty()) pc.run_dir = dir;
  return pc;
}

finetune::FinetuneConfig finetune_config(const Config& cfg) {
  finetune::FinetuneConfig fc;
  fc.network = network_spec(cfg);
  const auto ck = cfg.path("finetune.checkpoint");
  if (!ck.empty()) fc.init = std::make_shared<models::Checkpoint>(models::load_checkpoint(ck));
  const std::string scope = cfg.str("finetune.scope");
  if (scope == "auto") {
    fc.scope = fc.init && fc.init->has_segment("decoder") ? models::TransferScope::kEncoderAndDecoder
                                                          : models::TransferScope::kEncoderOnly;
  } else {
    fc.scope = models::parse_scope(scope);
  }
  fc.fraction = cfg.real("finetune.fraction");
  fc.lr = cfg.real("finetune.lr");
  fc.weight_decay = cfg.real("finetune.weight_decay");
  fc.epochs = cfg.integer("finetune.epochs");
  fc.batch_size = cfg.integer("finetune.batch_size");
  fc.patience = cfg.integer("finetune.patience");
  fc.seed = cfg.uinteger("finetune.seed");
  const auto log = cfg.path("finetune.results_log");
  if (!log.empty()) fc.results_log = log;
  return fc;
}

void save_segmentation(const std::filesystem::path& path, models::SegmentationNetwork& model,
                       const finetune::RunResult& result) {
  const auto ck = models::snapshot(model.params(), models::parse_method(result.method), result.corpus, model.spec(),
                                   models::TrainMeta{result.best_epoch, result.test_dice, result.seed});
  models::save_checkpoint(path, ck);
}

std::unique_ptr<models::SegmentationNetwork> load_segmentation(const std::filesystem::path& path) {
  const auto ck = models::load_checkpoint(path);
  if (!ck.has_segment("output")) {
    throw TransferError(fmt::format("{} holds no segmentation output layer; fine-tune it first", path.string()));
  }
  auto net = models::build_segmentation_network(models::with_head(ck.spec, models::Head::kNone), 0);
  models::restore(ck, net->params());
  return net;
}

// ---------------------------------------------------------------------------

std::string run_split(const Config& cfg) {
  const auto split = data::make_bus_split(bus_ids(cfg), cfg.uinteger("data.split_seed"), split_counts(cfg));
  auto split_file = cfg.path("data.split_file");
  if (split_file.empty()) split_file = out_dir(cfg) / "split.tsv";
  data::write_split(split_file, split);
  std::string out = describe_split(split);
  out += fmt::format("wrote {}\n", split_file.string());

  const auto corpus = build_corpus(cfg, split, nullptr);
  auto corpus_file = cfg.path("data.corpus_file");
  if (corpus_file.empty()) corpus_file = out_dir(cfg) / "corpus.tsv";
  data::write_corpus(corpus_file, corpus);
  out += fmt::format("corpus {}: train {} val {}\nwrote {}\n", corpus.name, corpus.train_ids.size(),
                     corpus.val_ids.size(), corpus_file.string());
  return out;
}

std::string run_pretrain(const Config& cfg) {
  const auto bus = load_bus_samples(cfg);
  const auto split = resolve_split(cfg, bus);
  pretrain::SampleIndex index = qualify_index(bus, data::Source::kBus);
  const auto corpus = build_corpus(cfg, split, &index);
  const auto result = pretrain::run_pretraining(pretrain_config(cfg), corpus, index);

  std::string out = fmt::format("{} on {} ({} train / {} val), {} epoch(s)\n", models::method_name(result.config.method),
                                corpus.name, corpus.train_ids.size(), corpus.val_ids.size(), result.trace.epochs.size());
  for (const auto& e : result.trace.epochs) {
    out += fmt::format("epoch {}\ttrain {:.6f}\tval {:.6f}\tcollapse {:.4f}\n", e.epoch, e.train_loss, e.val_loss,
                       e.collapse);
  }
  if (result.config.run_dir) out += fmt::format("checkpoint {}\n", (*result.config.run_dir / "checkpoint.bin").string());
  return out;
}

std::string run_finetune(const Config& cfg) {
  const auto bus = load_bus_samples(cfg);
  const auto split = resolve_split(cfg, bus);
  auto fc = finetune_config(cfg);
  const int repeats = cfg.integer("finetune.repeats");
  const auto model_out = cfg.path("finetune.model_out");
  std::vector<finetune::RunResult> runs;
  if (model_out.empty()) {
    runs = finetune::repeat_experiment(fc, repeats, fc.seed, split, bus);
  } else {
    if (repeats < 1) throw ConfigError("finetune.repeats must be >= 1");
    if (repeats > 1) runs = finetune::repeat_experiment(fc, repeats - 1, fc.seed, split, bus);
    fc.seed += static_cast<std::uint64_t>(repeats - 1);
    auto last = finetune::finetune(fc, split, bus);
    save_segmentation(model_out, *last.model, last.result);
    runs.push_back(last.result);
  }
  std::string out = summarize_runs(runs);
  if (fc.results_log) out += fmt::format("appended to {}\n", fc.results_log->string());
  return out;
}

std::string run_evaluate(const Config& cfg) {
  auto model_path = cfg.path("report.model");
  if (model_path.empty()) model_path = cfg.path("finetune.model_out");
  if (model_path.empty()) throw ConfigError("report.model (or finetune.model_out) must name fine-tuned weights");
  auto model = load_segmentation(model_path);
  if (model->spec().input_size != cfg.integer("data.image_size")) {
    throw ConfigError(fmt::format("model expects {}px images, data.image_size is {}", model->spec().input_size,
                                  cfg.integer("data.image_size")));
  }
  const auto bus = load_bus_samples(cfg);
  const auto split = resolve_split(cfg, bus);
  const double val = finetune::mean_dice(*model, split.val_ids, bus);
  const double test = finetune::mean_dice(*model, split.test_ids, bus);
  return fmt::format("val dice {:.6f} ({} images)\ntest dice {:.6f} ({} images)\n", val, split.val_ids.size(), test,
                     split.test_ids.size());
}

std::string run_report(const Config& cfg) {
  const auto results = finetune::read_results(require_path(cfg, "report.results_log"));
  if (results.empty()) throw ConfigError("results log is empty");
  const auto dir = out_dir(cfg);
  std::filesystem::create_directories(dir);
  std::string text, csv, mean_text, mean_csv;
  for (const auto& table : report::aggregate_all(results)) {
    text += report::format_text(table) + "\n";
    csv += report::format_csv(table);
    try {
      const auto means = report::dataset_mean_table(table);
      mean_text += report::format_text(means) + "\n";
      mean_csv += report::format_csv(means);
    } catch (const ValidationError& e) {
      mean_text += fmt::format("# {} {}: dataset means unavailable: {}\n\n", table.arch, table.image_size, e.what());
    }
  }
  std::ofstream(dir / "results.txt") << text;
  std::ofstream(dir / "results.csv") << csv;
  std::ofstream(dir / "means.txt") << mean_text;
  std::ofstream(dir / "means.csv") << mean_csv;
  return text + mean_text;
}

std::string run_export_masks(const Config& cfg) {
  auto model_path = cfg.path("report.model");
  if (model_path.empty()) model_path = cfg.path("finetune.model_out");
  if (model_path.empty()) throw ConfigError("report.model must name fine-tuned weights");
  auto model = load_segmentation(model_path);
  const auto bus = load_bus_samples(cfg);
  std::vector<std::string> ids;
  const std::string listed = cfg.str("report.panel_ids");
  if (!listed.empty()) {
    boost::split(ids, listed, boost::is_any_of(","));
    for (auto& id : ids) id.erase(0, id.find_first_not_of(' '));
  } else {
    const auto split = resolve_split(cfg, bus);
    ids.assign(split.test_ids.begin(), split.test_ids.begin() + std::min<std::size_t>(4, split.test_ids.size()));
  }
  std::vector<const data::ImageSample*> samples;
  for (const auto& id : ids) {
    const auto it = bus.find(id);
    if (it == bus.end()) throw IngestionError(fmt::format("export-masks: unknown sample id '{}'", id));
    samples.push_back(&it->second);
  }
  const auto result = report::export_mask_panels(*model, samples, cfg.path("report.panels_dir"));
  std::string out;
  for (const auto& p : result.panels) out += fmt::format("wrote {}\n", p.string());
  if (result.overview) out += fmt::format("wrote {}\n", result.overview->string());
  for (const auto& s : result.skipped) out += fmt::format("skipped {} (no mask)\n", s);
  return out;
}

}  // namespace sslseg::app
