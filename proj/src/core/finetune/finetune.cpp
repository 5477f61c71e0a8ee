#include "core/finetune/finetune.hpp"

#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/common/rng.hpp"
#include "core/data/batch.hpp"
#include "core/nn/optim.hpp"

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/classification.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace sslseg::finetune {
namespace {

using nn::Tensor;

constexpr std::uint64_t kShuffleStream = 0x4654'5348;  // "FTSH"

// Mean binary cross-entropy over all pixels, from logits.
double bce_with_logits(const Tensor& logits, const Tensor& target, Tensor& grad) {
  grad = nn::zeros_like(logits);
  const double scale = 1.0 / static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits.data[i];
    const double y = target.data[i];
    sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    grad.data[i] = (1.0 / (1.0 + std::exp(-x)) - y) * scale;
  }
  return sum * scale;
}

const data::ImageSample& lookup(const SampleIndex& samples, const std::string& id) {
  const auto it = samples.find(id);
  if (it == samples.end()) throw IngestionError(fmt::format("no sample loaded for id {}", id));
  if (!it->second.mask) throw IngestionError(fmt::format("sample {} has no ground-truth mask", id));
  return it->second;
}

bool same_values(const nn::ParamList& a, const nn::ParamList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].param->value.data != b[i].param->value.data) return false;
  }
  return true;
}

void audit_leakage(const data::SplitSpec& split, const std::vector<std::string>& train) {
  const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
  for (const auto* ids : {&train, &split.val_ids}) {
    for (const auto& id : *ids) {
      if (test.count(id)) throw ValidationError(fmt::format("test id {} leaks into training or validation", id));
    }
  }
}

std::string fingerprint(const FinetuneConfig& c, const models::NetworkSpec& spec, const std::string& method,
                        const std::string& corpus) {
  const std::string text =
      fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}", method, corpus, models::arch_name(spec.arch),
                  spec.input_size, spec.base_width, spec.depth, models::scope_name(c.scope), c.fraction, c.lr,
                  c.weight_decay, c.epochs, c.batch_size, c.patience);
  return fmt::format("{:016x}", fnv1a(text));
}

}  // namespace

double dice(const data::Mask& pred, const data::Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ValidationError(
        fmt::format("dice: mask shapes differ ({}x{} vs {}x{})", pred.height, pred.width, gt.height, gt.width));
  }
  long p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool a = pred.values[i] != 0;
    const bool b = gt.values[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

models::NetworkSpec effective_spec(const FinetuneConfig& config) {
  models::NetworkSpec spec = config.init ? config.init->spec : config.network;
  spec.head = models::Head::kNone;
  if (config.init && config.network.input_size != spec.input_size) {
    throw ConfigError(fmt::format("fine-tuning size {} differs from the checkpoint's pre-training size {}",
                                  config.network.input_size, spec.input_size));
  }
  models::validate(spec);
  return spec;
}

std::vector<data::Mask> predict(models::SegmentationNetwork& model, const std::vector<const data::Image*>& images,
                                int batch_size) {
  std::vector<data::Mask> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); i += batch_size) {
    const std::size_t end = std::min(images.size(), i + static_cast<std::size_t>(batch_size));
    const std::vector<const data::Image*> chunk(images.begin() + i, images.begin() + end);
    const Tensor logits = model.forward(data::to_tensor(chunk), nn::Mode::kEval);
    for (int b = 0; b < logits.n(); ++b) {
      data::Mask m(logits.h(), logits.w());
      // sigmoid(x) > 0.5  <=>  x > 0
      for (int y = 0; y < logits.h(); ++y)
        for (int x = 0; x < logits.w(); ++x) m.at(y, x) = logits.at(b, 0, y, x) > 0.0 ? 1 : 0;
      out.push_back(std::move(m));
    }
  }
  return out;
}

double mean_dice(models::SegmentationNetwork& model, const std::vector<std::string>& ids, const SampleIndex& samples,
                 int batch_size) {
  if (ids.empty()) throw ConfigError("cannot evaluate Dice on an empty id set");
  std::vector<const data::Image*> images;
  for (const auto& id : ids) images.push_back(&lookup(samples, id).pixels);
  const auto preds = predict(model, images, batch_size);
  double sum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) sum += dice(preds[i], *samples.at(ids[i]).mask);
  return sum / static_cast<double>(ids.size());
}

FinetuneOutcome finetune(const FinetuneConfig& config, const data::SplitSpec& split, const SampleIndex& samples) {
  const models::NetworkSpec spec = effective_spec(config);
  if (config.epochs < 0 || config.batch_size < 1 || config.patience < 0) {
    throw ConfigError("epochs and patience must be >= 0 and batch_size >= 1");
  }
  if (!(config.lr > 0.0) || config.weight_decay < 0.0) throw ConfigError("lr must be positive and weight_decay >= 0");
  const std::vector<std::string>& train_ids = split.subset(config.fraction);
  if (train_ids.empty()) {
    throw ConfigError(fmt::format("fraction {} of split {} selects no training images", config.fraction, split.name));
  }
  if (split.val_ids.empty() || split.test_ids.empty()) throw ConfigError("split needs val and test ids");
  audit_leakage(split, train_ids);
  for (const auto* ids : {&train_ids, &split.val_ids, &split.test_ids}) {
    for (const auto& id : *ids) {
      const auto& s = lookup(samples, id);
      if (s.pixels.height != spec.input_size || s.pixels.width != spec.input_size) {
        throw ConfigError(fmt::format("sample {} is {}x{}, network expects {}", id, s.pixels.height, s.pixels.width,
                                      spec.input_size));
      }
    }
  }

  FinetuneOutcome out;
  RunResult& r = out.result;
  const bool pretrained = config.init && config.init->method != models::Method::kNone;
  r.method = std::string(models::method_name(pretrained ? config.init->method : models::Method::kNone));
  r.corpus = pretrained ? config.init->corpus_name : "-";
  r.arch = std::string(models::arch_name(spec.arch));
  r.image_size = spec.input_size;
  r.fraction = config.fraction;
  r.seed = config.seed;
  r.fingerprint = fingerprint(config, spec, r.method, r.corpus);
  r.train_images = train_ids.size();
  r.leakage_free = true;

  out.model = models::build_segmentation_network(spec, config.seed);
  auto& model = *out.model;
  if (config.init) {
    const auto report = models::transfer_weights(*config.init, model, config.scope);
    r.audit.copied = report.copied.size();
    const auto params = model.params();
    const auto ck_match = [&](std::string_view seg) {
      for (const auto& ref : models::select_segment(params, seg)) {
        const auto* t = config.init->find(ref.name);
        if (!t || t->data != ref.param->value.data) return false;
      }
      return true;
    };
    r.audit.encoder_matches_checkpoint = !pretrained || ck_match("encoder");
    r.audit.decoder_matches_checkpoint = pretrained && ck_match("decoder");
    auto fresh = models::build_segmentation_network(spec, config.seed);
    const auto fresh_params = fresh->params();
    r.audit.decoder_fresh = same_values(models::select_segment(params, "decoder"),
                                        models::select_segment(fresh_params, "decoder")) &&
                            same_values(models::select_segment(params, "output"),
                                        models::select_segment(fresh_params, "output"));
  }

  const auto params = model.params();
  nn::Adam optimizer(params, nn::AdamOptions{.lr = config.lr, .weight_decay = config.weight_decay});
  std::vector<nn::Tensor> best = [&] {
    std::vector<nn::Tensor> v;
    for (const auto& ref : params) v.push_back(ref.param->value);
    return v;
  }();
  double best_dice = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::string> order = train_ids;
    Rng rng = make_rng(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t i = 0, end = 0; i < order.size(); i = end) {
      end = std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
      // Fold a trailing single image into the previous batch.
      if (order.size() - end == 1) end = order.size();
      std::vector<const data::Image*> images;
      std::vector<const data::Mask*> masks;
      for (std::size_t j = i; j < end; ++j) {
        const auto& s = samples.at(order[j]);
        images.push_back(&s.pixels);
        masks.push_back(&*s.mask);
      }
      optimizer.zero_grad();
      Tensor grad;
      const double loss =
          bce_with_logits(model.forward(data::to_tensor(images), nn::Mode::kTrain), data::masks_to_tensor(masks), grad);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("non-finite fine-tuning loss at epoch {} (seed {}, lr {})", epoch, config.seed,
                                        config.lr));
      }
      model.backward(grad);
      optimizer.step();
      loss_sum += loss;
      ++batches;
    }
    r.train_losses.push_back(loss_sum / batches);
    const double val = mean_dice(model, split.val_ids, samples, config.batch_size);
    r.val_curve.push_back(val);
    log::debug("finetune seed {} epoch {}: loss {:.4f} val dice {:.4f}", config.seed, epoch, r.train_losses.back(), val);
    if (val > best_dice) {
      best_dice = val;
      r.best_epoch = epoch;
      since_best = 0;
      for (std::size_t k = 0; k < params.size(); ++k) best[k] = params[k].param->value;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].param->value = best[k];

  r.test_dice = mean_dice(model, split.test_ids, samples, config.batch_size);
  if (config.results_log) append_result(*config.results_log, r);
  return out;
}

std::vector<RunResult> repeat_experiment(FinetuneConfig config, int n, std::uint64_t base_seed,
                                         const data::SplitSpec& split, const SampleIndex& samples) {
  if (n < 1) throw ConfigError(fmt::format("repeat count must be >= 1, got {}", n));
  std::vector<RunResult> results;
  for (int i = 0; i < n; ++i) {
    config.seed = base_seed + static_cast<std::uint64_t>(i);
    const auto tag = [&](const std::exception& e) { return fmt::format("run with seed {}: {}", config.seed, e.what()); };
    try {
      results.push_back(finetune(config, split, samples).result);
    } catch (const ConfigError& e) {
      throw ConfigError(tag(e));
    } catch (const ValidationError& e) {
      throw ValidationError(tag(e));
    } catch (const IngestionError& e) {
      throw IngestionError(tag(e));
    } catch (const TransferError& e) {
      throw TransferError(tag(e));
    } catch (const TrainingError& e) {
      throw TrainingError(tag(e));
    } catch (const IoError& e) {
      throw IoError(tag(e));
    }
  }
  return results;
}

std::string format_result_line(const RunResult& r) {
  return fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{:.9f}", r.method, r.corpus, r.arch, r.image_size, r.fraction, r.seed,
                     r.test_dice);
}

RunResult parse_result_line(std::string_view line) {
  std::vector<std::string> f;
  boost::split(f, line, boost::is_any_of("\t"));
  if (f.size() != 7) throw IngestionError(fmt::format("results line needs 7 fields, got {}: '{}'", f.size(), line));
  RunResult r;
  try {
    r.method = f[0];
    r.corpus = f[1];
    r.arch = f[2];
    r.image_size = std::stoi(f[3]);
    r.fraction = std::stod(f[4]);
    r.seed = std::stoull(f[5]);
    r.test_dice = std::stod(f[6]);
  } catch (const std::logic_error&) {
    throw IngestionError(fmt::format("malformed results line '{}'", line));
  }
  if (!(r.test_dice >= 0.0 && r.test_dice <= 1.0)) {
    throw IngestionError(fmt::format("test Dice {} outside [0, 1]", r.test_dice));
  }
  return r;
}

void append_result(const std::filesystem::path& log, const RunResult& r) {
  if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
  // One write per line keeps concurrent appenders from interleaving.
  const std::string line = format_result_line(r) + "\n";
  std::ofstream out(log, std::ios::app);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw IoError(fmt::format("cannot append to {}", log.string()));
}

std::vector<RunResult> read_results(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw IngestionError(fmt::format("cannot open results log {}", log.string()));
  std::vector<RunResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_result_line(line));
  }
  return out;
}

}  // namespace sslseg::finetune
