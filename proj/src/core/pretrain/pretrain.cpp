#include "core/pretrain/pretrain.hpp"

#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/common/rng.hpp"
#include "core/data/batch.hpp"
#include "core/data/split_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace sslseg::pretrain {
namespace {

using nn::Tensor;
using ssl::Matrix;

constexpr std::uint64_t kShuffleStream = 0x5348'5546;  // "SHUF"
constexpr std::uint64_t kQueueInitStream = 0x5155'4555;  // "QUEU"
constexpr std::uint64_t kValAugmentEpoch = 0xffff'ffff;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.n(), static_cast<Eigen::Index>(t.sample_size()));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

Tensor to_tensor(const Matrix& m) {
  Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

Tensor view_batch(const std::vector<augment::ViewPair>& batch, bool second) {
  std::vector<const data::Image*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& pair : batch) ptrs.push_back(second ? &pair.view_b : &pair.view_a);
  return data::to_tensor(ptrs);
}

std::vector<std::vector<std::string>> make_batches(std::vector<std::string> ids, int batch_size, bool drop_last) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < ids.size(); i += batch_size) {
    const std::size_t end = std::min(ids.size(), i + batch_size);
    out.emplace_back(ids.begin() + i, ids.begin() + end);
  }
  if (out.size() > 1 && static_cast<int>(out.back().size()) < batch_size) {
    if (drop_last) {
      out.pop_back();
    } else if (out.back().size() < 2) {
      // A single-sample batch has no batch statistics to speak of.
      auto tail = std::move(out.back());
      out.pop_back();
      out.back().insert(out.back().end(), tail.begin(), tail.end());
    }
  }
  return out;
}

std::vector<augment::ViewPair> views_for(const std::vector<std::string>& ids, const SampleIndex& samples,
                                         const PretrainConfig& cfg, std::uint64_t epoch) {
  std::vector<augment::ViewPair> pairs;
  pairs.reserve(ids.size());
  for (const auto& id : ids) pairs.push_back(augment::two_views(samples.at(id), cfg.seed, epoch, cfg.image_size(), cfg.augment));
  return pairs;
}

void require_finite(const ssl::LossValue& loss, const PretrainConfig& cfg, long step, models::SslNetwork& net) {
  if (std::isfinite(loss.value)) return;
  const auto params = net.params();
  double max_abs = 0.0;
  std::string worst;
  for (const auto& ref : params) {
    for (double v : ref.param->value.data) {
      if (!std::isfinite(v) || std::abs(v) > max_abs) {
        max_abs = std::isfinite(v) ? std::abs(v) : std::numeric_limits<double>::infinity();
        worst = ref.name;
      }
    }
  }
  throw TrainingError(fmt::format(
      "non-finite {} loss at step {} (lr={}, batch={}, tau={}); largest parameter magnitude {} in {}; grad norm {}",
      models::method_name(cfg.method), step, cfg.lr, cfg.batch_size, cfg.tau, max_abs, worst,
      std::sqrt(nn::grad_norm_squared(params))));
}

}  // namespace

int default_batch_size(Method method, int image_size) {
  const bool small = image_size <= 32;
  switch (method) {
    case Method::kSimclr: return small ? 512 : 256;
    case Method::kMoco: return small ? 256 : 64;
    case Method::kSimsiam: return 512;
    case Method::kNone: break;
  }
  throw ConfigError("supervised runs have no pre-training batch size");
}

double default_tau(Method method) { return method == Method::kMoco ? 0.07 : 0.5; }

int default_queue_size(int train_size, int batch_size) {
  for (int k : {2048, 512}) {
    if (k < train_size) return k;
  }
  if (batch_size <= 0) return 0;
  return ((train_size - 1) / batch_size) * batch_size;
}

PretrainConfig resolve(PretrainConfig cfg, const data::PretrainCorpus& corpus) {
  if (cfg.method == Method::kNone) throw ConfigError("pre-training needs an SSL method");
  cfg.network = models::with_head(cfg.network, models::head_for(cfg.method));
  models::validate(cfg.network);
  if (cfg.corpus_name.empty()) cfg.corpus_name = corpus.name;
  if (cfg.image_size() != corpus.image_size) {
    throw ConfigError(fmt::format("network input {} does not match corpus image size {}", cfg.image_size(),
                                  corpus.image_size));
  }
  if (cfg.batch_size == 0) cfg.batch_size = default_batch_size(cfg.method, cfg.image_size());
  if (cfg.batch_size < 2) throw ConfigError(fmt::format("batch size must be at least 2, got {}", cfg.batch_size));
  if (cfg.method == Method::kSimsiam && cfg.batch_size > 512) {
    throw ConfigError(fmt::format("SimSiam batch size is capped at 512, got {}", cfg.batch_size));
  }
  if (cfg.tau == 0.0) cfg.tau = default_tau(cfg.method);
  if (!(cfg.tau > 0.0)) throw ConfigError(fmt::format("tau must be positive, got {}", cfg.tau));
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(cfg.lr > 0.0) || cfg.weight_decay < 0.0) throw ConfigError("lr must be positive and weight_decay >= 0");
  if (cfg.momentum < 0.0 || cfg.momentum > 1.0) throw ConfigError("momentum must lie in [0, 1]");
  if (cfg.method == Method::kMoco) {
    const int train_n = static_cast<int>(corpus.train_ids.size());
    if (cfg.queue_size == 0) cfg.queue_size = default_queue_size(train_n, cfg.batch_size);
    if (cfg.queue_size <= 0 || cfg.queue_size % cfg.batch_size != 0) {
      throw ConfigError(fmt::format("queue size {} must be a positive multiple of the batch size {}", cfg.queue_size,
                                    cfg.batch_size));
    }
    if (cfg.queue_size >= train_n) {
      throw ConfigError(fmt::format("queue size {} must be below the corpus train size {}", cfg.queue_size, train_n));
    }
  }
  if (cfg.epochs > 0) {
    if (static_cast<int>(corpus.train_ids.size()) < cfg.batch_size) {
      throw ConfigError(fmt::format("corpus {} has {} training images, fewer than one batch of {}", corpus.name,
                                    corpus.train_ids.size(), cfg.batch_size));
    }
    if (corpus.val_ids.size() < 2) throw ConfigError(fmt::format("corpus {} needs at least 2 val images", corpus.name));
  }
  return cfg;
}

double collapse_metric(const Matrix& embeddings) {
  if (embeddings.rows() < 2) {
    throw ValidationError(fmt::format("collapse metric needs at least 2 rows, got {}", embeddings.rows()));
  }
  const Matrix u = ssl::l2_normalize_rows(embeddings);
  const Eigen::RowVectorXd mean = u.colwise().mean();
  const Matrix centered = u.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  return var.array().sqrt().mean();
}

// ---------------------------------------------------------------------------

PretrainState::PretrainState(const PretrainConfig& config)
    : config_(config),
      online_(models::build_ssl_network(config.network, config.method, config.seed)),
      optimizer_(online_->params(), nn::AdamOptions{.lr = config.lr, .weight_decay = config.weight_decay}) {
  if (config.method == Method::kMoco) {
    key_ = models::build_ssl_network(config.network, config.method, config.seed);
    models::copy_params(online_->params(), key_->params());
    queue_.emplace(config.queue_size, config.network.embedding_dim);
    // Start from random unit keys rather than an empty dictionary, as the
    // reference MoCo code does; the first real keys evict them in order.
    Rng rng = make_rng(config.seed, kQueueInitStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix init(config.queue_size, config.network.embedding_dim);
    for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] = normal(rng);
    queue_->push(ssl::l2_normalize_rows(init));
  }
}

StepResult PretrainState::step(const std::vector<augment::ViewPair>& batch) { return compute(batch, true); }

StepResult PretrainState::evaluate(const std::vector<augment::ViewPair>& batch) { return compute(batch, false); }

StepResult PretrainState::compute(const std::vector<augment::ViewPair>& batch, bool train) {
  const nn::Mode mode = train ? nn::Mode::kTrain : nn::Mode::kProbe;
  const int b = static_cast<int>(batch.size());
  StepResult out;
  if (train) optimizer_.zero_grad();

  switch (config_.method) {
    case Method::kSimclr: {
      const Tensor x = nn::concat_batch(view_batch(batch, false), view_batch(batch, true));
      const Matrix z = to_matrix(online_->forward(x, mode).z);
      const auto pairing = ssl::two_view_pairing(b);
      Matrix grad;
      out.loss = ssl::nt_xent(z, pairing, config_.tau, train ? &grad : nullptr);
      out.embeddings = ssl::l2_normalize_rows(z.topRows(b));
      if (train) {
        require_finite(out.loss, config_, optimizer_.steps(), *online_);
        online_->backward(to_tensor(grad));
      }
      break;
    }
    case Method::kMoco: {
      const Matrix q_raw = to_matrix(online_->forward(view_batch(batch, false), mode).z);
      const Matrix q = ssl::l2_normalize_rows(q_raw);
      // Keys come from the momentum encoder with no gradient path.
      const Matrix k = ssl::l2_normalize_rows(to_matrix(key_->forward(view_batch(batch, true), mode).z));
      Matrix grad_q;
      out.loss = ssl::info_nce(q, k, *queue_, config_.tau, train ? &grad_q : nullptr);
      out.embeddings = q;
      if (train) {
        require_finite(out.loss, config_, optimizer_.steps(), *online_);
        online_->backward(to_tensor(ssl::l2_normalize_backward(q_raw, grad_q)));
        optimizer_.step();
        ssl::momentum_update(key_->params(), online_->params(), config_.momentum);
        queue_->push(k);
        return out;
      }
      break;
    }
    case Method::kSimsiam: {
      const Tensor x = nn::concat_batch(view_batch(batch, false), view_batch(batch, true));
      const auto fwd = online_->forward(x, mode);
      const Matrix z = to_matrix(fwd.z);
      const Matrix p = to_matrix(fwd.p);
      ssl::SimSiamGrads grads;
      out.loss = ssl::simsiam_loss(p.topRows(b), z.topRows(b), p.bottomRows(b), z.bottomRows(b),
                                   train ? &grads : nullptr);
      out.embeddings = ssl::l2_normalize_rows(z.topRows(b));
      if (train) {
        require_finite(out.loss, config_, optimizer_.steps(), *online_);
        Matrix dp(2 * b, p.cols());
        dp.topRows(b) = grads.p1;
        dp.bottomRows(b) = grads.p2;
        online_->backward(Tensor{}, to_tensor(dp));
      }
      break;
    }
    case Method::kNone:
      throw ConfigError("supervised runs have no pre-training step");
  }
  if (train) optimizer_.step();
  return out;
}

// ---------------------------------------------------------------------------

std::string describe(const PretrainConfig& c) {
  std::string s;
  s += fmt::format("method\t{}\n", models::method_name(c.method));
  s += fmt::format("arch\t{}\n", models::arch_name(c.network.arch));
  s += fmt::format("image_size\t{}\n", c.image_size());
  s += fmt::format("base_width\t{}\ndepth\t{}\nresnet_width\t{}\n", c.network.base_width, c.network.depth,
                   c.network.resnet_width);
  s += fmt::format("embedding_dim\t{}\n", c.network.embedding_dim);
  s += fmt::format("corpus\t{}\n", c.corpus_name);
  s += fmt::format("batch_size\t{}\nepochs\t{}\n", c.batch_size, c.epochs);
  s += fmt::format("lr\t{}\nweight_decay\t{}\n", c.lr, c.weight_decay);
  s += fmt::format("seed\t{}\n", c.seed);
  if (c.method != Method::kSimsiam) s += fmt::format("tau\t{}\n", c.tau);
  if (c.method == Method::kMoco) {
    s += fmt::format("momentum\t{}\nqueue_size\t{}\n", c.momentum, c.queue_size);
    s += "batchnorm_shuffle\tnone\n";
  }
  s += fmt::format("augment\t{}\n", c.augment.describe());
  return s;
}

PretrainResult run_pretraining(const PretrainConfig& config, const data::PretrainCorpus& corpus,
                               const SampleIndex& samples) {
  PretrainResult result;
  result.config = resolve(config, corpus);
  const PretrainConfig& cfg = result.config;

  std::vector<std::string> missing;
  for (const auto* ids : {&corpus.train_ids, &corpus.val_ids}) {
    for (const auto& id : *ids) {
      if (!samples.count(id)) missing.push_back(id);
    }
  }
  if (!missing.empty()) {
    throw ConfigError(fmt::format("corpus {} references {} unknown samples (first: {})", corpus.name, missing.size(),
                                  missing.front()));
  }

  std::ofstream metrics;
  if (cfg.run_dir) {
    std::filesystem::create_directories(*cfg.run_dir);
    std::ofstream(*cfg.run_dir / "config.tsv") << describe(cfg);
    data::write_corpus(*cfg.run_dir / "corpus.tsv", corpus);
    metrics.open(*cfg.run_dir / "metrics.tsv");
    metrics << "epoch\ttrain_loss\tval_loss\tcollapse\tseconds\n";
  }

  log::debug("{} on {}: {} train / {} val samples, batch {}, {} epochs", models::method_name(cfg.method), corpus.name,
             corpus.train_ids.size(), corpus.val_ids.size(), cfg.batch_size, cfg.epochs);
  PretrainState state(cfg);
  const auto snap = [&](int epoch, double loss) {
    return models::snapshot(state.online().params(), cfg.method, corpus.name, cfg.network,
                            models::TrainMeta{epoch, loss, cfg.seed});
  };
  result.checkpoint = snap(0, std::numeric_limits<double>::quiet_NaN());
  if (cfg.run_dir) models::save_checkpoint(*cfg.run_dir / "checkpoint.bin", result.checkpoint);

  const auto val_batches = make_batches(corpus.val_ids, cfg.batch_size, false);
  std::vector<std::vector<augment::ViewPair>> val_views;
  for (const auto& ids : val_batches) val_views.push_back(views_for(ids, samples, cfg, kValAugmentEpoch));

  double best_val = std::numeric_limits<double>::infinity();
  int low_collapse_run = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> order = corpus.train_ids;
    Rng shuffle_rng = make_rng(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_sum = 0.0;
    const auto train_batches = make_batches(std::move(order), cfg.batch_size, true);
    for (const auto& ids : train_batches) {
      const double loss = state.step(views_for(ids, samples, cfg, epoch)).loss.value;
      result.trace.step_losses.push_back(loss);
      train_sum += loss;
    }

    double val_sum = 0.0;
    std::size_t val_n = 0;
    std::vector<Matrix> val_embeddings;
    for (const auto& views : val_views) {
      auto r = state.evaluate(views);
      val_sum += r.loss.value * static_cast<double>(views.size());
      val_n += views.size();
      val_embeddings.push_back(std::move(r.embeddings));
    }
    Matrix all(static_cast<Eigen::Index>(val_n), cfg.network.embedding_dim);
    Eigen::Index row = 0;
    for (const auto& m : val_embeddings) {
      all.middleRows(row, m.rows()) = m;
      row += m.rows();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(train_batches.size());
    rec.val_loss = val_sum / static_cast<double>(val_n);
    rec.collapse = collapse_metric(all);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError(fmt::format("non-finite validation loss at epoch {}", epoch));
    }
    result.trace.epochs.push_back(rec);
    if (metrics.is_open()) {
      metrics << fmt::format("{}\t{:.9g}\t{:.9g}\t{:.9g}\t{:.3f}\n", rec.epoch, rec.train_loss, rec.val_loss,
                             rec.collapse, rec.seconds)
              << std::flush;
    }
    log::info("{} epoch {}/{}: train {:.4f} val {:.4f} collapse {:.4f} ({:.1f}s)", models::method_name(cfg.method),
              epoch, cfg.epochs, rec.train_loss, rec.val_loss, rec.collapse, rec.seconds);

    low_collapse_run = rec.collapse < cfg.collapse_threshold ? low_collapse_run + 1 : 0;
    if (low_collapse_run == cfg.collapse_patience) {
      result.trace.collapse_warned = true;
      log::warn("{}: collapse metric below {} for {} consecutive epochs (last {:.5f})", models::method_name(cfg.method),
                cfg.collapse_threshold, cfg.collapse_patience, rec.collapse);
    }

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.checkpoint = snap(epoch, rec.val_loss);
      if (cfg.run_dir) models::save_checkpoint(*cfg.run_dir / "checkpoint.bin", result.checkpoint);
    }
  }
  return result;
}

}  // namespace sslseg::pretrain
