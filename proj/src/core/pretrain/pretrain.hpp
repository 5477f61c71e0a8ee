#pragma once

#include "core/augment/augment.hpp"
#include "core/data/datasets.hpp"
#include "core/models/checkpoint.hpp"
#include "core/models/models.hpp"
#include "core/nn/optim.hpp"
#include "core/ssl/losses.hpp"
#include "core/ssl/moco.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace sslseg::pretrain {

using models::Method;

// Corpus id -> sample, already at the working resolution.
using SampleIndex = std::unordered_map<std::string, data::ImageSample>;

int default_batch_size(Method method, int image_size);
double default_tau(Method method);
// Largest of 2048, 512 below the train size, else the largest multiple of
// the batch size below it.
int default_queue_size(int train_size, int batch_size);

struct PretrainConfig {
  Method method = Method::kSimclr;
  models::NetworkSpec network;  // head is filled in from the method
  std::string corpus_name;
  int batch_size = 0;  // 0: per-method default for the image size
  int epochs = 200;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  double tau = 0.0;  // 0: per-method default
  double momentum = 0.999;
  int queue_size = 0;  // 0: derived from the corpus size
  std::uint64_t seed = 0;
  augment::AugmentConfig augment;
  double collapse_threshold = 0.01;
  int collapse_patience = 3;
  std::optional<std::filesystem::path> run_dir;

  int image_size() const { return network.input_size; }
};

// Defaults resolved against the corpus; throws ConfigError on invalid values.
PretrainConfig resolve(PretrainConfig config, const data::PretrainCorpus& corpus);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double collapse = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  // Loss of every optimiser step, in order.
  std::vector<double> step_losses;
  bool collapse_warned = false;
};

// Mean over dimensions of the population std of the L2-normalised rows.
double collapse_metric(const ssl::Matrix& embeddings);

struct StepResult {
  ssl::LossValue loss;
  ssl::Matrix embeddings;  // normalised projections of the first view
};

// Online network, optimiser and, for MoCo, the momentum encoder and queue.
class PretrainState {
 public:
  // `config` must already be resolved.
  explicit PretrainState(const PretrainConfig& config);

  // One optimiser step on a batch of view pairs.
  StepResult step(const std::vector<augment::ViewPair>& batch);
  // Same loss without any state change (batch statistics, no running update).
  StepResult evaluate(const std::vector<augment::ViewPair>& batch);

  models::SslNetwork& online() { return *online_; }
  models::SslNetwork* momentum_encoder() { return key_.get(); }
  const ssl::QueueState* queue() const { return queue_ ? &*queue_ : nullptr; }
  long steps() const { return optimizer_.steps(); }

 private:
  StepResult compute(const std::vector<augment::ViewPair>& batch, bool train);

  PretrainConfig config_;
  std::unique_ptr<models::SslNetwork> online_;
  std::unique_ptr<models::SslNetwork> key_;
  std::optional<ssl::QueueState> queue_;
  nn::Adam optimizer_;
};

struct PretrainResult {
  models::Checkpoint checkpoint;  // best validation loss
  TrainTrace trace;
  PretrainConfig config;          // resolved
};

// Every corpus id must be present in `samples`.
PretrainResult run_pretraining(const PretrainConfig& config, const data::PretrainCorpus& corpus,
                               const SampleIndex& samples);

std::string describe(const PretrainConfig& config);

}  // namespace sslseg::pretrain
