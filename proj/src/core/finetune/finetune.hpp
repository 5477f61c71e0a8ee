#pragma once

#include "core/data/datasets.hpp"
#include "core/models/checkpoint.hpp"
#include "core/models/models.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace sslseg::finetune {

using SampleIndex = std::unordered_map<std::string, data::ImageSample>;

// 2|P and G| / (|P| + |G|); 1 when both are empty.
double dice(const data::Mask& pred, const data::Mask& gt);

struct FinetuneConfig {
  // Empty: supervised baseline from random initialisation.
  std::shared_ptr<const models::Checkpoint> init;
  models::TransferScope scope = models::TransferScope::kEncoderOnly;
  // Used for the supervised baseline; otherwise taken from the checkpoint.
  models::NetworkSpec network;
  double fraction = 1.0;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  int epochs = 100;
  int batch_size = 32;
  int patience = 20;  // epochs without val Dice improvement; 0 disables
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> results_log;
};

struct TransferAudit {
  std::size_t copied = 0;
  bool encoder_matches_checkpoint = true;
  bool decoder_matches_checkpoint = false;
  // Decoder and output layer bit-equal to a fresh initialisation at step 0.
  bool decoder_fresh = true;
};

struct RunResult {
  std::string method;  // display name, "Supervised" for the baseline
  std::string corpus;  // pre-training corpus, "-" for the baseline
  std::string arch;
  int image_size = 0;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::size_t train_images = 0;
  double test_dice = 0.0;
  std::vector<double> val_curve;
  std::vector<double> train_losses;
  int best_epoch = 0;
  TransferAudit audit;
  bool leakage_free = false;
};

struct FinetuneOutcome {
  std::unique_ptr<models::SegmentationNetwork> model;
  RunResult result;
};

// Network actually trained: the checkpoint's architecture and size when an
// init is given, otherwise config.network.
models::NetworkSpec effective_spec(const FinetuneConfig& config);

FinetuneOutcome finetune(const FinetuneConfig& config, const data::SplitSpec& split, const SampleIndex& samples);

// Seeds base_seed .. base_seed + n - 1 on the same split.
std::vector<RunResult> repeat_experiment(FinetuneConfig config, int n, std::uint64_t base_seed,
                                         const data::SplitSpec& split, const SampleIndex& samples);

// Thresholded predictions, eval mode.
std::vector<data::Mask> predict(models::SegmentationNetwork& model, const std::vector<const data::Image*>& images,
                                int batch_size = 32);
double mean_dice(models::SegmentationNetwork& model, const std::vector<std::string>& ids, const SampleIndex& samples,
                 int batch_size = 32);

// method, corpus, arch, size, fraction, seed, test_dice (tab separated).
std::string format_result_line(const RunResult& r);
RunResult parse_result_line(std::string_view line);
void append_result(const std::filesystem::path& log, const RunResult& r);
std::vector<RunResult> read_results(const std::filesystem::path& log);

}  // namespace sslseg::finetune
