#pragma once

#include "core/app/config.hpp"
#include "core/data/datasets.hpp"
#include "core/finetune/finetune.hpp"
#include "core/models/models.hpp"
#include "core/pretrain/pretrain.hpp"

#include <string>
#include <vector>

namespace sslseg::app {

// Each verb returns the text it wants printed on stdout.
std::string run_split(const Config& cfg);
std::string run_pretrain(const Config& cfg);
std::string run_finetune(const Config& cfg);
std::string run_evaluate(const Config& cfg);
std::string run_report(const Config& cfg);
std::string run_export_masks(const Config& cfg);
std::string run_smoke(const Config& cfg);

// Shared plumbing, exposed for the smoke pipeline and tests.
models::NetworkSpec network_spec(const Config& cfg);
data::SplitCounts split_counts(const Config& cfg);
// BUS (or synthetic) samples at the working size, keyed by plain id.
finetune::SampleIndex load_bus_samples(const Config& cfg);
data::SplitSpec resolve_split(const Config& cfg, const finetune::SampleIndex& bus);
pretrain::PretrainConfig pretrain_config(const Config& cfg);
finetune::FinetuneConfig finetune_config(const Config& cfg);
// Corpus-qualified index ("bus:<id>") for pre-training.
pretrain::SampleIndex qualify_index(const finetune::SampleIndex& bus, data::Source source);

// Fine-tuned weights: checkpoint with the segmentation parameters.
void save_segmentation(const std::filesystem::path& path, models::SegmentationNetwork& model,
                       const finetune::RunResult& result);
std::unique_ptr<models::SegmentationNetwork> load_segmentation(const std::filesystem::path& path);

}  // namespace sslseg::app
