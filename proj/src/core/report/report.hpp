#pragma once

#include "core/data/datasets.hpp"
#include "core/finetune/finetune.hpp"
#include "core/models/models.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sslseg::report {

inline constexpr double kFractions[] = {1.0, 0.5, 0.25, 0.1};
inline constexpr const char* kSupervised = "Supervised";
inline constexpr const char* kSslMethods[] = {"MoCo", "SimCLR", "SimSiam"};

struct Cell {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation, 0 for n = 1
  int n = 0;
};

struct Row {
  std::string method;
  std::string corpus;
  // Keyed by fraction; a missing entry is an absent cell.
  std::map<double, Cell> cells;
  const Cell* cell(double fraction) const;
};

struct ResultsTable {
  std::string arch;
  int image_size = 0;
  std::vector<Row> rows;
  const Row* find(std::string_view method, std::string_view corpus) const;
};

// Rank of a corpus name in the display order (unknown names sort last).
int corpus_rank(std::string_view corpus);

// All results must share one architecture and image size.
ResultsTable aggregate(const std::vector<finetune::RunResult>& results);
// One table per (arch, size), in (arch, size) order.
std::vector<ResultsTable> aggregate_all(const std::vector<finetune::RunResult>& results);

double round3(double x);

struct MeanRow {
  std::string corpus;
  std::map<double, double> cells;  // rounded to 3 decimals
};

struct MeanTable {
  std::string arch;
  int image_size = 0;
  std::vector<MeanRow> rows;
  const MeanRow* find(std::string_view corpus) const;
};

// Unweighted mean of the three SSL methods' means per corpus and fraction.
MeanTable dataset_mean_table(const ResultsTable& table);

std::string format_text(const ResultsTable& table);
std::string format_csv(const ResultsTable& table);
std::string format_text(const MeanTable& table);
std::string format_csv(const MeanTable& table);

struct PanelExport {
  std::vector<std::filesystem::path> panels;
  std::optional<std::filesystem::path> overview;
  std::vector<std::string> skipped;
};

// input | ground truth | prediction per sample. Ids containing "benign" or
// "malignant" are also collected into a two-column overview image.
PanelExport export_mask_panels(models::SegmentationNetwork& model, const std::vector<const data::ImageSample*>& samples,
                               const std::filesystem::path& out_dir);

}  // namespace sslseg::report
