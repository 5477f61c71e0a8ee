#pragma once

#include "core/app/config.hpp"
#include "core/finetune/finetune.hpp"
#include "core/pretrain/pretrain.hpp"

#include <string>
#include <vector>

namespace sslseg::app {

struct SmokeMethodRun {
  std::string method;
  pretrain::TrainTrace trace;
  std::vector<finetune::RunResult> finetune;
  double mean_dice = 0.0;
};

struct SmokeCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SmokeReport {
  std::vector<SmokeMethodRun> ssl;
  std::vector<finetune::RunResult> supervised;
  double supervised_dice = 0.0;
  std::vector<SmokeCheck> checks;
  double seconds = 0.0;

  bool passed() const;
  // Every logged loss and Dice at full precision, one record per line.
  std::string summary() const;
};

// Synthetic BUS stand-in: pre-train SimCLR, MoCo and SimSiam, fine-tune
// each plus a supervised baseline, evaluate, write artifacts to
// report.out_dir.
SmokeReport smoke(const Config& cfg);
std::string format_checks(const SmokeReport& report);

}  // namespace sslseg::app
