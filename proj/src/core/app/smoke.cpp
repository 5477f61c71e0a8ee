#include "core/app/smoke.hpp"

#include "core/app/verbs.hpp"
#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/data/split_io.hpp"
#include "core/report/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>

namespace sslseg::app {

bool SmokeReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const SmokeCheck& c) { return c.pass; });
}

std::string SmokeReport::summary() const {
  std::string out;
  for (const auto& m : ssl) {
    for (const auto& e : m.trace.epochs) {
      out += fmt::format("pretrain\t{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\n", m.method, e.epoch, e.train_loss, e.val_loss,
                         e.collapse);
    }
    for (std::size_t i = 0; i < m.trace.step_losses.size(); ++i) {
      out += fmt::format("step\t{}\t{}\t{:.17g}\n", m.method, i + 1, m.trace.step_losses[i]);
    }
  }
  const auto dice_lines = [&](const std::vector<finetune::RunResult>& runs) {
    for (const auto& r : runs) {
      out += fmt::format("finetune\t{}\t{}\t{}\t{:.17g}\n", r.method, r.seed, r.best_epoch, r.test_dice);
      for (std::size_t i = 0; i < r.train_losses.size(); ++i) {
        out += fmt::format("ft_epoch\t{}\t{}\t{}\t{:.17g}\t{:.17g}\n", r.method, r.seed, i + 1, r.train_losses[i],
                           r.val_curve[i]);
      }
    }
  };
  dice_lines(supervised);
  for (const auto& m : ssl) dice_lines(m.finetune);
  return out;
}

std::string format_checks(const SmokeReport& report) {
  std::string out;
  for (const auto& c : report.checks) out += fmt::format("[{}] {}: {}\n", c.pass ? "PASS" : "FAIL", c.name, c.detail);
  out += fmt::format("smoke {} in {:.1f}s\n", report.passed() ? "passed" : "FAILED", report.seconds);
  return out;
}

SmokeReport smoke(const Config& base) {
  const auto start = std::chrono::steady_clock::now();
  Config cfg = base;
  const auto dir = cfg.path("report.out_dir");
  std::filesystem::create_directories(dir);
  const auto results_log = dir / "results.tsv";
  std::filesystem::remove(results_log);
  cfg.set("finetune.results_log", results_log.string());
  cfg.set("report.results_log", results_log.string());

  SmokeReport report;
  const auto bus = load_bus_samples(cfg);
  const auto split = resolve_split(cfg, bus);
  data::write_split(dir / "split.tsv", split);
  const auto index = qualify_index(bus, data::Source::kBus);
  const auto corpus = data::bus_corpus(split, cfg.integer("data.image_size"));
  const int repeats = cfg.integer("finetune.repeats");
  const std::uint64_t ft_seed = cfg.uinteger("finetune.seed");

  const auto mean_of = [](const std::vector<finetune::RunResult>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.test_dice;
    return s / static_cast<double>(runs.size());
  };

  {
    auto fc = finetune_config(cfg);
    fc.init.reset();
    log::info("smoke: supervised baseline");
    report.supervised = finetune::repeat_experiment(fc, repeats, ft_seed, split, bus);
    report.supervised_dice = mean_of(report.supervised);
  }

  for (const char* method : {"simclr", "moco", "simsiam"}) {
    Config mc = cfg;
    mc.set("pretrain.method", method);
    mc.set("pretrain.run_dir", (dir / fmt::format("pretrain_{}", method)).string());
    log::info("smoke: pre-training {}", method);
    auto pr = pretrain::run_pretraining(pretrain_config(mc), corpus, index);

    SmokeMethodRun run;
    run.method = std::string(models::method_name(pr.config.method));
    run.trace = std::move(pr.trace);
    auto fc = finetune_config(mc);
    fc.init = std::make_shared<models::Checkpoint>(std::move(pr.checkpoint));
    fc.scope = fc.init->has_segment("decoder") ? models::TransferScope::kEncoderAndDecoder
                                               : models::TransferScope::kEncoderOnly;
    log::info("smoke: fine-tuning from {}", run.method);
    run.finetune = finetune::repeat_experiment(fc, repeats, ft_seed, split, bus);
    run.mean_dice = mean_of(run.finetune);
    report.ssl.push_back(std::move(run));
  }

  // (i) pre-training makes progress
  for (const auto& m : report.ssl) {
    const auto& e = m.trace.epochs;
    const bool ok = e.size() >= 2 && e.back().train_loss < e.front().train_loss;
    report.checks.push_back({fmt::format("{} loss decreases", m.method), ok,
                             e.empty() ? "no epochs" : fmt::format("train epoch 1 {:.4f} -> epoch {} {:.4f} (val {:.4f} -> {:.4f})",
                                                                    e.front().train_loss, e.back().epoch,
                                                                    e.back().train_loss, e.front().val_loss,
                                                                    e.back().val_loss)});
  }
  // (ii) every initialisation segments
  report.checks.push_back({"Supervised dice >= 0.70", report.supervised_dice >= 0.70,
                           fmt::format("{:.4f}", report.supervised_dice)});
  double ssl_sum = 0.0;
  for (const auto& m : report.ssl) {
    report.checks.push_back({fmt::format("{} dice >= 0.70", m.method), m.mean_dice >= 0.70,
                             fmt::format("{:.4f}", m.mean_dice)});
    ssl_sum += m.mean_dice;
  }
  // (iii) pre-training does not hurt on average
  const double ssl_mean = ssl_sum / static_cast<double>(report.ssl.size());
  report.checks.push_back({"SSL mean dice >= supervised - 0.02", ssl_mean >= report.supervised_dice - 0.02,
                           fmt::format("{:.4f} vs {:.4f}", ssl_mean, report.supervised_dice)});
  // (iv) SimSiam does not collapse
  for (const auto& m : report.ssl) {
    if (m.method != "SimSiam") continue;
    double lowest = 1.0;
    for (const auto& e : m.trace.epochs) lowest = std::min(lowest, e.collapse);
    report.checks.push_back({"SimSiam collapse metric > 0.01", !m.trace.epochs.empty() && lowest > 0.01,
                             fmt::format("min {:.4f}", lowest)});
  }

  const auto tables = report::aggregate_all(finetune::read_results(results_log));
  std::string tables_text;
  for (const auto& t : tables) tables_text += report::format_text(t);
  std::ofstream(dir / "results.txt") << tables_text;
  std::ofstream(dir / "smoke_summary.tsv") << report.summary();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(dir / "smoke_checks.txt") << format_checks(report);
  return report;
}

std::string run_smoke(const Config& cfg) {
  const auto report = smoke(cfg);
  std::string out = format_checks(report);
  if (!report.passed()) throw TrainingError("smoke checks failed:\n" + out);
  return out;
}

}  // namespace sslseg::app
