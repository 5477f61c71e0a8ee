// Command-line front end over the C API.
#include "sslseg/sslseg.h"

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kUsageError = 2;

struct ConfigDeleter {
  void operator()(sslseg_config* c) const { sslseg_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<sslseg_config, ConfigDeleter>;

int report_failure(sslseg_status st) {
  std::fprintf(stderr, "sslseg: %s: %s\n", sslseg_status_name(st), sslseg_last_error());
  return st == SSLSEG_ERR_ARGUMENT ? kUsageError : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pre-training and lesion segmentation toolkit", "sslseg"};
  app.set_version_flag("--version", sslseg_version());
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  bool verbose = false, quiet = false;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  std::map<std::string, std::string> overrides;
  for (std::size_t i = 0; i < sslseg_config_key_count(); ++i) {
    const std::string key = sslseg_config_key_name(i);
    app.add_option_function<std::string>(
           "--" + key, [key, &overrides](const std::string& v) { overrides[key] = v; }, sslseg_config_key_help(i))
        ->group("Config keys");
  }

  const std::map<std::string, std::string> verb_help = {
      {"split", "partition BUS ids and list the pre-training corpus"},
      {"pretrain", "self-supervised pre-training on the configured corpus"},
      {"finetune", "fine-tune (or train from scratch) and log test Dice"},
      {"evaluate", "Dice of saved fine-tuned weights on val and test"},
      {"report", "aggregate the results log into tables"},
      {"export-masks", "write input / ground truth / prediction panels"},
      {"smoke", "full synthetic pipeline with acceptance checks"},
  };
  std::string verb;
  for (std::size_t i = 0; i < sslseg_verb_count(); ++i) {
    const std::string name = sslseg_verb_name(i);
    const auto it = verb_help.find(name);
    app.add_subcommand(name, it == verb_help.end() ? "" : it->second)->callback([&verb, name] { verb = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  if (verbose) sslseg_set_log_level(SSLSEG_LOG_DEBUG);
  if (quiet) sslseg_set_log_level(SSLSEG_LOG_WARN);

  sslseg_config* raw = nullptr;
  sslseg_status st = verb == "smoke" ? sslseg_config_create_smoke(&raw) : sslseg_config_create(&raw);
  if (st != SSLSEG_OK) return report_failure(st);
  ConfigPtr config(raw);
  if (!config_path.empty() && (st = sslseg_config_load(config.get(), config_path.c_str())) != SSLSEG_OK) {
    return report_failure(st);
  }
  for (const auto& [key, value] : overrides) {
    if ((st = sslseg_config_set(config.get(), key.c_str(), value.c_str())) != SSLSEG_OK) return report_failure(st);
  }

  char* output = nullptr;
  st = sslseg_run(config.get(), verb.c_str(), &output);
  if (output) {
    std::fputs(output, stdout);
    sslseg_free(output);
  }
  return st == SSLSEG_OK ? 0 : report_failure(st);
}
