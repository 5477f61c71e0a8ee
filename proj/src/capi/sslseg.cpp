#include "sslseg/sslseg.h"

#include "core/app/config.hpp"
#include "core/app/verbs.hpp"
#include "core/common/errors.hpp"
#include "core/common/log.hpp"
#include "core/finetune/finetune.hpp"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>

struct sslseg_config {
  sslseg::app::Config config;
};

namespace {

thread_local std::string g_last_error;

struct Verb {
  const char* name;
  std::string (*run)(const sslseg::app::Config&);
};

constexpr Verb kVerbs[] = {
    {"split", sslseg::app::run_split},       {"pretrain", sslseg::app::run_pretrain},
    {"finetune", sslseg::app::run_finetune}, {"evaluate", sslseg::app::run_evaluate},
    {"report", sslseg::app::run_report},     {"export-masks", sslseg::app::run_export_masks},
    {"smoke", sslseg::app::run_smoke},
};

sslseg_status fail(sslseg_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
sslseg_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SSLSEG_OK;
  } catch (const sslseg::ConfigError& e) {
    return fail(SSLSEG_ERR_CONFIG, e.what());
  } catch (const sslseg::ValidationError& e) {
    return fail(SSLSEG_ERR_VALIDATION, e.what());
  } catch (const sslseg::IngestionError& e) {
    return fail(SSLSEG_ERR_INGESTION, e.what());
  } catch (const sslseg::TransferError& e) {
    return fail(SSLSEG_ERR_TRANSFER, e.what());
  } catch (const sslseg::TrainingError& e) {
    return fail(SSLSEG_ERR_TRAINING, e.what());
  } catch (const sslseg::IoError& e) {
    return fail(SSLSEG_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SSLSEG_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SSLSEG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SSLSEG_ERR_INTERNAL, "unknown exception");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* sslseg_version(void) { return "0.1.0"; }

const char* sslseg_status_name(sslseg_status status) {
  switch (status) {
    case SSLSEG_OK: return "ok";
    case SSLSEG_ERR_CONFIG: return "config error";
    case SSLSEG_ERR_VALIDATION: return "validation error";
    case SSLSEG_ERR_INGESTION: return "ingestion error";
    case SSLSEG_ERR_TRANSFER: return "transfer error";
    case SSLSEG_ERR_TRAINING: return "training error";
    case SSLSEG_ERR_IO: return "io error";
    case SSLSEG_ERR_ARGUMENT: return "argument error";
    case SSLSEG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* sslseg_last_error(void) { return g_last_error.c_str(); }

sslseg_status sslseg_config_create(sslseg_config** out) {
  if (!out) return fail(SSLSEG_ERR_ARGUMENT, "null output pointer");
  return guarded([&] { *out = new sslseg_config{}; });
}

sslseg_status sslseg_config_create_smoke(sslseg_config** out) {
  if (!out) return fail(SSLSEG_ERR_ARGUMENT, "null output pointer");
  return guarded([&] { *out = new sslseg_config{sslseg::app::Config::smoke_preset()}; });
}

void sslseg_config_destroy(sslseg_config* config) { delete config; }

sslseg_status sslseg_config_load(sslseg_config* config, const char* path) {
  if (!config || !path) return fail(SSLSEG_ERR_ARGUMENT, "null config or path");
  return guarded([&] { config->config.merge_file(path); });
}

sslseg_status sslseg_config_set(sslseg_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return fail(SSLSEG_ERR_ARGUMENT, "null config, key or value");
  return guarded([&] { config->config.set(key, value); });
}

sslseg_status sslseg_config_get(const sslseg_config* config, const char* key, char* buf, size_t cap,
                                size_t* needed) {
  if (!config || !key) return fail(SSLSEG_ERR_ARGUMENT, "null config or key");
  std::string value;
  const auto st = guarded([&] { value = config->config.raw(key); });
  if (st != SSLSEG_OK) return st;
  if (needed) *needed = value.size() + 1;
  if (!buf || cap < value.size() + 1) return fail(SSLSEG_ERR_ARGUMENT, "buffer too small");
  std::memcpy(buf, value.c_str(), value.size() + 1);
  return SSLSEG_OK;
}

size_t sslseg_config_key_count(void) { return sslseg::app::schema().size(); }

const char* sslseg_config_key_name(size_t index) {
  const auto& s = sslseg::app::schema();
  return index < s.size() ? s[index].name.c_str() : nullptr;
}

const char* sslseg_config_key_help(size_t index) {
  const auto& s = sslseg::app::schema();
  return index < s.size() ? s[index].help.c_str() : nullptr;
}

size_t sslseg_verb_count(void) { return std::size(kVerbs); }

const char* sslseg_verb_name(size_t index) { return index < std::size(kVerbs) ? kVerbs[index].name : nullptr; }

sslseg_status sslseg_run(const sslseg_config* config, const char* verb, char** output) {
  if (output) *output = nullptr;
  if (!config || !verb) return fail(SSLSEG_ERR_ARGUMENT, "null config or verb");
  for (const auto& v : kVerbs) {
    if (std::strcmp(v.name, verb) != 0) continue;
    return guarded([&] {
      const std::string text = v.run(config->config);
      if (output) *output = dup(text);
    });
  }
  return fail(SSLSEG_ERR_ARGUMENT, std::string("unknown verb '") + verb + "'");
}

void sslseg_free(char* text) { std::free(text); }

void sslseg_set_log_callback(sslseg_log_fn fn, void* user) {
  if (!fn) {
    sslseg::log::set_sink({});
    return;
  }
  sslseg::log::set_sink([fn, user](sslseg::log::Level level, std::string_view msg) {
    const std::string text(msg);
    fn(static_cast<sslseg_log_level>(level), text.c_str(), user);
  });
}

void sslseg_set_log_level(sslseg_log_level level) {
  sslseg::log::set_min_level(static_cast<sslseg::log::Level>(level));
}

sslseg_status sslseg_dice(const uint8_t* pred, const uint8_t* gt, int height, int width, double* out) {
  if (!pred || !gt || !out || height <= 0 || width <= 0) return fail(SSLSEG_ERR_ARGUMENT, "bad dice arguments");
  return guarded([&] {
    sslseg::data::Mask p(height, width), g(height, width);
    const std::size_t n = static_cast<std::size_t>(height) * width;
    for (std::size_t i = 0; i < n; ++i) {
      p.values[i] = pred[i] ? 1 : 0;
      g.values[i] = gt[i] ? 1 : 0;
    }
    *out = sslseg::finetune::dice(p, g);
  });
}

}  // extern "C"
