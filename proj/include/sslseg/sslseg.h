#ifndef SSLSEG_SSLSEG_H
#define SSLSEG_SSLSEG_H

#include <stddef.h>
#include <stdint.h>

#if defined(SSLSEG_BUILDING)
#define SSLSEG_API __attribute__((visibility("default")))
#else
#define SSLSEG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sslseg_status {
  SSLSEG_OK = 0,
  SSLSEG_ERR_CONFIG = 1,     /* bad or inconsistent configuration */
  SSLSEG_ERR_VALIDATION = 2, /* argument violates a precondition */
  SSLSEG_ERR_INGESTION = 3,  /* unreadable manifest, image or checkpoint */
  SSLSEG_ERR_TRANSFER = 4,   /* checkpoint does not fit the target network */
  SSLSEG_ERR_TRAINING = 5,   /* non-finite loss or failed smoke checks */
  SSLSEG_ERR_IO = 6,         /* output could not be written */
  SSLSEG_ERR_ARGUMENT = 7,   /* null handle, unknown verb, short buffer */
  SSLSEG_ERR_INTERNAL = 8
} sslseg_status;

typedef enum sslseg_log_level {
  SSLSEG_LOG_DEBUG = 0,
  SSLSEG_LOG_INFO = 1,
  SSLSEG_LOG_WARN = 2,
  SSLSEG_LOG_ERROR = 3
} sslseg_log_level;

/* Opaque typed key/value configuration. */
typedef struct sslseg_config sslseg_config;

SSLSEG_API const char* sslseg_version(void);
SSLSEG_API const char* sslseg_status_name(sslseg_status status);
/* Message of the last failed call on this thread; never NULL. */
SSLSEG_API const char* sslseg_last_error(void);

SSLSEG_API sslseg_status sslseg_config_create(sslseg_config** out);
/* Defaults of the synthetic desk-scale pipeline. */
SSLSEG_API sslseg_status sslseg_config_create_smoke(sslseg_config** out);
SSLSEG_API void sslseg_config_destroy(sslseg_config* config);
SSLSEG_API sslseg_status sslseg_config_load(sslseg_config* config, const char* path);
/* key is "section.key"; the value is checked against the key's type. */
SSLSEG_API sslseg_status sslseg_config_set(sslseg_config* config, const char* key, const char* value);
/* Copies the value (NUL terminated) into buf. *needed receives the size
   including the terminator; a short buffer yields SSLSEG_ERR_ARGUMENT. */
SSLSEG_API sslseg_status sslseg_config_get(const sslseg_config* config, const char* key, char* buf, size_t cap,
                                           size_t* needed);
SSLSEG_API size_t sslseg_config_key_count(void);
SSLSEG_API const char* sslseg_config_key_name(size_t index);
SSLSEG_API const char* sslseg_config_key_help(size_t index);

SSLSEG_API size_t sslseg_verb_count(void);
SSLSEG_API const char* sslseg_verb_name(size_t index);
/* Runs split, pretrain, finetune, evaluate, report, export-masks or smoke.
   On success *output (may be NULL) receives text for stdout, to be released
   with sslseg_free. */
SSLSEG_API sslseg_status sslseg_run(const sslseg_config* config, const char* verb, char** output);
SSLSEG_API void sslseg_free(char* text);

typedef void (*sslseg_log_fn)(sslseg_log_level level, const char* message, void* user);
/* NULL restores logging to stderr. */
SSLSEG_API void sslseg_set_log_callback(sslseg_log_fn fn, void* user);
SSLSEG_API void sslseg_set_log_level(sslseg_log_level level);

/* Dice coefficient of two binary h x w masks (nonzero = foreground). */
SSLSEG_API sslseg_status sslseg_dice(const uint8_t* pred, const uint8_t* gt, int height, int width, double* out);

#ifdef __cplusplus
}
#endif

#endif /* SSLSEG_SSLSEG_H */
