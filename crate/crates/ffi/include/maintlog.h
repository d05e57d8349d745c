#ifndef MAINTLOG_H
#define MAINTLOG_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Values 2 to 5 match the CLI exit codes.
typedef enum MlStatus {
  ML_STATUS_OK = 0,
  // Null pointer, invalid UTF-8 or an out-of-range value.
  ML_STATUS_INVALID_ARGUMENT = 1,
  ML_STATUS_CONFIG = 2,
  ML_STATUS_VALIDATION = 3,
  ML_STATUS_PROVIDER = 4,
  ML_STATUS_RETRIES_EXHAUSTED = 5,
  // A Rust panic was caught at the boundary.
  ML_STATUS_INTERNAL = 6,
} MlStatus;

typedef enum MlTask {
  ML_TASK_FAILURE_MODES = 0,
  ML_TASK_CAUSAL = 1,
  ML_TASK_AUDIT = 2,
} MlTask;

// Opaque canonical corpus.
typedef struct MlCorpus MlCorpus;

// Opaque farm-id glossary.
typedef struct MlGlossary MlGlossary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread; do not free.
const char *ml_last_error(void);

// Library version as a static string; do not free.
const char *ml_version(void);

// # Safety
// `s` is null or a string returned by this library, not yet freed.
void ml_string_free(char *s);

// Reads a raw operator table. `mapping_path` may be null for identity column names.
//
// # Safety
// String arguments are null or NUL-terminated; `out` is valid for writes.
enum MlStatus ml_corpus_ingest(const char *table_path,
                               const char *mapping_path,
                               struct MlCorpus **out);

// Loads a canonical corpus file.
//
// # Safety
// `path` is NUL-terminated; `out` is valid for writes.
enum MlStatus ml_corpus_load(const char *path, struct MlCorpus **out);

// # Safety
// `corpus` is a live handle; `path` is NUL-terminated.
enum MlStatus ml_corpus_save(const struct MlCorpus *corpus, const char *path);

// Number of logs; 0 for a null handle.
//
// # Safety
// `corpus` is null or a live handle.
uintptr_t ml_corpus_len(const struct MlCorpus *corpus);

// # Safety
// `corpus` is null or a handle not yet freed.
void ml_corpus_free(struct MlCorpus *corpus);

// Filters, cleans and anonymizes with the default policy. Produces a new
// corpus and its glossary; the input handle is left untouched.
//
// # Safety
// `corpus` is a live handle; both outputs are valid for writes.
enum MlStatus ml_prepare(const struct MlCorpus *corpus,
                         struct MlCorpus **out_corpus,
                         struct MlGlossary **out_glossary);

// Two-letter code of a raw farm id.
//
// # Safety
// `glossary` is a live handle; `farm_id` is NUL-terminated; `out` is valid for writes.
enum MlStatus ml_glossary_code(const struct MlGlossary *glossary, const char *farm_id, char **out);

// Raw farm id behind a two-letter code.
//
// # Safety
// `glossary` is a live handle; `code` is NUL-terminated; `out` is valid for writes.
enum MlStatus ml_glossary_farm(const struct MlGlossary *glossary, const char *code, char **out);

// The glossary as a `code,farm_id` CSV table.
//
// # Safety
// `glossary` is a live handle; `out` is valid for writes.
enum MlStatus ml_glossary_to_csv(const struct MlGlossary *glossary, char **out);

// # Safety
// `glossary` is null or a handle not yet freed.
void ml_glossary_free(struct MlGlossary *glossary);

// Runs one analysis and writes the report envelope as JSON to `out_json`.
//
// `subject` is the subsystem name for failure modes, an optional turbine id
// for causal analysis (null selects the highest-frequency turbine) and
// ignored for audits. `profile` names a provider profile (null means the
// offline mock). `sample_fraction` in (0, 1) samples the corpus for audits;
// 0 or 1 analyses everything.
//
// # Safety
// `corpus` is a live handle; string arguments are null or NUL-terminated;
// `out_json` is valid for writes.
enum MlStatus ml_analyze(const struct MlCorpus *corpus,
                         enum MlTask task,
                         const char *subject,
                         const char *profile,
                         double sample_fraction,
                         uint64_t seed,
                         char **out_json);

// Renders a report envelope (as produced by [`ml_analyze`]) to Markdown.
//
// # Safety
// `report_json` is NUL-terminated; `out` is valid for writes.
enum MlStatus ml_report_markdown(const char *report_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAINTLOG_H */
