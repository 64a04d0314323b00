/* SPDX-License-Identifier: MIT OR Apache-2.0 */
/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef LAYERTRACER_H
#define LAYERTRACER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Architecture ids, matching the weight-file header.
#define LT_ARCH_DECODER 0

#define LT_ARCH_LINEAR 1

#define LT_ARCH_HYBRID 2

// Result codes.
typedef enum LtStatus {
  LT_STATUS_OK = 0,
  LT_STATUS_NULL_POINTER = 1,
  LT_STATUS_INVALID_ARGUMENT = 2,
  LT_STATUS_IO = 3,
  // Malformed weight file: bad magic, version, checksum, truncation or shape.
  LT_STATUS_FORMAT = 4,
  // The analysis could not produce a result for this input.
  LT_STATUS_ANALYSIS = 5,
  // The requested value is not defined (e.g. LRS of a one-layer scan).
  LT_STATUS_UNDEFINED = 6,
  LT_STATUS_PANIC = 7,
} LtStatus;

// Opaque result of a two-phase analysis.
typedef struct LtAnalysis LtAnalysis;

// Opaque model handle.
typedef struct LtModel LtModel;

// Model dimensions. `hybrid_pattern` (e.g. `"AAAL"`, cycled to `n_layers`)
// is read only when `arch` is `LT_ARCH_HYBRID`.
typedef struct LtSpec {
  uint8_t arch;
  uint32_t n_layers;
  uint32_t d_model;
  uint32_t n_heads;
  uint32_t d_ff;
  uint32_t vocab_size;
  uint32_t max_seq;
  const char *hybrid_pattern;
} LtSpec;

// Analysis settings.
typedef struct LtConfig {
  uint32_t top_k;
  double mask_fraction;
  double noise_std;
  uint64_t seed;
} LtConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// NUL-terminated library version. Static; do not free.
const char *lt_version(void);

// Message for the last failed call on this thread, or `""`. Valid until the
// next call into the library on the same thread.
const char *lt_last_error_message(void);

// Reference dimensions: 12 layers, d_model 64, 4 heads, d_ff 128, vocab 256,
// max_seq 128.
struct LtSpec lt_spec_reference(uint8_t arch);

// Default settings: top-10, full mask, no noise, seed 0.
struct LtConfig lt_config_default(void);

float lt_default_plant_strength(uint32_t d_model);

// Randomly initialized model.
//
// # Safety
// `spec` must point to a valid `LtSpec`; `out` must be writable.
enum LtStatus lt_model_init(const struct LtSpec *spec, uint64_t seed, struct LtModel **out);

// Model whose task particle and vulnerable layer are both `layer` (1-based),
// boosting `target_token`.
//
// # Safety
// As for [`lt_model_init`].
enum LtStatus lt_model_plant(const struct LtSpec *spec,
                             uint32_t layer,
                             uint32_t target_token,
                             float strength,
                             uint64_t seed,
                             struct LtModel **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LtStatus lt_model_load(const char *path, struct LtModel **out);

// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum LtStatus lt_model_save(const struct LtModel *model, const char *path);

// Number of layers, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
uint32_t lt_model_n_layers(const struct LtModel *model);

// # Safety
// `model` must be null or come from this library, and not be used afterwards.
void lt_model_free(struct LtModel *model);

// Both phases over token ids. A null `config` means [`lt_config_default`].
//
// # Safety
// `tokens` must point to `n_tokens` readable ids; other pointers as above.
enum LtStatus lt_analyze(const struct LtModel *model,
                         const uint32_t *tokens,
                         size_t n_tokens,
                         const struct LtConfig *config,
                         struct LtAnalysis **out);

// Both phases over the UTF-8 bytes of `text`, one token per byte.
//
// # Safety
// `text` must be NUL-terminated; other pointers as for [`lt_analyze`].
enum LtStatus lt_analyze_text(const struct LtModel *model,
                              const char *text,
                              const struct LtConfig *config,
                              struct LtAnalysis **out);

// # Safety
// `analysis` must be null or come from this library.
uint32_t lt_analysis_target_token(const struct LtAnalysis *analysis);

// 1-based particle layer, or 0 for a null handle.
//
// # Safety
// `analysis` must be null or come from this library.
uint32_t lt_analysis_particle_layer(const struct LtAnalysis *analysis);

// # Safety
// `analysis` must be null or come from this library.
double lt_analysis_particle_ratio(const struct LtAnalysis *analysis);

// 1-based vulnerable layer, or 0 for a null handle.
//
// # Safety
// `analysis` must be null or come from this library.
uint32_t lt_analysis_vulnerable_layer(const struct LtAnalysis *analysis);

// Whether no layer moved the output distribution.
//
// # Safety
// `analysis` must be null or come from this library.
bool lt_analysis_degenerate(const struct LtAnalysis *analysis);

// Number of scanned layers, or 0 for a null handle.
//
// # Safety
// `analysis` must be null or come from this library.
uint32_t lt_analysis_n_layers(const struct LtAnalysis *analysis);

// # Safety
// `analysis` must come from this library; `out` must be writable.
enum LtStatus lt_analysis_lrs(const struct LtAnalysis *analysis, double *out);

// JS divergence at 1-based `layer`.
//
// # Safety
// `analysis` must come from this library; `out` must be writable.
enum LtStatus lt_analysis_js(const struct LtAnalysis *analysis, uint32_t layer, double *out);

// Logit-lens probability of the target token at 1-based `layer`.
//
// # Safety
// `analysis` must come from this library; `out` must be writable.
enum LtStatus lt_analysis_target_prob(const struct LtAnalysis *analysis,
                                      uint32_t layer,
                                      double *out);

// Per-prompt JSON report. Free the string with [`lt_string_free`].
//
// # Safety
// `analysis` must come from this library; `out` must be writable.
enum LtStatus lt_analysis_to_json(const struct LtAnalysis *analysis, char **out);

// # Safety
// `analysis` must be null or come from this library, and not be used afterwards.
void lt_analysis_free(struct LtAnalysis *analysis);

// # Safety
// `s` must be null or a string returned by this library.
void lt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYERTRACER_H */
