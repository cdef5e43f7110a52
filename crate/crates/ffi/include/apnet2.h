#ifndef APNET2_H
#define APNET2_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Model size.
 */
typedef enum {
  APNET2_PRESET_FULL = 0,
  APNET2_PRESET_DESK = 1,
} Apnet2Preset;

/**
 * Result code of every fallible call.
 */
typedef enum {
  APNET2_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  APNET2_STATUS_NULL_POINTER = 1,
  /**
   * Bad length, size or preset value.
   */
  APNET2_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The output buffer is smaller than the required length.
   */
  APNET2_STATUS_BUFFER_TOO_SMALL = 3,
  /**
   * File could not be opened or read.
   */
  APNET2_STATUS_IO = 4,
  /**
   * Malformed or incompatible file contents.
   */
  APNET2_STATUS_FORMAT = 5,
  /**
   * Non-finite input or output.
   */
  APNET2_STATUS_NUMERIC = 6,
  /**
   * Internal failure; the message carries details.
   */
  APNET2_STATUS_INTERNAL = 7,
} Apnet2Status;

/**
 * Inference handle: configuration, mel filterbank and generator weights.
 */
typedef struct Apnet2Vocoder Apnet2Vocoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *apnet2_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *apnet2_version(void);

/**
 * Freshly initialized (untrained) vocoder of the given preset.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
Apnet2Status apnet2_vocoder_new(Apnet2Preset preset, uint64_t seed, Apnet2Vocoder **out);

/**
 * Vocoder with the generator weights and configuration of a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be valid for one write.
 */
Apnet2Status apnet2_vocoder_load(const char *path, Apnet2Vocoder **out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `v` must come from `apnet2_vocoder_new`/`apnet2_vocoder_load` and not be used afterwards.
 */
void apnet2_vocoder_free(Apnet2Vocoder *v);

/**
 * Sample rate in Hz, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
uint32_t apnet2_vocoder_sample_rate(const Apnet2Vocoder *v);

/**
 * Mel bands per frame, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
size_t apnet2_vocoder_n_mels(const Apnet2Vocoder *v);

/**
 * Samples per frame, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
size_t apnet2_vocoder_hop(const Apnet2Vocoder *v);

/**
 * Frame count of the mel of an `n_samples` waveform, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
size_t apnet2_vocoder_frames_for(const Apnet2Vocoder *v, size_t n_samples);

/**
 * Log-mel spectrogram of `samples` into `mel_out` (`frames * n_mels` values);
 * the frame count is written to `frames_out`.
 *
 * # Safety
 * `samples` must hold `n_samples` floats and `mel_out` `mel_capacity` floats.
 */
Apnet2Status apnet2_vocoder_mel(const Apnet2Vocoder *v,
                                const float *samples,
                                size_t n_samples,
                                float *mel_out,
                                size_t mel_capacity,
                                size_t *frames_out);

/**
 * Waveform for `frames` mel frames (`frames * hop` samples) into `wave_out`.
 *
 * # Safety
 * `mel` must hold `frames * n_mels` floats and `wave_out` `wave_capacity` floats.
 */
Apnet2Status apnet2_vocoder_generate(const Apnet2Vocoder *v,
                                     const float *mel,
                                     size_t frames,
                                     float *wave_out,
                                     size_t wave_capacity);

/**
 * Principal phase of `re + i·im` in `(-π, π]`, with `phi(0, 0) = 0`.
 */
double apnet2_phi(double re, double im);

/**
 * Distance of `x` to the nearest multiple of `2π`, in `[0, π]`.
 */
double apnet2_anti_wrap(double x);

/**
 * Signal-to-noise ratio in dB of `estimate` against `reference` (both `n` samples).
 *
 * # Safety
 * Both arrays must hold `n` floats; `out` must be valid for one write.
 */
Apnet2Status apnet2_snr(const float *reference, const float *estimate, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APNET2_H */
