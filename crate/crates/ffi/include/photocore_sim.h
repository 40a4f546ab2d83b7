#ifndef PHOTOCORE_SIM_H
#define PHOTOCORE_SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_ARGUMENT = 2,
  PC_STATUS_SHAPE = 3,
  PC_STATUS_IO = 4,
  PC_STATUS_FORMAT = 5,
  PC_STATUS_MODEL = 6,
  PC_STATUS_CONFIG = 7,
  PC_STATUS_DOMAIN = 8,
  PC_STATUS_PANIC = 9,
  PC_STATUS_OTHER = 10,
} PcStatus;

/**
 * Bypass selector for [`pc_config_set_bypass`].
 */
typedef enum PcBypass {
  PC_BYPASS_NONE = 0,
  PC_BYPASS_INPUT_Q = 1,
  PC_BYPASS_WEIGHT_Q = 2,
  PC_BYPASS_OUTPUT_Q = 3,
  PC_BYPASS_ALL = 4,
} PcBypass;

/**
 * Opaque simulator configuration handle.
 */
typedef struct PcConfig PcConfig;

/**
 * Opaque model handle.
 */
typedef struct PcModel PcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t pc_last_error_message(char *buf, size_t len);

/**
 * Loads a model description file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PcStatus pc_model_load(const char *path, struct PcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`pc_model_load`] not yet freed.
 */
void pc_model_free(struct PcModel *model);

/**
 * Element counts of the model's input and output tensors.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum PcStatus pc_model_io_len(const struct PcModel *model, size_t *input_len, size_t *output_len);

/**
 * Default configuration: n = 64, 10/7/11 bits, gain 4.
 *
 * # Safety
 * `out` must be writable.
 */
enum PcStatus pc_config_new(struct PcConfig **out);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void pc_config_free(struct PcConfig *config);

/**
 * Sets tile size, gain and noise seed; validated on use.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum PcStatus pc_config_set(struct PcConfig *config,
                            size_t tile_size,
                            double gain,
                            uint64_t rng_seed);

/**
 * Fixed noise std in pre-ADC counts; a negative value restores the default.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum PcStatus pc_config_set_noise_sigma(struct PcConfig *config, double sigma);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum PcStatus pc_config_set_bypass(struct PcConfig *config, enum PcBypass bypass);

/**
 * Float32 forward pass.
 *
 * # Safety
 * `input` must hold `input_len` floats and `out` `out_len` floats.
 */
enum PcStatus pc_reference_forward(const struct PcModel *model,
                                   const float *input,
                                   size_t input_len,
                                   float *out,
                                   size_t out_len);

/**
 * Forward pass with declared layers on the simulated array. `sample`
 * selects the noise stream.
 *
 * # Safety
 * As [`pc_reference_forward`]; `config` must be a live handle.
 */
enum PcStatus pc_simulate_forward(const struct PcModel *model,
                                  const struct PcConfig *config,
                                  uint64_t sample,
                                  const float *input,
                                  size_t input_len,
                                  float *out,
                                  size_t out_len);

/**
 * `out[rows x cols] = W[rows x k] * X[k x cols]` on the simulated array,
 * all row-major.
 *
 * # Safety
 * `w` holds `rows * k` floats, `x` `k * cols`, `out` `rows * cols`.
 */
enum PcStatus pc_gemm(const struct PcConfig *config,
                      const float *w,
                      size_t rows,
                      size_t k,
                      const float *x,
                      size_t cols,
                      uint32_t layer,
                      uint64_t sample,
                      float *out);

/**
 * Relative array power `(G * alpha^n + beta) * n` with calibrated constants.
 *
 * # Safety
 * `out` must be writable.
 */
enum PcStatus pc_power(double gain, size_t n, double *out);

/**
 * Relative energy of one batch of the model's declared layers.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum PcStatus pc_energy(const struct PcModel *model,
                        size_t n,
                        double gain,
                        size_t batch,
                        double *out);

/**
 * Nearest bfloat16 value, ties to even.
 */
float pc_bf16_round(float x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHOTOCORE_SIM_H */
