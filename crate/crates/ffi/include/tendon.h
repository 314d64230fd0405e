#ifndef TENDON_H
#define TENDON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TendonStatus {
  TENDON_STATUS_OK = 0,
  TENDON_STATUS_NULL_POINTER = 1,
  TENDON_STATUS_INVALID_ARGUMENT = 2,
  TENDON_STATUS_DATA_ERROR = 3,
  TENDON_STATUS_MODEL_ERROR = 4,
  TENDON_STATUS_NOT_FOUND = 5,
  TENDON_STATUS_NO_CONVERGENCE = 6,
  TENDON_STATUS_PANIC = 7,
} TendonStatus;

typedef struct TendonDataset TendonDataset;

typedef struct TendonModel TendonModel;

typedef struct TendonPlant TendonPlant;

typedef struct TendonTransferFunction TendonTransferFunction;

// Yaw `alpha` and pitch `beta` in degrees.
typedef struct TendonPose {
  double alpha;
  double beta;
} TendonPose;

// Tendon length changes.
typedef struct TendonCommand {
  double l1;
  double l2;
  double l3;
} TendonCommand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next call on this thread.
const char *tendon_last_error_message(void);

// # Safety
// `s` must come from this library or be null.
void tendon_string_free(char *s);

// Library version, static storage.
const char *tendon_version(void);

// # Safety
// `out` must be writable.
enum TendonStatus tendon_analytical_inverse(struct TendonPose pose, struct TendonCommand *out);

// # Safety
// `out` must be writable.
enum TendonStatus tendon_analytical_forward(struct TendonCommand cmd, struct TendonPose *out);

// Creates a plant from a preset name (`ideal`, `default`, `heavy`).
//
// # Safety
// `preset` must be a NUL-terminated string; `out` must be writable.
enum TendonStatus tendon_plant_new(const char *preset, struct TendonPlant **out);

// # Safety
// `plant` must be a live handle.
enum TendonStatus tendon_plant_set_noise_sigma(struct TendonPlant *plant, double sigma);

// # Safety
// `plant` must come from `tendon_plant_new` or be null.
void tendon_plant_free(struct TendonPlant *plant);

// Pose reached by the noise-free plant under `cmd`.
//
// # Safety
// `plant` must be a live handle; `out` must be writable.
enum TendonStatus tendon_plant_forward(const struct TendonPlant *plant,
                                       struct TendonCommand cmd,
                                       struct TendonPose *out);

// Command that drives the noise-free plant to `target`.
//
// # Safety
// `plant` must be a live handle; `out` must be writable.
enum TendonStatus tendon_plant_invert(const struct TendonPlant *plant,
                                      struct TendonPose target,
                                      struct TendonCommand *out);

// Sweeps the -90..90 step 10 grid through the plant.
//
// # Safety
// `plant` must be a live handle; `out` must be writable.
enum TendonStatus tendon_dataset_generate(const struct TendonPlant *plant,
                                          uint32_t replicates,
                                          uint64_t seed,
                                          struct TendonDataset **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TendonStatus tendon_dataset_read_csv(const char *path, struct TendonDataset **out);

// Writes the CSV and its `.meta.json` sidecar.
//
// # Safety
// `ds` must be a live handle; `path` a NUL-terminated string.
enum TendonStatus tendon_dataset_write_csv(const struct TendonDataset *ds, const char *path);

// Number of samples; 0 for a null handle.
//
// # Safety
// `ds` must be a live handle or null.
size_t tendon_dataset_len(const struct TendonDataset *ds);

// Copies sample `index` into `pose` and `cmd`.
//
// # Safety
// `ds` must be a live handle; `pose` and `cmd` writable.
enum TendonStatus tendon_dataset_sample(const struct TendonDataset *ds,
                                        size_t index,
                                        struct TendonPose *pose,
                                        struct TendonCommand *cmd);

// Seeded train/validation split.
//
// # Safety
// `ds` must be a live handle; `train` and `val` writable.
enum TendonStatus tendon_dataset_split(const struct TendonDataset *ds,
                                       double train_fraction,
                                       uint64_t seed,
                                       struct TendonDataset **train,
                                       struct TendonDataset **val);

// # Safety
// `ds` must come from this library or be null.
void tendon_dataset_free(struct TendonDataset *ds);

// Fits a model family (`random_forest`, `gradient_boosting`, `ridge`,
// `lasso`, `svr`, `gpr`, `bnn`, `rnn`). `keys`/`values` hold `n_overrides`
// hyperparameter overrides and may be null when `n_overrides` is 0. `val`
// may be null.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum TendonStatus tendon_model_fit(const char *family,
                                   uint64_t seed,
                                   const char *const *keys,
                                   const double *values,
                                   size_t n_overrides,
                                   const struct TendonDataset *train,
                                   const struct TendonDataset *val,
                                   struct TendonModel **out);

// Predicts `n` commands into `out`.
//
// # Safety
// `poses` must hold `n` items and `out` room for `n`.
enum TendonStatus tendon_model_predict(const struct TendonModel *model,
                                       const struct TendonPose *poses,
                                       size_t n,
                                       struct TendonCommand *out);

// Wall-clock fit time in seconds; NaN for a null handle.
//
// # Safety
// `model` must be a live handle or null.
double tendon_model_fit_seconds(const struct TendonModel *model);

// # Safety
// `model` must come from this library or be null.
void tendon_model_free(struct TendonModel *model);

// Fits a degree-1 or degree-2 polynomial to the model's predictions on the
// probe grid.
//
// # Safety
// `model` must be a live handle; `out` writable.
enum TendonStatus tendon_tf_distill_model(const struct TendonModel *model,
                                          uint32_t degree,
                                          struct TendonTransferFunction **out);

// # Safety
// `out` must be writable.
enum TendonStatus tendon_tf_distill_analytical(uint32_t degree,
                                               struct TendonTransferFunction **out);

// The published gradient-boosting coefficient block.
//
// # Safety
// `out` must be writable.
enum TendonStatus tendon_tf_reference_gradient_boosting(struct TendonTransferFunction **out);

// # Safety
// `tf` must be a live handle; `out` writable.
enum TendonStatus tendon_tf_eval(const struct TendonTransferFunction *tf,
                                 struct TendonPose pose,
                                 struct TendonCommand *out);

// Number of basis terms per output (3 or 6); 0 for a null handle.
//
// # Safety
// `tf` must be a live handle or null.
size_t tendon_tf_n_features(const struct TendonTransferFunction *tf);

// Copies the row-major 3 × n_features weights into `buf`.
//
// # Safety
// `buf` must have room for `len` doubles.
enum TendonStatus tendon_tf_coefficients(const struct TendonTransferFunction *tf,
                                         double *buf,
                                         size_t len);

// Residual RMS of the distillation fit; NaN for a null handle.
//
// # Safety
// `tf` must be a live handle or null.
double tendon_tf_residual_rms(const struct TendonTransferFunction *tf);

// Human-readable equations; free with `tendon_string_free`.
//
// # Safety
// `tf` must be a live handle; `out` writable.
enum TendonStatus tendon_tf_render(const struct TendonTransferFunction *tf, char **out);

// JSON document; free with `tendon_string_free`.
//
// # Safety
// `tf` must be a live handle; `out` writable.
enum TendonStatus tendon_tf_to_json(const struct TendonTransferFunction *tf, char **out);

// # Safety
// `json` must be a NUL-terminated string; `out` writable.
enum TendonStatus tendon_tf_from_json(const char *json, struct TendonTransferFunction **out);

// # Safety
// `tf` must come from this library or be null.
void tendon_tf_free(struct TendonTransferFunction *tf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TENDON_H */
