/* C API for the class-aware regularization engine.
 *
 * All functions return a car_status code; on failure car_last_error() gives a
 * human-readable message for the calling thread. Handles are opaque and must
 * be released with their destroy function.
 */

#ifndef CAR_CAR_H
#define CAR_CAR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum car_status {
    CAR_OK = 0,
    CAR_ERR_INVALID_ARGUMENT = 1,
    CAR_ERR_IO = 2,
    CAR_ERR_RUNTIME = 3
} car_status;

/* Flat key/value experiment configuration ("key = value" files, every key
 * overridable with car_config_set). */
typedef struct car_config car_config;

car_status car_config_create(car_config** out);
void car_config_destroy(car_config* cfg);
car_status car_config_load_file(car_config* cfg, const char* path);
car_status car_config_set(car_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncating). Returns
 * CAR_ERR_INVALID_ARGUMENT when the key is unset. */
car_status car_config_get(const car_config* cfg, const char* key, char* buf, size_t buflen);

/* Message describing the last failure on this thread. */
const char* car_last_error(void);

/* Writes a synthetic dataset (PPM images, PGM masks, index.csv) to out_dir. */
car_status car_generate_dataset(const car_config* cfg, const char* out_dir);

/* Trains on the `train` split of data_dir; writes the checkpoint and the
 * per-iteration loss CSV (either path may be NULL to skip). */
car_status car_train(const car_config* cfg, const char* data_dir, const char* checkpoint_path,
                     const char* loss_csv_path);

/* Evaluates mIOU on a split ("train", "test_common", "test_rare"); writes the
 * per-class IOU CSV when out_csv is non-NULL and stores mIOU in *miou. */
car_status car_evaluate(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                        const char* split, const char* out_csv, double* miou);

/* Runs the finite-difference gradient-check suite (>=20 random instances at
 * 64-bit); stores the max relative error in *max_rel_error. */
car_status car_gradcheck(unsigned seed, double* max_rel_error);

/* Class dependency map over a split; writes <out_prefix>.ppm/.csv when
 * out_prefix is non-NULL and stores the mean off-diagonal similarity in
 * *mean_off_diagonal. use_raw_dot selects raw dot products over cosine. */
car_status car_dependency_map(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                              const char* split, const char* out_prefix, int use_raw_dot,
                              double* mean_off_diagonal);

/* Pixel relation map of one sample against an anchor pixel; writes
 * <out_prefix>.ppm/.csv. */
car_status car_relation_map(const car_config* cfg, const char* checkpoint_path, const char* data_dir,
                            const char* split, int sample_index, int anchor_row, int anchor_col,
                            const char* out_prefix);

#ifdef __cplusplus
}
#endif

#endif /* CAR_CAR_H */
