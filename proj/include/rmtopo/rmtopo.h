#ifndef RMTOPO_H
#define RMTOPO_H

/* C interface to the resistive-memory topology-optimization library.
 *
 * Every function returns an rmtopo_status; on failure the thread-local
 * message from rmtopo_last_error() describes the cause. Handles are opaque
 * and must be released with their matching _free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RMTOPO_API __declspec(dllexport)
#else
#define RMTOPO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rmtopo_status {
  RMTOPO_OK = 0,
  RMTOPO_ERR_GENERIC = 1,
  RMTOPO_ERR_CONFIG = 2,
  RMTOPO_ERR_MISSING_INPUT = 3,
  RMTOPO_ERR_NUMERIC = 4,
  RMTOPO_ERR_ARGUMENT = 5,
  RMTOPO_ERR_PARSE = 6,
  RMTOPO_ERR_STATE = 7,
  RMTOPO_ERR_DIMENSION = 8,
  RMTOPO_ERR_IO = 9
} rmtopo_status;

typedef struct rmtopo_config rmtopo_config;
typedef struct rmtopo_bank rmtopo_bank;

RMTOPO_API const char* rmtopo_version(void);
/* Message of the last failed call on this thread ("" if none). */
RMTOPO_API const char* rmtopo_last_error(void);
RMTOPO_API void rmtopo_string_free(char* s);

/* ---- run configuration ---- */
RMTOPO_API rmtopo_status rmtopo_config_load(const char* path, rmtopo_config** out);
/* base_dir resolves relative dataset paths; may be NULL. */
RMTOPO_API rmtopo_status rmtopo_config_parse(const char* json_text, const char* base_dir,
                                             rmtopo_config** out);
RMTOPO_API void rmtopo_config_free(rmtopo_config* cfg);
RMTOPO_API rmtopo_status rmtopo_config_set_seed(rmtopo_config* cfg, uint64_t seed);
RMTOPO_API rmtopo_status rmtopo_config_set_workers(rmtopo_config* cfg, int workers);
RMTOPO_API rmtopo_status rmtopo_config_set_epochs(rmtopo_config* cfg, int epochs);
/* "free" or "budget-matched". */
RMTOPO_API rmtopo_status rmtopo_config_set_wo_mode(rmtopo_config* cfg, const char* mode);
RMTOPO_API rmtopo_status rmtopo_config_set_budget(rmtopo_config* cfg, uint64_t budget);
/* Canonical JSON of the effective configuration; free with rmtopo_string_free. */
RMTOPO_API rmtopo_status rmtopo_config_to_json(const rmtopo_config* cfg, char** out);

/* ---- experiment commands (outputs go to out_dir) ---- */
RMTOPO_API rmtopo_status rmtopo_run_form(const rmtopo_config* cfg, const char* out_dir);
/* method: "to" (topology optimization) or "wo" (weight optimization). */
RMTOPO_API rmtopo_status rmtopo_run_train(const rmtopo_config* cfg, const char* method,
                                          const char* out_dir);
RMTOPO_API rmtopo_status rmtopo_run_eval(const rmtopo_config* cfg, const char* snapshot_dir,
                                         const char* out_dir);
RMTOPO_API rmtopo_status rmtopo_run_report(const char* const* run_dirs, size_t n_runs,
                                           const char* out_dir);
RMTOPO_API rmtopo_status rmtopo_run_export_dist(const char* bank_dir, int bins,
                                                const char* out_dir);

/* ---- single differential-pair bank ---- */
RMTOPO_API rmtopo_status rmtopo_bank_create(int rows, int cols, uint64_t seed, double beta,
                                            rmtopo_bank** out);
RMTOPO_API void rmtopo_bank_free(rmtopo_bank* bank);
/* Electroform G+, then complementary-form G-. */
RMTOPO_API rmtopo_status rmtopo_bank_form(rmtopo_bank* bank);
RMTOPO_API rmtopo_status rmtopo_bank_reset_pair(rmtopo_bank* bank, int row, int col);
RMTOPO_API rmtopo_status rmtopo_bank_set_pair(rmtopo_bank* bank, int row, int col);
/* Stored logical weight beta * (G+ - G-). */
RMTOPO_API rmtopo_status rmtopo_bank_weight(const rmtopo_bank* bank, int row, int col,
                                            double* out);
/* Noiseless or noisy bit-sliced W^T x; y must hold `cols` values. */
RMTOPO_API rmtopo_status rmtopo_bank_vmm(const rmtopo_bank* bank, const double* x, int bits,
                                         double lo, double hi, uint64_t noise_seed,
                                         int noisy, double* y);

#ifdef __cplusplus
}
#endif

#endif
