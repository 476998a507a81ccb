/* romx - recurrent risk model + attribution toolkit, C interface.
 *
 * Every function returning int uses exit-code conventions: 0 success,
 * 1 runtime failure, 2 usage error. On failure romx_last_error() returns a
 * one-line description (thread-local storage).
 */
#ifndef ROMX_H
#define ROMX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum { ROMX_OK = 0, ROMX_ERR_RUNTIME = 1, ROMX_ERR_USAGE = 2 };

const char* romx_version(void);
const char* romx_last_error(void);

/* Pipeline stages. `options_json` is a JSON document; keys are documented in
 * the README. Stages: synth, preprocess, train, evaluate, explain, aggregate,
 * report, timing. */
int romx_run_stage(const char* stage, const char* options_json);
int romx_synth(const char* options_json);
int romx_preprocess(const char* options_json);
int romx_train(const char* options_json);
int romx_evaluate(const char* options_json);
int romx_explain_stage(const char* options_json);
int romx_aggregate(const char* options_json);
int romx_report(const char* options_json);
int romx_timing(const char* options_json);

/* Opaque handles over in-memory objects. */
typedef struct romx_model romx_model;
typedef struct romx_matrix romx_matrix;
typedef struct romx_attribution romx_attribution;

int romx_model_open(const char* manifest_path, romx_model** out);
void romx_model_close(romx_model* model);
int romx_model_input_size(const romx_model* model, int32_t* out);

int romx_matrix_open(const char* manifest_path, romx_matrix** out);
void romx_matrix_close(romx_matrix* matrix);
int romx_matrix_dims(const romx_matrix* matrix, int32_t* n_features, int32_t* t_hours);

/* Per-timestep mortality probabilities; `trajectory` must hold t_hours
 * doubles. */
int romx_predict(const romx_model* model, const romx_matrix* matrix, double* trajectory,
                 size_t len);

/* method: "lbm" or "kshap"; config_json may be NULL for defaults. */
int romx_explain(const romx_model* model, const romx_matrix* matrix, const char* method,
                 const char* config_json, romx_attribution** out);
void romx_attribution_close(romx_attribution* attribution);
int romx_attribution_dims(const romx_attribution* attribution, int32_t* n_features,
                          int32_t* t_hours);
/* row-major N x T copy into buf */
int romx_attribution_values(const romx_attribution* attribution, double* buf, size_t len);
int romx_attribution_converged(const romx_attribution* attribution, int32_t* out);
int romx_attribution_save(const romx_attribution* attribution, const char* manifest_path);

#ifdef __cplusplus
}
#endif

#endif /* ROMX_H */
