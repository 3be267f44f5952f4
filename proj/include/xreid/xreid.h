/* C interface to the cross-domain re-identification pipeline.
 *
 * Every entry point returns an xr_status; on failure xr_last_error() holds a
 * human-readable message for the calling thread until the next failing call.
 * Objects cross the boundary as opaque handles owned by the library.
 */
#ifndef XREID_H
#define XREID_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum xr_status {
    XR_OK = 0,
    XR_ERR_INVALID_ARGUMENT = 1, /* bad config value, bad call arguments */
    XR_ERR_IO = 2,               /* filesystem or parse failure */
    XR_ERR_STATE = 3,            /* missing upstream artifact, wrong mode */
    XR_ERR_NUMERIC = 4,          /* non-finite training state */
    XR_ERR_UNKNOWN = 5
} xr_status;

/* message for the most recent failure on this thread; never NULL */
const char* xr_last_error(void);

const char* xr_version(void);

/* frees strings returned through char** outputs */
void xr_string_free(char* s);

/* ---- experiment configuration ------------------------------------------ */

typedef struct xr_config xr_config;

xr_status xr_config_load(const char* path, xr_config** out);
xr_status xr_config_parse(const char* text, xr_config** out);
void xr_config_free(xr_config* cfg);

/* out_dir NULL keeps the configured directory; has_seed 0 keeps the seed */
xr_status xr_config_override(xr_config* cfg, const char* out_dir, int has_seed, uint64_t seed);

/* canonical fully-resolved rendering (defaults materialized) */
xr_status xr_config_render(const xr_config* cfg, char** out);
/* 16 hex digits over the canonical rendering */
xr_status xr_config_hash(const xr_config* cfg, char** out);

/* ---- pipeline commands --------------------------------------------------- */

xr_status xr_run_synth(const xr_config* cfg);
xr_status xr_run_train_style(const xr_config* cfg);
xr_status xr_run_generate(const xr_config* cfg);
xr_status xr_run_train(const xr_config* cfg);

typedef struct xr_ranking {
    double cmc1; /* ranks past the configured max report -1 */
    double cmc5;
    double cmc10;
    double cmc20;
    double map;
    int64_t n_queries;
    int64_t n_queries_skipped;
} xr_ranking;

/* result may be NULL when only the report file matters */
xr_status xr_run_eval(const xr_config* cfg, xr_ranking* result);
xr_status xr_run_oracle(const xr_config* cfg, xr_ranking* result);

xr_status xr_run_gradcheck(const xr_config* cfg, int64_t n_params, double eps,
                           double* max_rel_err);

/* step-decay learning rate probe; decay_period <= 0 falls back to 40 */
double xr_lr_at(int64_t epoch, double base_lr, int64_t decay_period);

#ifdef __cplusplus
}
#endif

#endif /* XREID_H */
