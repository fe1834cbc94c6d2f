/*
 * evm.h - C interface to the exploratory visual modeling engine.
 *
 * All state lives behind an opaque evm_session handle. Datasets and fitted
 * models are referenced by string ids issued by the session. Structured
 * results are returned as UTF-8 JSON (or CSV) strings allocated by the
 * library; release them with evm_free.
 *
 * Every function returns an evm_status. On failure the calling thread's last
 * error is set to an ApiError JSON object ({"code", "message", "detail"}),
 * readable with evm_last_error until the next call on that thread.
 */
#ifndef EVM_EVM_H
#define EVM_EVM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EVM_API __declspec(dllexport)
#else
#define EVM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct evm_session evm_session;

typedef enum evm_status {
  EVM_OK = 0,
  EVM_PARSE_ERROR = 1,
  EVM_UNKNOWN_VARIABLE = 2,
  EVM_DOMAIN_ERROR = 3,
  EVM_FIT_NOT_CONVERGED = 4,
  EVM_UNSUPPORTED = 5,
  EVM_INTERNAL = 6,
  EVM_NOT_FOUND = 7,
  EVM_INVALID_ARGUMENT = 8
} evm_status;

EVM_API const char* evm_version(void);
EVM_API const char* evm_status_name(evm_status status);
EVM_API const char* evm_last_error(void);

/* base_seed is used by sampling calls that do not pass their own seed. */
EVM_API evm_session* evm_session_create(uint64_t base_seed);
EVM_API void evm_session_destroy(evm_session* session);

EVM_API void evm_free(char* text);

/* Loads a CSV table. id may be NULL to let the session assign one.
 * out_json: {"id", "schema"}. */
EVM_API evm_status evm_dataset_load_csv(evm_session* session, const char* csv, size_t csv_len, const char* name,
                                        const char* id, char** out_json);

/* steps_json: {"filters": [...], "transforms": [...]} or {"steps": [...]}.
 * Creates a new dataset; out_json: {"id", "schema"}. */
EVM_API evm_status evm_dataset_pipeline(evm_session* session, const char* dataset_id, const char* steps_json,
                                        char** out_json);

/* request_json: {"dataset", "family", "location", "scale"?, "label"?}.
 * A fit that does not converge still succeeds with "converged": false.
 * out_json: model summary with "model_id" and "description". */
EVM_API evm_status evm_fit(evm_session* session, const char* request_json, char** out_json);

/* Full fitted model: coefficients, covariance, log-likelihood and the
 * coefficient table. Intended for headless use only. */
EVM_API evm_status evm_model_export(evm_session* session, const char* model_id, char** out_json);

/* Observed rows plus n_draws predictive draws of one model, as JSON records. */
EVM_API evm_status evm_model_draws(evm_session* session, const char* model_id, size_t n_draws, uint64_t seed,
                                   char** out_json);

EVM_API evm_status evm_model_residuals(evm_session* session, const char* model_id, char** out_json);

/* request_json: {"dataset", "chart": {...}, "models": [ids], "n_draws", "seed"}.
 * Writes the check layout JSON and the predictive table CSV. Either output
 * pointer may be NULL. */
EVM_API evm_status evm_check(evm_session* session, const char* request_json, char** layout_json,
                             char** table_csv);

/* Routes one HTTP request through the JSON API. query excludes the '?'. */
EVM_API evm_status evm_http_handle(evm_session* session, const char* method, const char* path, const char* query,
                                   const char* body, size_t body_len, int* http_status, char** response_body);

#ifdef __cplusplus
}
#endif

#endif /* EVM_EVM_H */
