#ifndef KAMSTARK_KAMSTARK_H
#define KAMSTARK_KAMSTARK_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ks_status {
  KS_OK = 0,
  KS_ERR_BOUND = 1,     /* an asserted bound failed in strict mode */
  KS_ERR_USAGE = 2,     /* unparsable JSON or missing command */
  KS_ERR_INVALID = 3,   /* unknown option, malformed value or argument outside a precondition */
  KS_ERR_IO = 4,
  KS_ERR_NUMERIC = 5,
  KS_ERR_RESONANCE = 6,
  KS_ERR_INTERNAL = 7
} ks_status;

typedef struct ks_model ks_model;
typedef struct ks_diagonalization ks_diagonalization;
typedef struct ks_result ks_result;

const char* ks_version(void);
/* Message of the last failed call on this thread; empty if none. */
const char* ks_last_error(void);
const char* ks_usage(void);
const char* ks_status_name(ks_status s);

/* Disordered Stark lattice on sites lo..hi. */
ks_status ks_model_create(int lo, int hi, double delta, uint64_t seed, ks_model** out);
void ks_model_destroy(ks_model* m);
ks_status ks_model_disorder(const ks_model* m, int site, double* out);

ks_status ks_diagonalize(const ks_model* m, double target, ks_diagonalization** out);
void ks_diagonalization_destroy(ks_diagonalization* d);
ks_status ks_diagonalization_eigenvalue(const ks_diagonalization* d, int site, double* out);
ks_status ks_diagonalization_steps(const ks_diagonalization* d, int* out);
/* 1 when every bound verdict passed, 0 otherwise. */
int ks_diagonalization_all_pass(const ks_diagonalization* d);

/* Runs one subcommand described by a JSON object with a "command" key. */
ks_status ks_run(const char* config_json, ks_result** out);
void ks_result_destroy(ks_result* r);
/* 0 when every asserted bound holds, 1 otherwise. */
int ks_result_exit_code(const ks_result* r);
/* JSON summary of the run. */
const char* ks_result_summary(const ks_result* r);

#ifdef __cplusplus
}
#endif

#endif
