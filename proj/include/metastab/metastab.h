/* C interface to the metastab toolkit.
 *
 * Every fallible call returns an ms_status; MS_OK is zero. On failure the
 * message is available from ms_last_error() on the calling thread until the
 * next call. Strings returned through char** out-parameters are owned by the
 * caller and released with ms_string_free. Handles are released with their
 * *_free function; passing NULL to a free function is a no-op.
 *
 * States are named by their keys. State sets are JSON arrays of keys or of
 * integer indices.
 */
#ifndef METASTAB_H
#define METASTAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MS_API __declspec(dllexport)
#else
#define MS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ms_chain ms_chain;
typedef struct ms_partition ms_partition;

typedef int ms_status;

enum {
  MS_OK = 0,
  MS_INVALID_ARGUMENT = 1,
  MS_NEGATIVE_RATE = 2,
  MS_DUPLICATE_ENTRY = 3,
  MS_EMPTY_STATE_SET = 4,
  MS_REDUCIBLE = 5,
  MS_NONCONVERGENT_SERIES = 6,
  MS_SUPPORT_MISMATCH = 7,
  MS_TARGET_IS_WHOLE_SPACE = 8,
  MS_EMPTY_SUBSET = 9,
  MS_REDUCIBLE_REFLECTION = 10,
  MS_NONPOSITIVE_GAMMA = 11,
  MS_OVERLAP = 12,
  MS_NOT_REVERSIBLE = 13,
  MS_BOUNDARY_VIOLATION = 14,
  MS_NOT_A_FLOW = 15,
  MS_ETA_IN_A = 16,
  MS_PSI_ON_DELTA = 17,
  MS_NO_BOTTOMS = 18,
  MS_PRODUCT_TOO_LARGE = 19,
  MS_PARAMETER_OUT_OF_RANGE = 20,
  MS_STATE_SPACE_TOO_LARGE = 21,
  MS_SADDLE_NOT_FOUND = 22,
  MS_NON_SMOOTH_BOUNDARY = 23,
  MS_SPEC_PARSE_ERROR = 24,
  MS_TIMES_BEYOND_HORIZON = 25,
  MS_NO_EXITS_OBSERVED = 26,
  MS_IO_ERROR = 27,
  MS_UNKNOWN_CONDITION = 28,
  MS_INTERNAL = 99
};

MS_API const char* ms_version(void);
/* Symbolic name of a status, e.g. "Reducible". */
MS_API const char* ms_status_string(ms_status status);
/* Message of the last failure on this thread, "" if none. */
MS_API const char* ms_last_error(void);
MS_API void ms_string_free(char* s);

/* Chains: {"states": [...], "rates": [[from, to, rate], ...], "time_scale": x} */
MS_API ms_status ms_chain_from_json(const char* json, ms_chain** out);
MS_API ms_status ms_chain_to_json(const ms_chain* chain, char** out);
MS_API size_t ms_chain_num_states(const ms_chain* chain);
MS_API void ms_chain_free(ms_chain* chain);

MS_API ms_status ms_partition_from_json(const char* json, ms_partition** out);
MS_API ms_status ms_partition_to_json(const ms_partition* partition, char** out);
MS_API void ms_partition_free(ms_partition* partition);

/* Builds a model from TOML or JSON spec text. n_override <= 0 keeps the N
 * of the spec. Any of the outputs may be NULL. The summary holds the state
 * count, theta, well masses and diagnostics. */
MS_API ms_status ms_model_build(const char* spec_text, int n_override, ms_chain** chain,
                                ms_partition** partition, char** summary_json);

/* {"states", "mu", "reversible", "residual"} */
MS_API ms_status ms_stationary(const ms_chain* chain, char** out_json);

/* Runs one condition check. params_json may be NULL; keys t, delta,
 * epsilon, tol, c0, full_max. Unknown ids give MS_UNKNOWN_CONDITION. */
MS_API ms_status ms_check(const ms_chain* chain, const ms_partition* partition,
                          const char* condition_id, const char* params_json,
                          char** report_json);

/* Builds the model at each N (processed concurrently, reported in order)
 * and attaches the trend verdict. */
MS_API ms_status ms_check_sweep(const char* spec_text, const char* condition_id,
                                const int* ns, size_t count, const char* params_json,
                                char** report_json);

/* Limit chain on the well labels "1".."n" with the capacity cross-check. */
MS_API ms_status ms_limit_chain(const ms_chain* chain, const ms_partition* partition,
                                ms_chain** limit, char** report_json);

/* Label laws of the reduced process against a limit chain at each time, plus
 * the joint law at up to three times and the state convergence distance.
 * limit may be NULL, in which case it is estimated. init_state NULL starts
 * from a bottom of well 1. csv receives columns t, chain_0..chain_n,
 * limit_1..limit_n, tv and may be NULL. */
MS_API ms_status ms_converge(const ms_chain* chain, const ms_partition* partition,
                             const ms_chain* limit, const double* times, size_t num_times,
                             const char* init_state, char** report_json, char** csv);

/* Spectral gap, relaxation time and optionally the mixing time. */
MS_API ms_status ms_spectral(const ms_chain* chain, int with_mixing, char** out_json);

/* Cap(A, B) with the Dirichlet and Thomson values. */
MS_API ms_status ms_capacity(const ms_chain* chain, const char* set_a_json,
                             const char* set_b_json, char** out_json);

/* Monte Carlo estimate of the joint label law at the given times.
 * threads == 0 uses METASTAB_THREADS or the hardware concurrency. */
MS_API ms_status ms_simulate_fdd(const ms_chain* chain, const ms_partition* partition,
                                 const char* init_state, const double* times,
                                 size_t num_times, uint64_t seed, size_t paths,
                                 size_t threads, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
