/* C interface to the echelon two-echelon inventory simulator. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum es_status {
  ES_OK = 0,
  // A required pointer argument was null.
  ES_NULL_POINTER = 1,
  // An argument failed validation (length, range, schedule).
  ES_INVALID_ARGUMENT = 2,
  // A buffer or vector had the wrong length.
  ES_DIMENSION = 3,
  // A warehouse call arrived outside its scheduled period.
  ES_OFF_SCHEDULE = 4,
  // JSON or CSV input failed to parse.
  ES_PARSE = 5,
  // A panic was caught at the boundary.
  ES_INTERNAL = 6,
} es_status;

// Opaque simulation environment handle.
typedef struct es_env es_env;

// Opaque instance description handle.
typedef struct es_instance es_instance;

// Opaque demand or forecast trace handle.
typedef struct es_trace es_trace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, or null when
// nothing has failed yet. The pointer stays valid until the next failing
// call on the same thread.
const char *es_last_error_message(void);

// Library version as a static string; never free it.
const char *es_version(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned by an `es_*` call that
// documents [`es_string_free`] as its deallocator, or null.
void es_string_free(char *s);

// Build the desk-scale instance for a seed. Returns an owned handle.
struct es_instance *es_instance_new_desk(uint64_t seed);

// Parse an instance from its JSON form.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum es_status es_instance_from_json(const char *json, struct es_instance **out);

// Serialize an instance to JSON. The returned string is owned by the
// caller; release it with [`es_string_free`].
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum es_status es_instance_to_json(const struct es_instance *instance, char **out);

// Number of products in the instance; zero when the handle is null.
//
// # Safety
// `instance` must be a live handle or null.
size_t es_instance_num_products(const struct es_instance *instance);

// Number of stores in the instance; zero when the handle is null.
//
// # Safety
// `instance` must be a live handle or null.
size_t es_instance_num_stores(const struct es_instance *instance);

// Total simulated periods in the instance; zero when the handle is null.
//
// # Safety
// `instance` must be a live handle or null.
size_t es_instance_horizon(const struct es_instance *instance);

// Release an instance handle.
//
// # Safety
// `instance` must be an owned handle from this library, or null.
void es_instance_free(struct es_instance *instance);

// Generate the seeded demand trace for an instance.
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum es_status es_demand_generate(const struct es_instance *instance,
                                  uint64_t seed,
                                  struct es_trace **out);

// Blend a forecast trace against a demand trace at a target product-level
// correlation.
//
// # Safety
// `demand` must be a live handle and `out` a valid pointer.
enum es_status es_forecast_generate(const struct es_trace *demand,
                                    double target_r,
                                    uint64_t seed,
                                    struct es_trace **out);

// Number of periods in the trace; zero when the handle is null.
//
// # Safety
// `trace` must be a live handle or null.
size_t es_trace_periods(const struct es_trace *trace);

// Read one trace value into `out`.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum es_status es_trace_get(const struct es_trace *trace,
                            size_t period,
                            size_t store,
                            size_t product,
                            double *out);

// Release a trace handle.
//
// # Safety
// `trace` must be an owned handle from this library, or null.
void es_trace_free(struct es_trace *trace);

// Create a coupled warehouse-and-stores environment. Returns null when
// `instance` is null.
//
// # Safety
// `instance` must be a live handle or null.
struct es_env *es_env_new(const struct es_instance *instance);

// Create an environment with the warehouse bypassed: every store order is
// supplied in full and no cycle calls are expected. Returns null when
// `instance` is null.
//
// # Safety
// `instance` must be a live handle or null.
struct es_env *es_env_new_infinite(const struct es_instance *instance);

// Current period of the environment; zero when the handle is null.
//
// # Safety
// `env` must be a live handle or null.
size_t es_env_period(const struct es_env *env);

// Whether the next call must be [`es_env_begin_cycle`].
//
// # Safety
// `env` must be a live handle or null.
bool es_env_at_cycle_boundary(const struct es_env *env);

// Open a warehouse cycle. When `fill_out` is non-null it must have room
// for one value per product and receives the post-delivery fill levels.
//
// # Safety
// `env` must be a live handle; `fill_out` must be null or point to at
// least `num_products` doubles.
enum es_status es_env_begin_cycle(struct es_env *env, double *fill_out);

// Place the vendor order for the open cycle. `flags` holds one entry per
// product: nonzero orders a fill-up to capacity.
//
// # Safety
// `env` must be a live handle; `flags` must point to `flags_len` bytes.
enum es_status es_env_place_order(struct es_env *env, const uint8_t *flags, size_t flags_len);

// Advance one period. `desired` and `demand` are row-major
// `num_stores x num_products` grids. When `store_costs_out` is non-null
// it must have room for one value per store and receives each store's
// cost for the period.
//
// # Safety
// `env` must be a live handle; `desired` and `demand` must each point to
// `len` doubles; `store_costs_out` must be null or point to at least
// `num_stores` doubles.
enum es_status es_env_step(struct es_env *env,
                           const double *desired,
                           const double *demand,
                           size_t len,
                           double *store_costs_out);

// Read one store shelf level into `out`.
//
// # Safety
// `env` must be a live handle and `out` a valid pointer.
enum es_status es_env_store_level(const struct es_env *env,
                                  size_t store,
                                  size_t product,
                                  double *out);

// Digest of the full simulation state, for replay and isolation checks.
// The returned string is owned by the caller; release it with
// [`es_string_free`].
//
// # Safety
// `env` must be a live handle and `out` a valid pointer.
enum es_status es_env_state_fingerprint(const struct es_env *env, char **out);

// Release an environment handle.
//
// # Safety
// `env` must be an owned handle from this library, or null.
void es_env_free(struct es_env *env);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
