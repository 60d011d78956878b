#ifndef VMS_H
#define VMS_H

/* Generated by the vms-ffi build script; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a C API call. Anything but `Ok` leaves a message in
// [`vms_last_error_message`].
typedef enum VmsStatus {
  VMS_STATUS_OK = 0,
  // A required pointer argument was null.
  VMS_STATUS_NULL_POINTER = 1,
  // Config, shape, or value validation failed.
  VMS_STATUS_INVALID_ARGUMENT = 2,
  // The computation produced or detected invalid numbers.
  VMS_STATUS_NUMERIC_FAILURE = 3,
  // An internal panic was caught at the boundary.
  VMS_STATUS_PANIC = 4,
} VmsStatus;

// Opaque sequence-mixing block handle.
typedef struct VmsBlock VmsBlock;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the library version as a static NUL-terminated string.
const char *vms_version(void);

// Returns the message of the most recent failure on this thread. The
// pointer stays valid until the next failing call on the same thread.
// Never null; empty string when no failure was recorded.
const char *vms_last_error_message(void);

// Builds a block from a JSON config, e.g.
// `{"type":"vim","D":32,"E":2,"N":16,"conv_width":4,"seed":0}`
// (`E`, `N`, `conv_width`, `seed` optional). Returns null on failure;
// see [`vms_last_error_message`]. Release with [`vms_block_free`].
//
// # Safety
// `config_json` must be a valid NUL-terminated UTF-8 string or null.
struct VmsBlock *vms_block_new(const char *config_json);

// Releases a handle from [`vms_block_new`]. Null is a no-op.
//
// # Safety
// `block` must be a pointer returned by [`vms_block_new`] that has not
// been freed already.
void vms_block_free(struct VmsBlock *block);

// Model width D of the block; 0 for a null handle.
//
// # Safety
// `block` must be null or a live handle from [`vms_block_new`].
size_t vms_block_d_model(const struct VmsBlock *block);

// Number of learnable scalars in the block; 0 for a null handle.
//
// # Safety
// `block` must be null or a live handle from [`vms_block_new`].
size_t vms_block_param_len(const struct VmsBlock *block);

// Runs the block over a sequence. `x` and `out` are row-major `[m, D]`
// buffers of `m * vms_block_d_model(block)` doubles each; `out` is fully
// written on `Ok` and untouched otherwise. Non-finite inputs are rejected.
//
// # Safety
// `block` must be a live handle; `x` and `out` must be valid for
// `m * vms_block_d_model(block)` doubles (reads and writes respectively)
// and must not overlap.
enum VmsStatus vms_block_forward(const struct VmsBlock *block,
                                 const double *x,
                                 size_t m,
                                 double *out);

// Reports the parameter census of the block: dense projection weights
// (`static_weights`), scan-engaged weights counted once per engaged
// direction (`dynamic_weights`), and bias/step scalars (`bias`). Output
// pointers may be null to skip a field.
//
// # Safety
// `block` must be a live handle; each non-null output pointer must be
// valid for one `u64` write.
enum VmsStatus vms_block_param_counts(const struct VmsBlock *block,
                                      uint64_t *static_weights,
                                      uint64_t *dynamic_weights,
                                      uint64_t *bias);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VMS_H */
