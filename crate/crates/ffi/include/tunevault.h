#ifndef TUNEVAULT_H
#define TUNEVAULT_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TvStatus {
  TV_STATUS_OK = 0,
  TV_STATUS_NULL_POINTER = 1,
  TV_STATUS_INVALID_UTF8 = 2,
  TV_STATUS_MALFORMED_JSON = 3,
  TV_STATUS_INVALID_BEAM = 4,
  TV_STATUS_UNKNOWN_TABLE = 5,
  TV_STATUS_UNKNOWN_COLUMN = 6,
  TV_STATUS_TYPE_MISMATCH = 7,
  TV_STATUS_BAD_OPERATOR = 8,
  TV_STATUS_BAD_PAGINATION = 9,
  TV_STATUS_SCHEMA_MISMATCH = 10,
  TV_STATUS_STORAGE_FAILURE = 11,
  TV_STATUS_CORRUPT = 12,
  TV_STATUS_UNKNOWN_TUNE = 13,
  TV_STATUS_UNKNOWN_SNAPSHOT = 14,
  TV_STATUS_PANIC = 99,
} TvStatus;

/**
 * Opaque handle to an open archive directory.
 */
typedef struct TvArchive TvArchive;

/**
 * Species triple: mass in u, integer charge state, kinetic energy in MeV/u.
 */
typedef struct TvBeam {
  double mass_amu;
  int64_t charge_state;
  double energy_mev_u;
} TvBeam;

typedef struct TvKinematics {
  double gamma;
  double beta;
  double beta_gamma;
  /**
   * Total momentum times c, MeV.
   */
  double pc_total_mev;
  /**
   * Magnetic rigidity, T·m.
   */
  double rigidity_tm;
} TvKinematics;

/**
 * Multiplicative factors from an archived beam to a new beam.
 */
typedef struct TvScaleFactors {
  double magnetic;
  double electrostatic;
  double rf_amplitude;
  double none;
} TvScaleFactors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *tv_last_error(void);

/**
 * Stable upper-case name of a status code. Never null.
 */
const char *tv_status_name(enum TvStatus status);

/**
 * Library version, static storage.
 */
const char *tv_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void tv_string_free(char *s);

/**
 * Opens (creating if needed) the archive rooted at `data_dir`, recovering
 * any interrupted write.
 *
 * # Safety
 * `data_dir` is a valid string; `out` is valid for writes.
 */
enum TvStatus tv_archive_open(const char *data_dir, struct TvArchive **out);

/**
 * Closes a handle. Null is ignored.
 *
 * # Safety
 * `archive` is null or an open handle not used afterwards.
 */
void tv_archive_close(struct TvArchive *archive);

/**
 * Appends one row given as a JSON object of column values (no `id`).
 *
 * # Safety
 * Pointers are valid; `out_id` may be null.
 */
enum TvStatus tv_archive_insert_json(const struct TvArchive *archive,
                                     const char *table,
                                     const char *row_json,
                                     int64_t *out_id);

/**
 * Number of rows in `table`.
 *
 * # Safety
 * Pointers are valid.
 */
enum TvStatus tv_archive_count(const struct TvArchive *archive, const char *table, uint64_t *out);

/**
 * Runs a query spec (`{"table", "filters", "sort", "limit", "offset"}`)
 * and returns `{"columns", "rows", "total_matching"}`.
 *
 * # Safety
 * Pointers are valid; `*out_json` receives a string to free with
 * [`tv_string_free`].
 */
enum TvStatus tv_query_json(const struct TvArchive *archive,
                            const char *spec_json,
                            char **out_json);

/**
 * Schema of every table as a JSON array.
 *
 * # Safety
 * `out_json` is valid for writes.
 */
enum TvStatus tv_tables_json(char **out_json);

/**
 * Archived tunes as a JSON array.
 *
 * # Safety
 * Pointers are valid.
 */
enum TvStatus tv_list_tunes_json(const struct TvArchive *archive, char **out_json);

/**
 * One tune as `{"tune", "values"}`.
 *
 * # Safety
 * Pointers are valid.
 */
enum TvStatus tv_load_tune_json(const struct TvArchive *archive, int64_t id, char **out_json);

/**
 * Relativistic kinematics of a beam.
 *
 * # Safety
 * Pointers are valid.
 */
enum TvStatus tv_beam_kinematics(const struct TvBeam *beam, struct TvKinematics *out);

/**
 * Scale factors taking setpoints archived for `old_beam` to `new_beam`.
 *
 * # Safety
 * Pointers are valid.
 */
enum TvStatus tv_scale_factors(const struct TvBeam *old_beam,
                               const struct TvBeam *new_beam,
                               struct TvScaleFactors *out);

/**
 * Kinetic energy per nucleon (MeV/u) at which the velocity reaches `beta`.
 *
 * # Safety
 * `out` is valid for writes.
 */
enum TvStatus tv_energy_at_beta(double beta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUNEVAULT_H */
