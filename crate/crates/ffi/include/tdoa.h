#ifndef TDOA_H
#define TDOA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes of all fallible functions.
 */
typedef enum TdoaStatus {
  TDOA_STATUS_OK = 0,
  TDOA_STATUS_NULL_POINTER = 1,
  TDOA_STATUS_INVALID_ARGUMENT = 2,
  TDOA_STATUS_LENGTH_MISMATCH = 3,
  TDOA_STATUS_DIMENSION_MISMATCH = 4,
  TDOA_STATUS_NON_FINITE = 5,
  TDOA_STATUS_RANK_DEFICIENT = 6,
  TDOA_STATUS_NOT_SPANNING = 7,
  TDOA_STATUS_THEOREM_VIOLATION = 8,
  TDOA_STATUS_NO_REAL_SOLUTION = 9,
  TDOA_STATUS_DEGENERATE_MIRROR = 10,
  TDOA_STATUS_BUDGET_EXCEEDED = 11,
  TDOA_STATUS_OUT_OF_RANGE = 12,
  TDOA_STATUS_PANIC = 13,
} TdoaStatus;

/**
 * Which solver route produced a result.
 */
typedef enum TdoaSolvePath {
  TDOA_SOLVE_PATH_FULL_RANK = 0,
  TDOA_SOLVE_PATH_QUADRATIC = 1,
} TdoaSolvePath;

/**
 * Detected events of a matching run.
 */
typedef struct TdoaMatchReport TdoaMatchReport;

/**
 * Per-sensor reception lists.
 */
typedef struct TdoaReceptionTable TdoaReceptionTable;

/**
 * Planar walls and a loudspeaker.
 */
typedef struct TdoaRoom TdoaRoom;

/**
 * Sensor positions.
 */
typedef struct TdoaSensorArray TdoaSensorArray;

/**
 * Candidates of one closed-form solve.
 */
typedef struct TdoaSolveResult TdoaSolveResult;

/**
 * Walls recovered from echoes.
 */
typedef struct TdoaWallList TdoaWallList;

/**
 * Matching parameters; obtain defaults from [`tdoa_match_config_default`].
 */
typedef struct TdoaMatchConfig {
  double residual_threshold;
  double rank_tol;
  /**
   * Fit tolerance relative to the sensor diameter; non-positive disables
   * the fit check.
   */
  double fit_tol_rel;
  int32_t keep_ambiguous;
  uint64_t budget;
} TdoaMatchConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *tdoa_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tdoa_version(void);

/**
 * Creates an array of `count` sensors in dimension `dim` from `count × dim`
 * row-major coordinates.
 *
 * # Safety
 * `coords` must point to `count * dim` doubles; `out_array` must be writable.
 */
enum TdoaStatus tdoa_sensor_array_new(size_t dim,
                                      size_t count,
                                      const double *coords,
                                      struct TdoaSensorArray **out_array);

/**
 * # Safety
 * `array` must be null or a handle from [`tdoa_sensor_array_new`].
 */
void tdoa_sensor_array_free(struct TdoaSensorArray *array);

/**
 * Spatial dimension, or 0 for a null handle.
 *
 * # Safety
 * `array` must be null or a live handle.
 */
size_t tdoa_sensor_array_dim(const struct TdoaSensorArray *array);

/**
 * Number of sensors, or 0 for a null handle.
 *
 * # Safety
 * `array` must be null or a live handle.
 */
size_t tdoa_sensor_array_len(const struct TdoaSensorArray *array);

/**
 * Geometry summary. `condition_ok` receives 1, 0, or -1 when the
 * sign-pattern condition does not apply (sensor count other than dim + 2).
 *
 * # Safety
 * `array` must be a live handle; output pointers may be null.
 */
enum TdoaStatus tdoa_check_geometry(const struct TdoaSensorArray *array,
                                    double tol,
                                    int32_t *noncoplanar,
                                    int32_t *condition_ok,
                                    size_t *failing_patterns);

/**
 * Solves for the emission event of `count` reception times (one per
 * sensor). A non-positive `rank_tol` selects the default.
 *
 * # Safety
 * `array` must be a live handle, `times` must point to `count` doubles and
 * `out_result` must be writable.
 */
enum TdoaStatus tdoa_solve(const struct TdoaSensorArray *array,
                           const double *times,
                           size_t count,
                           double rank_tol,
                           struct TdoaSolveResult **out_result);

/**
 * # Safety
 * `result` must be null or a handle from [`tdoa_solve`].
 */
void tdoa_solve_result_free(struct TdoaSolveResult *result);

/**
 * # Safety
 * `result` must be a live handle; output pointers may be null.
 */
enum TdoaStatus tdoa_solve_result_info(const struct TdoaSolveResult *result,
                                       enum TdoaSolvePath *path,
                                       size_t *rank_of_a,
                                       size_t *candidates);

/**
 * Candidate `index` (ascending emission time). `position` must hold `dim`
 * doubles.
 *
 * # Safety
 * `result` must be a live handle; `position` must be null or writable for
 * `dim` doubles; other output pointers may be null.
 */
enum TdoaStatus tdoa_solve_result_candidate(const struct TdoaSolveResult *result,
                                            size_t index,
                                            double *time,
                                            double *position,
                                            int32_t *spurious);

/**
 * Creates a table with `sensors` empty lists.
 *
 * # Safety
 * `out_table` must be writable.
 */
enum TdoaStatus tdoa_reception_table_new(size_t sensors, struct TdoaReceptionTable **out_table);

/**
 * Adds a reception time to a sensor's list; near-duplicates are merged.
 *
 * # Safety
 * `table` must be a live handle.
 */
enum TdoaStatus tdoa_reception_table_push(struct TdoaReceptionTable *table,
                                          size_t sensor,
                                          double time);

/**
 * Number of times recorded for `sensor`, or 0 if out of range.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t tdoa_reception_table_len(const struct TdoaReceptionTable *table, size_t sensor);

/**
 * # Safety
 * `table` must be null or a handle from this library.
 */
void tdoa_reception_table_free(struct TdoaReceptionTable *table);

struct TdoaMatchConfig tdoa_match_config_default(void);

/**
 * Runs event matching. A null `config` uses the defaults.
 *
 * # Safety
 * `array` and `table` must be live handles; `config` may be null;
 * `out_report` must be writable.
 */
enum TdoaStatus tdoa_match_events(const struct TdoaSensorArray *array,
                                  const struct TdoaReceptionTable *table,
                                  const struct TdoaMatchConfig *config,
                                  struct TdoaMatchReport **out_report);

/**
 * # Safety
 * `report` must be null or a handle from [`tdoa_match_events`].
 */
void tdoa_match_report_free(struct TdoaMatchReport *report);

/**
 * Tuple counters of a report. Output pointers may be null.
 *
 * # Safety
 * `report` must be a live handle.
 */
enum TdoaStatus tdoa_match_report_counts(const struct TdoaMatchReport *report,
                                         size_t *events,
                                         uint64_t *candidate_tuples,
                                         uint64_t *rejected_tuples,
                                         uint64_t *accepted_tuples);

/**
 * Event `index` in (time, position) order. `position` must hold `dim`
 * doubles.
 *
 * # Safety
 * `report` must be a live handle; `position` must be null or writable for
 * `dim` doubles; other output pointers may be null.
 */
enum TdoaStatus tdoa_match_report_event(const struct TdoaMatchReport *report,
                                        size_t index,
                                        double *time,
                                        double *position,
                                        double *residual,
                                        int32_t *ambiguous);

/**
 * Creates a room from `wall_count` normals (`wall_count × dim`, row-major)
 * and offsets; wall `k` is `{p : normal_k · p = offset_k}`.
 *
 * # Safety
 * `loudspeaker` must hold `dim` doubles, `normals` `wall_count * dim`,
 * `offsets` `wall_count`; `out_room` must be writable.
 */
enum TdoaStatus tdoa_room_new(size_t dim,
                              const double *loudspeaker,
                              size_t wall_count,
                              const double *normals,
                              const double *offsets,
                              struct TdoaRoom **out_room);

/**
 * # Safety
 * `room` must be null or a handle from [`tdoa_room_new`].
 */
void tdoa_room_free(struct TdoaRoom *room);

/**
 * Simulates first-order echoes (and optionally the direct sound) into a new
 * reception table.
 *
 * # Safety
 * `room` and `array` must be live handles; `out_table` must be writable.
 */
enum TdoaStatus tdoa_simulate_echoes(const struct TdoaRoom *room,
                                     const struct TdoaSensorArray *array,
                                     double emission_time,
                                     int32_t include_direct,
                                     struct TdoaReceptionTable **out_table);

/**
 * Detects walls given the loudspeaker position `source` (`dim` doubles).
 * A null `config` uses the defaults.
 *
 * # Safety
 * `array` and `table` must be live handles; `source` must hold `dim`
 * doubles; `config` may be null; `out_walls` must be writable.
 */
enum TdoaStatus tdoa_detect_walls(const struct TdoaSensorArray *array,
                                  const struct TdoaReceptionTable *table,
                                  const double *source,
                                  const struct TdoaMatchConfig *config,
                                  struct TdoaWallList **out_walls);

/**
 * # Safety
 * `walls` must be null or a handle from [`tdoa_detect_walls`].
 */
void tdoa_wall_list_free(struct TdoaWallList *walls);

/**
 * Number of walls, or 0 for a null handle.
 *
 * # Safety
 * `walls` must be null or a live handle.
 */
size_t tdoa_wall_list_len(const struct TdoaWallList *walls);

/**
 * Emission time of the direct sound; returns 0 when it was not detected.
 *
 * # Safety
 * `walls` must be null or a live handle; `time` may be null.
 */
int32_t tdoa_wall_list_direct(const struct TdoaWallList *walls, double *time);

/**
 * Wall `index` as unit normal (`dim` doubles) and offset.
 *
 * # Safety
 * `walls` must be a live handle; `normal` must be null or writable for
 * `dim` doubles; `offset` may be null.
 */
enum TdoaStatus tdoa_wall_list_get(const struct TdoaWallList *walls,
                                   size_t index,
                                   double *normal,
                                   double *offset);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDOA_H */
