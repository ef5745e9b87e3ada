#ifndef CMPPI_H
#define CMPPI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmppiOutcome {
  CMPPI_OUTCOME_REACHED_GOAL = 0,
  CMPPI_OUTCOME_COLLIDED = 1,
  CMPPI_OUTCOME_TIMEOUT = 2,
} CmppiOutcome;

typedef enum CmppiStatus {
  CMPPI_STATUS_OK = 0,
  CMPPI_STATUS_NULL_POINTER = 1,
  CMPPI_STATUS_INVALID_ARGUMENT = 2,
  CMPPI_STATUS_CONFIG = 3,
  CMPPI_STATUS_DATA = 4,
  CMPPI_STATUS_GENERATION = 5,
  CMPPI_STATUS_LOOKUP = 6,
  CMPPI_STATUS_IO = 7,
  CMPPI_STATUS_BUFFER_TOO_SMALL = 8,
  CMPPI_STATUS_PANIC = 9,
} CmppiStatus;

// Opaque receding-horizon planner.
typedef struct CmppiPlanner CmppiPlanner;

// Summary of one closed-loop episode.
typedef struct CmppiEpisodeSummary {
  enum CmppiOutcome outcome;
  uint64_t steps;
  // Negative when the episode never started.
  double final_distance;
  double mean_step_ms;
  // Non-zero when the episode ended with an error note.
  uint8_t had_error;
} CmppiEpisodeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buffer` as a
// NUL-terminated string. Returns the message length in bytes, excluding
// the terminator; the copy is truncated when `capacity` is too small.
//
// # Safety
// `buffer` must be null or valid for `capacity` bytes.
size_t cmppi_last_error(char *buffer, size_t capacity);

// Normalized importance weights of `count` rollout costs.
//
// # Safety
// `costs` and `weights_out` must be valid for `count` elements.
enum CmppiStatus cmppi_compute_weights(const double *costs,
                                       size_t count,
                                       double lambda,
                                       double *weights_out);

// DBSCAN over `count` row-major points of dimension `dim`. With `zscore`
// non-zero every dimension is standardized first.
//
// # Safety
// `points` must hold `count * dim` values and `labels_out` `count` slots;
// `cluster_count_out` must be valid.
enum CmppiStatus cmppi_dbscan(const double *points,
                              size_t count,
                              size_t dim,
                              double eps_radius,
                              size_t min_pts,
                              uint8_t zscore,
                              int64_t *labels_out,
                              size_t *cluster_count_out);

// One exact step of the Dubins car from `state[3]` into `next_out[3]`.
//
// # Safety
// `state` and `next_out` must be valid for three values.
enum CmppiStatus cmppi_dubins_step(const double *state,
                                   double omega,
                                   double speed,
                                   double min_turn_radius,
                                   double dt,
                                   double *next_out);

// Run one closed-loop episode described by a JSON experiment config.
//
// # Safety
// `config_json` must be a NUL-terminated string; `summary_out` must be valid.
enum CmppiStatus cmppi_run_episode(const char *config_json,
                                   uint64_t seed,
                                   struct CmppiEpisodeSummary *summary_out);

// Create a planner from a JSON experiment config. `map_json` is a map
// document or null for unbounded free space.
//
// # Safety
// String arguments must be NUL-terminated (or null where allowed) and
// `planner_out` must be valid.
enum CmppiStatus cmppi_planner_new(const char *config_json,
                                   const char *map_json,
                                   double goal_x,
                                   double goal_y,
                                   struct CmppiPlanner **planner_out);

// Release a planner. Null is ignored.
//
// # Safety
// `planner` must come from [`cmppi_planner_new`] and not be used afterwards.
void cmppi_planner_free(struct CmppiPlanner *planner);

// Replace the observed moving obstacles: `poses` holds `count` rows of
// `[x, y, theta]`, `radii` one radius per obstacle.
//
// # Safety
// `planner` must be a live handle; the arrays must hold the stated counts.
enum CmppiStatus cmppi_planner_set_obstacles(struct CmppiPlanner *planner,
                                             const double *poses,
                                             const double *radii,
                                             size_t count);

// Horizon length of the planner.
//
// # Safety
// `planner` must be a live handle.
enum CmppiStatus cmppi_planner_horizon(const struct CmppiPlanner *planner, size_t *horizon_out);

// Plan from `state[3]` and write the turning rate to apply now. The solution
// is shifted into the warm start of the next call.
//
// # Safety
// `planner` must be a live handle; `state` valid for three values and
// `control_out` for one.
enum CmppiStatus cmppi_planner_step(struct CmppiPlanner *planner,
                                    const double *state,
                                    uint64_t seed,
                                    double *control_out);

// Copy the current warm start (`horizon` turning rates) into `inputs_out`.
//
// # Safety
// `planner` must be a live handle and `inputs_out` valid for `capacity` values.
enum CmppiStatus cmppi_planner_warm_start(const struct CmppiPlanner *planner,
                                          double *inputs_out,
                                          size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMPPI_H */
