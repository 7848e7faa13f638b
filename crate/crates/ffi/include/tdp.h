#ifndef TDP_H
#define TDP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TdpStatus {
  TDP_STATUS_OK = 0,
  TDP_STATUS_NULL_POINTER = 1,
  TDP_STATUS_INVALID_UTF8 = 2,
  TDP_STATUS_PARSE_ERROR = 3,
  TDP_STATUS_VALIDATION_ERROR = 4,
  TDP_STATUS_REVISION_REJECTED = 5,
  TDP_STATUS_IO_ERROR = 6,
  TDP_STATUS_RUN_ERROR = 7,
  TDP_STATUS_PANIC = 8,
} TdpStatus;

/*
 Opaque task graph handle.
 */
typedef struct TdpGraph TdpGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *tdp_last_error_message(void);

/*
 Library version as a static string.
 */
const char *tdp_version(void);

/*
 # Safety
 `s` must be null or a string returned by this library that was not freed yet.
 */
void tdp_string_free(char *s);

/*
 Parses and validates a graph document.

 # Safety
 `json` must be a nul-terminated string; `out` must be writable.
 */
enum TdpStatus tdp_graph_from_json(const char *json, struct TdpGraph **out);

/*
 # Safety
 `graph` must be null or a handle from this library that was not freed yet.
 */
void tdp_graph_free(struct TdpGraph *graph);

/*
 # Safety
 `graph` must be a live handle.
 */
enum TdpStatus tdp_graph_validate(const struct TdpGraph *graph);

/*
 Writes a JSON array of ready node ids, in id order.

 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TdpStatus tdp_graph_ready_nodes(const struct TdpGraph *graph, char **out);

/*
 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TdpStatus tdp_graph_render_dag_state(const struct TdpGraph *graph, char **out);

/*
 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TdpStatus tdp_graph_to_json(const struct TdpGraph *graph, char **out);

/*
 Applies a revision delta and writes the revised graph to `out`.
 The input graph is never modified.

 # Safety
 `graph` must be a live handle, `delta` a nul-terminated string and `out` writable.
 */
enum TdpStatus tdp_graph_apply_revision(const struct TdpGraph *graph,
                                        const char *delta,
                                        struct TdpGraph **out);

/*
 Parses raw model output of the given kind and writes it back as canonical JSON.

 # Safety
 `kind` and `raw` must be nul-terminated strings; `out` must be writable.
 */
enum TdpStatus tdp_parse(const char *kind, const char *raw, char **out);

/*
 Renders a built-in template. `bindings` is a JSON object of string values.

 # Safety
 `template` and `bindings` must be nul-terminated strings; `out` must be writable.
 */
enum TdpStatus tdp_render_prompt(const char *template_, const char *bindings, char **out);

/*
 Runs `method` on every task in `tasks` (a fixture file or directory) and
 writes a JSON array of metrics records. Traces go to `trace_dir` when it is
 not null and are kept in memory otherwise.

 # Safety
 `method`, `tasks` and `config` must be nul-terminated strings, `trace_dir`
 null or nul-terminated, and `out` writable.
 */
enum TdpStatus tdp_run_tasks(const char *method,
                             const char *tasks,
                             const char *config,
                             const char *trace_dir,
                             char **out);

/*
 Recomputes a run's metrics record from its trace file.

 # Safety
 `path` must be a nul-terminated string; `out` must be writable.
 */
enum TdpStatus tdp_replay_trace(const char *path, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDP_H */
