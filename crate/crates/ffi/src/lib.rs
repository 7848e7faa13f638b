//! C ABI over `tdp-core`.
//!
//! Every function returns a [`TdpStatus`]. On failure a message is kept per
//! thread and can be read with [`tdp_last_error_message`]. Strings handed out
//! through `out` parameters are owned by the caller and must be released with
//! [`tdp_string_free`]; graphs with [`tdp_graph_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use serde_json::{json, Value};
use tdp_core::cli::FileConfig;
use tdp_core::engine::{run_method, Method};
use tdp_core::environments::load_fixture_set;
use tdp_core::graph::{apply_revision, ready_nodes, render_dag_state, validate_graph, GraphError, TaskGraph};
use tdp_core::roles::{
    parse_evaluation, parse_plan, parse_react, parse_replan, parse_revision, parse_subgoals, Bindings, TemplateName,
    TemplateSet,
};
use tdp_core::telemetry::{replay_trace, JsonlFileSink, MemorySink, TraceHeader, TraceSink};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    RevisionRejected = 5,
    IoError = 6,
    RunError = 7,
    Panic = 8,
}

/// Opaque task graph handle.
pub struct TdpGraph {
    inner: TaskGraph,
}

struct Failure(TdpStatus, String);

impl Failure {
    fn new(status: TdpStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> FfiResult<()>) -> TdpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            TdpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {message}"));
            TdpStatus::Panic
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, name: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(Failure::new(TdpStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Failure::new(TdpStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn graph<'a>(ptr: *const TdpGraph) -> FfiResult<&'a TaskGraph> {
    ptr.as_ref()
        .map(|g| &g.inner)
        .ok_or_else(|| Failure::new(TdpStatus::NullPointer, "graph handle is null"))
}

fn check_out<T>(out: *mut T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::new(TdpStatus::NullPointer, "output pointer is null"));
    }
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, value: String) -> FfiResult<()> {
    check_out(out)?;
    let c = CString::new(value).map_err(|e| Failure::new(TdpStatus::RunError, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_graph(out: *mut *mut TdpGraph, inner: TaskGraph) -> FfiResult<()> {
    check_out(out)?;
    *out = Box::into_raw(Box::new(TdpGraph { inner }));
    Ok(())
}

fn graph_failure(e: GraphError) -> Failure {
    let status = match e {
        GraphError::Document(_) => TdpStatus::ParseError,
        _ => TdpStatus::ValidationError,
    };
    Failure::new(status, e.to_string())
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a graph document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_from_json(json: *const c_char, out: *mut *mut TdpGraph) -> TdpStatus {
    guard(|| {
        let json = text(json, "json")?;
        let g = TaskGraph::from_json(json).map_err(graph_failure)?;
        put_graph(out, g)
    })
}

/// # Safety
/// `graph` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_free(graph: *mut TdpGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_validate(graph: *const TdpGraph) -> TdpStatus {
    guard(|| {
        let g = self::graph(graph)?;
        validate_graph(g).map_err(|violations| {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Failure::new(TdpStatus::ValidationError, list.join("; "))
        })
    })
}

/// Writes a JSON array of ready node ids, in id order.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_ready_nodes(graph: *const TdpGraph, out: *mut *mut c_char) -> TdpStatus {
    guard(|| {
        let ids: Vec<String> = ready_nodes(self::graph(graph)?).iter().map(|id| id.to_string()).collect();
        put_string(out, json!(ids).to_string())
    })
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_render_dag_state(graph: *const TdpGraph, out: *mut *mut c_char) -> TdpStatus {
    guard(|| put_string(out, render_dag_state(self::graph(graph)?)))
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_to_json(graph: *const TdpGraph, out: *mut *mut c_char) -> TdpStatus {
    guard(|| put_string(out, self::graph(graph)?.to_json()))
}

/// Applies a revision delta and writes the revised graph to `out`.
/// The input graph is never modified.
///
/// # Safety
/// `graph` must be a live handle, `delta` a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_graph_apply_revision(
    graph: *const TdpGraph,
    delta: *const c_char,
    out: *mut *mut TdpGraph,
) -> TdpStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let delta = parse_revision(text(delta, "delta")?)
            .map_err(|e| Failure::new(TdpStatus::ParseError, e.to_string()))?;
        let applied = apply_revision(g, &delta).map_err(|e| Failure::new(TdpStatus::RevisionRejected, e.to_string()))?;
        put_graph(out, applied.graph)
    })
}

fn parse_by_kind(kind: &str, raw: &str) -> FfiResult<Value> {
    let parse_err = |e: &dyn std::fmt::Display| Failure::new(TdpStatus::ParseError, e.to_string());
    let value = match kind {
        "subgoals" => serde_json::to_value(parse_subgoals(raw).map_err(|e| parse_err(&e))?),
        "plan" => serde_json::to_value(parse_plan(raw).map_err(|e| parse_err(&e))?),
        "evaluation" => serde_json::to_value(parse_evaluation(raw).map_err(|e| parse_err(&e))?),
        "replan" => serde_json::to_value(parse_replan(raw).map_err(|e| parse_err(&e))?),
        "revision" => serde_json::to_value(parse_revision(raw).map_err(|e| parse_err(&e))?),
        "react" => {
            let step = parse_react(raw).map_err(|e| parse_err(&e))?;
            Ok(json!({ "thought": step.thought, "action": step.action }))
        }
        other => {
            return Err(Failure::new(
                TdpStatus::ParseError,
                format!("unknown output kind `{other}` (expected subgoals, plan, evaluation, replan, revision or react)"),
            ))
        }
    };
    value.map_err(|e| Failure::new(TdpStatus::ParseError, e.to_string()))
}

/// Parses raw model output of the given kind and writes it back as canonical JSON.
///
/// # Safety
/// `kind` and `raw` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_parse(kind: *const c_char, raw: *const c_char, out: *mut *mut c_char) -> TdpStatus {
    guard(|| {
        let value = parse_by_kind(text(kind, "kind")?, text(raw, "raw")?)?;
        put_string(out, value.to_string())
    })
}

/// Renders a built-in template. `bindings` is a JSON object of string values.
///
/// # Safety
/// `template` and `bindings` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_render_prompt(
    template: *const c_char,
    bindings: *const c_char,
    out: *mut *mut c_char,
) -> TdpStatus {
    guard(|| {
        let name = text(template, "template")?;
        let name = TemplateName::ALL
            .into_iter()
            .find(|n| n.as_str() == name)
            .ok_or_else(|| Failure::new(TdpStatus::ParseError, format!("unknown template `{name}`")))?;
        let map: serde_json::Map<String, Value> = serde_json::from_str(text(bindings, "bindings")?)
            .map_err(|e| Failure::new(TdpStatus::ParseError, format!("bindings: {e}")))?;
        let mut b = Bindings::new();
        for (key, value) in map {
            let Value::String(value) = value else {
                return Err(Failure::new(TdpStatus::ParseError, format!("binding `{key}` is not a string")));
            };
            b = b.set(&key, value);
        }
        let prompt = TemplateSet::default()
            .get(name)
            .render(&b)
            .map_err(|e| Failure::new(TdpStatus::ValidationError, e.to_string()))?;
        put_string(out, prompt)
    })
}

/// Runs `method` on every task in `tasks` (a fixture file or directory) and
/// writes a JSON array of metrics records. Traces go to `trace_dir` when it is
/// not null and are kept in memory otherwise.
///
/// # Safety
/// `method`, `tasks` and `config` must be nul-terminated strings, `trace_dir`
/// null or nul-terminated, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_run_tasks(
    method: *const c_char,
    tasks: *const c_char,
    config: *const c_char,
    trace_dir: *const c_char,
    out: *mut *mut c_char,
) -> TdpStatus {
    guard(|| {
        let method: Method = text(method, "method")?
            .parse()
            .map_err(|e: String| Failure::new(TdpStatus::ParseError, e))?;
        let tasks = load_fixture_set(Path::new(text(tasks, "tasks")?))
            .map_err(|e| Failure::new(TdpStatus::IoError, e.to_string()))?;
        let file = FileConfig::load(Path::new(text(config, "config")?))
            .map_err(|e| Failure::new(TdpStatus::IoError, e))?;
        let backends = file.build_backends().map_err(|e| Failure::new(TdpStatus::RunError, e))?;
        let trace_dir = if trace_dir.is_null() {
            None
        } else {
            Some(Path::new(text(trace_dir, "trace_dir")?))
        };
        check_out(out)?;
        let mut records = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let header = TraceHeader::new(method.as_str(), task);
            let memory;
            let file_sink;
            let sink: &dyn TraceSink = match trace_dir {
                Some(dir) => {
                    file_sink = JsonlFileSink::create(&dir.join(format!("{}.jsonl", header.run_id)), &header)
                        .map_err(|e| Failure::new(TdpStatus::IoError, e.to_string()))?;
                    &file_sink
                }
                None => {
                    memory = MemorySink::new();
                    &memory
                }
            };
            let mut env = task.env_kind().create();
            let report = run_method(method, task, env.as_mut(), &backends, &file.run, sink)
                .map_err(|e| Failure::new(TdpStatus::RunError, format!("{}: {e}", header.run_id)))?;
            records.push(report.metrics(&header));
        }
        let text = serde_json::to_string(&records).map_err(|e| Failure::new(TdpStatus::RunError, e.to_string()))?;
        put_string(out, text)
    })
}

/// Recomputes a run's metrics record from its trace file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdp_replay_trace(path: *const c_char, out: *mut *mut c_char) -> TdpStatus {
    guard(|| {
        let record = replay_trace(Path::new(text(path, "path")?)).map_err(|e| {
            let status = match e {
                tdp_core::telemetry::TelemetryError::Io { .. } => TdpStatus::IoError,
                _ => TdpStatus::ParseError,
            };
            Failure::new(status, e.to_string())
        })?;
        let text = serde_json::to_string(&record).map_err(|e| Failure::new(TdpStatus::RunError, e.to_string()))?;
        put_string(out, text)
    })
}
