//! Trace events, append-only sinks, token ledger and run metrics.

mod ledger;
mod metrics;
mod sink;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::{EnvMetrics, Gold, TaskInstance};
use crate::graph::{GraphDocument, NodeId, NodeStatus, OutcomeSummary, RevisionDelta};
use crate::roles::{Attempt, CallKind, Role, TokenUsage};

pub use ledger::{LedgerKey, TokenLedger};
pub use metrics::{
    check_constraints, compare_report, compute_metrics, normalize_answer, summarize, CompareReport,
    CompareRow, ConstraintScore, MetricsRecord, MetricsSummary, TravelSummary,
};
pub use sink::{read_trace, JsonlFileSink, MemorySink, TraceSink};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("run `{run}`: expected sequence number {expected}, got {got}")]
    SequenceGap { run: String, expected: u64, got: u64 },
    #[error("sink for run `{expected}` received an event for run `{got}`")]
    WrongRun { expected: String, got: String },
    #[error("trace `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("trace `{path}` line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("run `{0}` has no run_end event")]
    MissingRunEnd(String),
    #[error("cannot compare an empty batch for method `{0}`")]
    EmptyBatch(String),
    #[error("reference method `{0}` is not among the compared batches")]
    UnknownReference(String),
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub run_id: String,
    pub method: String,
    pub task_id: String,
    #[serde(default)]
    pub gold: Gold,
}

impl TraceHeader {
    pub fn new(method: &str, task: &TaskInstance) -> Self {
        Self {
            version: TRACE_VERSION,
            run_id: run_id(method, &task.id),
            method: method.to_string(),
            task_id: task.id.clone(),
            gold: task.gold.clone(),
        }
    }
}

pub fn run_id(method: &str, task_id: &str) -> String {
    format!("{method}-{task_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTerminal {
    Completed,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    EnvironmentDone,
    SinksCompleted,
    /// The evaluator declared the whole task complete.
    TaskCompleted,
    StepBudget,
    Stall,
    RoundLimit,
    ConstructionFault,
    RoleFault,
    PlanExhausted,
    ReplanBudget,
    TaskFailed,
}

/// Which part of the plan a replan rewrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum ReplanScope {
    Node { node: NodeId },
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    GraphConstructed {
        graph: GraphDocument,
    },
    NodeDispatched {
        node: NodeId,
        round: u32,
    },
    RoleCall {
        call: CallKind,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<NodeId>,
        usage: TokenUsage,
        attempts: Vec<Attempt>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fault: Option<String>,
    },
    EnvStep {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<NodeId>,
        step_index: u32,
        action: String,
        observation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward_delta: Option<f64>,
        done: bool,
    },
    NodeStatus {
        node: NodeId,
        from: NodeStatus,
        to: NodeStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<OutcomeSummary>,
    },
    Replan {
        #[serde(flatten)]
        scope: ReplanScope,
        accepted: bool,
        replan_count: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_plan: Option<String>,
    },
    Revision {
        round: u32,
        delta: RevisionDelta,
        applied: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejection: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        added: Vec<NodeId>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        removed: Vec<NodeId>,
    },
    RunEnd {
        terminal: RunTerminal,
        reason: EndReason,
        steps_used: u32,
        delivered: bool,
        env: EnvMetrics,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::GraphConstructed { .. } => "graph_constructed",
            EventPayload::NodeDispatched { .. } => "node_dispatched",
            EventPayload::RoleCall { .. } => "role_call",
            EventPayload::EnvStep { .. } => "env_step",
            EventPayload::NodeStatus { .. } => "node_status",
            EventPayload::Replan { .. } => "replan",
            EventPayload::Revision { .. } => "revision",
            EventPayload::RunEnd { .. } => "run_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub run_id: String,
    pub seq: u64,
    /// Milliseconds since the Unix epoch; absent unless wall-clock stamping is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// Assigns sequence numbers for one run and forwards events to a sink.
pub struct Recorder<'a> {
    run_id: String,
    next_seq: u64,
    timestamps: bool,
    sink: &'a dyn TraceSink,
    last: Option<TraceEvent>,
}

impl<'a> Recorder<'a> {
    pub fn new(run_id: impl Into<String>, sink: &'a dyn TraceSink, timestamps: bool) -> Self {
        Self {
            run_id: run_id.into(),
            next_seq: 0,
            timestamps,
            sink,
            last: None,
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn emit(&mut self, payload: EventPayload) -> Result<(), TelemetryError> {
        let timestamp_ms = self.timestamps.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        });
        let event = TraceEvent {
            run_id: self.run_id.clone(),
            seq: self.next_seq,
            timestamp_ms,
            payload,
        };
        self.sink.append(&event)?;
        self.next_seq += 1;
        self.last = Some(event);
        Ok(())
    }

    /// The most recently emitted event.
    pub fn last(&self) -> Option<&TraceEvent> {
        self.last.as_ref()
    }
}

/// Reads a trace file and recomputes its metrics without any backend.
pub fn replay_trace(path: &Path) -> Result<MetricsRecord, TelemetryError> {
    let (header, events) = read_trace(path)?;
    compute_metrics(&header, &events)
}
