use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environments::EnvMetrics;
use crate::graph::{NodeId, NodeStatus, TaskGraph};
use crate::roles::{Role, TokenUsage};
use crate::telemetry::{EndReason, MetricsRecord, RunTerminal, TraceHeader};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub status: NodeStatus,
    pub replan_count: u32,
    pub trace_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub method: String,
    pub task_id: String,
    pub terminal: RunTerminal,
    pub reason: EndReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub steps_used: u32,
    pub nodes: Vec<NodeRecord>,
    pub tokens: BTreeMap<Role, TokenUsage>,
    /// Accepted replans.
    pub replans_total: u32,
    pub node_scoped_replans: u32,
    pub delivered: bool,
    pub env: EnvMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<TaskGraph>,
}

impl RunReport {
    pub fn total_tokens(&self) -> TokenUsage {
        self.tokens.values().copied().sum()
    }

    pub(crate) fn node_records(graph: &TaskGraph) -> Vec<NodeRecord> {
        graph
            .nodes
            .values()
            .map(|n| NodeRecord {
                id: n.id.clone(),
                status: n.status,
                replan_count: n.replan_count,
                trace_len: n.local_trace.len(),
            })
            .collect()
    }

    /// Metrics from the live run's own counters.
    pub fn metrics(&self, header: &TraceHeader) -> MetricsRecord {
        MetricsRecord::build(
            header,
            self.terminal,
            self.reason,
            self.steps_used,
            self.delivered,
            &self.env,
            self.total_tokens(),
            self.replans_total,
            self.node_scoped_replans,
        )
    }
}
