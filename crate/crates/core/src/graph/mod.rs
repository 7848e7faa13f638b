//! Task dependency graph.
//!
//! A [`TaskGraph`] holds the decomposed sub-goals of one task. Nodes are keyed
//! by [`NodeId`] in a `BTreeMap`, so every iteration over the graph (ready-set
//! computation, rendering, serialization) is lexicographic by id.

mod context;
mod document;
mod revision;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roles::Plan;

pub use context::{build_node_context, DependencyOutcome, NodeScopedContext};
pub use document::{GraphDocument, NodeDocument, GRAPH_DOCUMENT_VERSION};
pub use revision::{
    apply_revision, AppliedRevision, DescriptionUpdate, NewNodeSpec, RevisionDelta,
    RevisionRejection,
};
pub use validate::{validate_graph, Violation};

/// Default number of trailing observations kept in an [`OutcomeSummary`].
pub const DEFAULT_OUTCOME_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node id must be nonempty")]
    EmptyId,
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("illegal status transition for `{node}`: {from} -> {to}")]
    IllegalTransition {
        node: NodeId,
        from: NodeStatus,
        to: NodeStatus,
    },
    #[error("scheduling-order fault: `{node}` dispatched before dependency `{dependency}` completed")]
    DependencyNotCompleted { node: NodeId, dependency: NodeId },
    #[error("graph is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("graph document: {0}")]
    Document(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric suffix of ids shaped like `node_7`.
    pub fn numeric_suffix(&self) -> Option<u64> {
        let digits: String = self
            .0
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        digits.parse().ok()
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for NodeId {
    type Error = GraphError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    #[default]
    Pending,
    InProgress,
    Completed,
    Failed,
}

impl NodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::Pending => "pending",
            NodeStatus::InProgress => "in_progress",
            NodeStatus::Completed => "completed",
            NodeStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, NodeStatus::Completed | NodeStatus::Failed)
    }

    pub fn can_transition_to(self, next: NodeStatus) -> bool {
        use NodeStatus::*;
        matches!(
            (self, next),
            (Pending, InProgress)
                | (InProgress, InProgress)
                | (InProgress, Completed)
                | (InProgress, Failed)
        )
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step_index: u32,
    pub action: String,
    pub observation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Completed,
    Failed,
}

impl From<TerminalStatus> for NodeStatus {
    fn from(status: TerminalStatus) -> Self {
        match status {
            TerminalStatus::Completed => NodeStatus::Completed,
            TerminalStatus::Failed => NodeStatus::Failed,
        }
    }
}

/// What a finished node hands to its dependents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub terminal_status: TerminalStatus,
    pub summary_text: String,
    pub key_observations: Vec<String>,
}

impl OutcomeSummary {
    /// Evaluation reason (if any) followed by the last `k` observations of the trace.
    pub fn from_trace(
        terminal_status: TerminalStatus,
        reason: Option<&str>,
        trace: &[TraceEntry],
        k: usize,
    ) -> Self {
        let start = trace.len().saturating_sub(k);
        let key_observations: Vec<String> = trace[start..]
            .iter()
            .map(|entry| entry.observation.clone())
            .collect();
        let mut parts = Vec::new();
        if let Some(reason) = reason.map(str::trim).filter(|r| !r.is_empty()) {
            parts.push(reason.to_string());
        }
        parts.extend(key_observations.iter().cloned());
        let mut summary_text = parts.join("\n");
        if summary_text.trim().is_empty() {
            summary_text = match terminal_status {
                TerminalStatus::Completed => "completed".to_string(),
                TerminalStatus::Failed => "failed".to_string(),
            };
        }
        Self {
            terminal_status,
            summary_text,
            key_observations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTaskNode {
    pub id: NodeId,
    pub description: String,
    pub dependencies: BTreeSet<NodeId>,
    pub status: NodeStatus,
    pub plan: Option<Plan>,
    pub local_trace: Vec<TraceEntry>,
    pub outcome: Option<OutcomeSummary>,
    pub replan_count: u32,
}

impl SubTaskNode {
    pub fn new(
        id: NodeId,
        description: impl Into<String>,
        dependencies: impl IntoIterator<Item = NodeId>,
    ) -> Self {
        Self {
            id,
            description: description.into(),
            dependencies: dependencies.into_iter().collect(),
            status: NodeStatus::Pending,
            plan: None,
            local_trace: Vec::new(),
            outcome: None,
            replan_count: 0,
        }
    }

    pub fn transition(&mut self, next: NodeStatus) -> Result<(), GraphError> {
        if !self.status.can_transition_to(next) {
            return Err(GraphError::IllegalTransition {
                node: self.id.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    /// Moves an in-progress node to a terminal status and records its outcome.
    pub fn finish(
        &mut self,
        status: TerminalStatus,
        reason: Option<&str>,
        k: usize,
    ) -> Result<(), GraphError> {
        self.transition(status.into())?;
        self.outcome = Some(OutcomeSummary::from_trace(status, reason, &self.local_trace, k));
        Ok(())
    }

    /// Appends a trace entry; step indices must strictly increase.
    pub fn record_step(&mut self, entry: TraceEntry) {
        debug_assert!(self
            .local_trace
            .last()
            .is_none_or(|last| last.step_index < entry.step_index));
        self.local_trace.push(entry);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub task_description: String,
    pub nodes: BTreeMap<NodeId, SubTaskNode>,
    /// Ids removed by revision; they are never handed out again.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub retired: BTreeSet<NodeId>,
}

/// Raw decomposition entry as emitted by the construction role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalSpec {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub dependencies: Vec<String>,
}

impl TaskGraph {
    pub fn new(task_description: impl Into<String>) -> Self {
        Self {
            task_description: task_description.into(),
            nodes: BTreeMap::new(),
            retired: BTreeSet::new(),
        }
    }

    /// Builds and validates a graph from a decomposition.
    pub fn from_subgoals(
        task_description: impl Into<String>,
        subgoals: &[SubgoalSpec],
    ) -> Result<Self, GraphError> {
        let mut graph = Self::new(task_description);
        for spec in subgoals {
            let id = NodeId::new(spec.id.clone())?;
            let deps = spec
                .dependencies
                .iter()
                .map(|d| NodeId::new(d.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            graph.insert(SubTaskNode::new(id, spec.description.clone(), deps))?;
        }
        validate_graph(&graph).map_err(GraphError::Invalid)?;
        Ok(graph)
    }

    pub fn insert(&mut self, node: SubTaskNode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) || self.retired.contains(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Option<&SubTaskNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut SubTaskNode> {
        self.nodes.get_mut(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes no other node depends on.
    pub fn sinks(&self) -> Vec<NodeId> {
        let depended: BTreeSet<&NodeId> = self
            .nodes
            .values()
            .flat_map(|n| n.dependencies.iter())
            .collect();
        self.nodes
            .keys()
            .filter(|id| !depended.contains(id))
            .cloned()
            .collect()
    }

    pub fn all_sinks_completed(&self) -> bool {
        let sinks = self.sinks();
        !sinks.is_empty()
            && sinks
                .iter()
                .all(|id| self.nodes[id].status == NodeStatus::Completed)
    }

    /// Transitive predecessors of `id`.
    pub fn ancestors(&self, id: &NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&NodeId> = self
            .nodes
            .get(id)
            .map(|n| n.dependencies.iter().collect())
            .unwrap_or_default();
        while let Some(next) = stack.pop() {
            if seen.insert(next.clone()) {
                if let Some(node) = self.nodes.get(next) {
                    stack.extend(node.dependencies.iter());
                }
            }
        }
        seen
    }

    /// Largest numeric suffix among current and retired ids (0 when none).
    pub fn max_numeric_suffix(&self) -> u64 {
        self.nodes
            .keys()
            .chain(&self.retired)
            .filter_map(NodeId::numeric_suffix)
            .max()
            .unwrap_or(0)
    }

    /// Every trace entry of every node, ordered by global step index.
    pub fn global_trace(&self) -> Vec<TraceEntry> {
        let mut entries: Vec<TraceEntry> = self
            .nodes
            .values()
            .flat_map(|n| n.local_trace.iter().cloned())
            .collect();
        entries.sort_by_key(|e| e.step_index);
        entries
    }
}

/// Pending nodes whose dependencies are all completed, in id order.
pub fn ready_nodes(graph: &TaskGraph) -> Vec<NodeId> {
    graph
        .nodes
        .values()
        .filter(|node| node.status == NodeStatus::Pending)
        .filter(|node| {
            node.dependencies.iter().all(|dep| {
                graph
                    .nodes
                    .get(dep)
                    .is_some_and(|d| d.status == NodeStatus::Completed)
            })
        })
        .map(|node| node.id.clone())
        .collect()
}

/// One line per node, sorted by id, for the revision prompt.
pub fn render_dag_state(graph: &TaskGraph) -> String {
    let mut out = String::new();
    for node in graph.nodes.values() {
        let deps = if node.dependencies.is_empty() {
            "none".to_string()
        } else {
            node.dependencies
                .iter()
                .map(NodeId::as_str)
                .collect::<Vec<_>>()
                .join(", ")
        };
        let description = node.description.split_whitespace().collect::<Vec<_>>().join(" ");
        out.push_str(&format!(
            "- {} [status: {}] [dependencies: {}] {}\n",
            node.id, node.status, deps, description
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn graph(spec: &[(&str, &[&str], NodeStatus)]) -> TaskGraph {
        let mut g = TaskGraph::new("task");
        for (name, deps, status) in spec {
            let mut node = SubTaskNode::new(id(name), format!("do {name}"), deps.iter().map(|d| id(d)));
            node.status = *status;
            g.insert(node).unwrap();
        }
        g
    }

    #[test]
    fn empty_id_rejected() {
        assert_eq!(NodeId::new("  "), Err(GraphError::EmptyId));
        assert!(serde_json::from_str::<NodeId>("\"\"").is_err());
    }

    #[test]
    fn numeric_suffix() {
        assert_eq!(id("node_12").numeric_suffix(), Some(12));
        assert_eq!(id("cities").numeric_suffix(), None);
    }

    #[test]
    fn transitions() {
        use NodeStatus::*;
        assert!(Pending.can_transition_to(InProgress));
        assert!(InProgress.can_transition_to(InProgress));
        assert!(InProgress.can_transition_to(Completed));
        assert!(InProgress.can_transition_to(Failed));
        assert!(!Pending.can_transition_to(Completed));
        assert!(!Completed.can_transition_to(InProgress));
        assert!(!Failed.can_transition_to(Pending));

        let mut node = SubTaskNode::new(id("n1"), "x", []);
        assert!(node.transition(Completed).is_err());
        node.transition(InProgress).unwrap();
        node.finish(TerminalStatus::Completed, Some("done"), 3).unwrap();
        assert_eq!(node.outcome.as_ref().unwrap().summary_text, "done");
        assert!(node.transition(InProgress).is_err());
    }

    #[test]
    fn ready_single_satisfied_dependency() {
        let g = graph(&[
            ("n1", &[], NodeStatus::Completed),
            ("n2", &["n1"], NodeStatus::Pending),
        ]);
        assert_eq!(ready_nodes(&g), vec![id("n2")]);
    }

    #[test]
    fn ready_root_only() {
        let g = graph(&[
            ("n1", &[], NodeStatus::Pending),
            ("n2", &["n1"], NodeStatus::Pending),
        ]);
        assert_eq!(ready_nodes(&g), vec![id("n1")]);
    }

    #[test]
    fn failed_dependency_blocks() {
        let g = graph(&[
            ("n1", &[], NodeStatus::Failed),
            ("n2", &["n1"], NodeStatus::Pending),
        ]);
        assert!(ready_nodes(&g).is_empty());
    }

    #[test]
    fn outcome_keeps_last_k_observations() {
        let trace: Vec<TraceEntry> = (0..5)
            .map(|i| TraceEntry {
                step_index: i,
                action: format!("a{i}"),
                observation: format!("o{i}"),
            })
            .collect();
        let outcome = OutcomeSummary::from_trace(TerminalStatus::Completed, Some("why"), &trace, 3);
        assert_eq!(outcome.key_observations, vec!["o2", "o3", "o4"]);
        assert_eq!(outcome.summary_text, "why\no2\no3\no4");
        let bare = OutcomeSummary::from_trace(TerminalStatus::Completed, None, &[], 3);
        assert_eq!(bare.summary_text, "completed");
    }

    #[test]
    fn render_single_node() {
        let g = graph(&[("n1", &[], NodeStatus::Pending)]);
        let text = render_dag_state(&g);
        assert_eq!(text, "- n1 [status: pending] [dependencies: none] do n1\n");
        assert_eq!(text.lines().count(), 1);
        assert_eq!(render_dag_state(&g), text);
    }

    #[test]
    fn render_five_nodes_each_once() {
        let g = graph(&[
            ("alpha", &[], NodeStatus::Completed),
            ("bravo", &["alpha"], NodeStatus::Completed),
            ("charlie", &["alpha"], NodeStatus::Failed),
            ("delta", &["bravo"], NodeStatus::InProgress),
            ("echo", &["delta", "charlie"], NodeStatus::Pending),
        ]);
        let text = render_dag_state(&g);
        for node in g.nodes.values() {
            let line_head = format!("- {} [status: {}]", node.id, node.status);
            assert_eq!(text.matches(&line_head).count(), 1, "{line_head}");
            assert_eq!(text.matches(&format!("- {} ", node.id)).count(), 1);
        }
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn ancestors_and_sinks() {
        let g = graph(&[
            ("n1", &[], NodeStatus::Pending),
            ("n2", &["n1"], NodeStatus::Pending),
            ("n3", &["n1"], NodeStatus::Pending),
            ("n4", &["n2", "n3"], NodeStatus::Pending),
        ]);
        assert_eq!(g.sinks(), vec![id("n4")]);
        assert_eq!(
            g.ancestors(&id("n4")),
            [id("n1"), id("n2"), id("n3")].into_iter().collect()
        );
        assert!(g.ancestors(&id("n1")).is_empty());
    }
}
