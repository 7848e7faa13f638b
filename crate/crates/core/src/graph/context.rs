use serde::{Deserialize, Serialize};

use super::{GraphError, NodeId, NodeStatus, OutcomeSummary, TaskGraph, TraceEntry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyOutcome {
    pub node: NodeId,
    pub outcome: OutcomeSummary,
}

/// Everything the planner and executor may see while working on one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeScopedContext {
    pub node: NodeId,
    pub subgoal: String,
    /// Outcomes of direct dependencies, in dependency-id order.
    pub dependency_outcomes: Vec<DependencyOutcome>,
    pub local_trace: Vec<TraceEntry>,
    pub guidance: Option<String>,
}

impl NodeScopedContext {
    /// Subgoal text followed by the outcomes of prerequisite nodes.
    pub fn render_subgoal(&self) -> String {
        if self.dependency_outcomes.is_empty() {
            return self.subgoal.clone();
        }
        let mut out = self.subgoal.clone();
        out.push_str("\nResults from prerequisite subgoals:");
        for dep in &self.dependency_outcomes {
            out.push_str(&format!("\n[{}] {}", dep.node, dep.outcome.summary_text));
        }
        out
    }
}

pub fn build_node_context(
    graph: &TaskGraph,
    id: &NodeId,
    guidance: Option<String>,
) -> Result<NodeScopedContext, GraphError> {
    let node = graph
        .node(id)
        .ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
    let mut dependency_outcomes = Vec::with_capacity(node.dependencies.len());
    for dep_id in &node.dependencies {
        let dep = graph
            .node(dep_id)
            .ok_or_else(|| GraphError::UnknownNode(dep_id.clone()))?;
        match (&dep.status, &dep.outcome) {
            (NodeStatus::Completed, Some(outcome)) => dependency_outcomes.push(DependencyOutcome {
                node: dep_id.clone(),
                outcome: outcome.clone(),
            }),
            _ => {
                return Err(GraphError::DependencyNotCompleted {
                    node: id.clone(),
                    dependency: dep_id.clone(),
                })
            }
        }
    }
    Ok(NodeScopedContext {
        node: id.clone(),
        subgoal: node.description.clone(),
        dependency_outcomes,
        local_trace: node.local_trace.clone(),
        guidance,
    })
}
