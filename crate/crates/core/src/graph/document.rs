use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    validate_graph, GraphError, NodeId, NodeStatus, OutcomeSummary, SubTaskNode, TaskGraph,
    TraceEntry,
};
use crate::roles::Plan;

pub const GRAPH_DOCUMENT_VERSION: u32 = 1;

/// Persistent form of a [`TaskGraph`]: the construction schema (`subgoals` with
/// `id`/`description`/`dependencies`) extended with execution state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    pub task_description: String,
    pub subgoals: Vec<NodeDocument>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub retired: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: NodeId,
    pub description: String,
    #[serde(default)]
    pub dependencies: Vec<NodeId>,
    #[serde(default)]
    pub status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSummary>,
    #[serde(default)]
    pub replan_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_trace: Vec<TraceEntry>,
}

impl From<&TaskGraph> for GraphDocument {
    fn from(graph: &TaskGraph) -> Self {
        Self {
            version: GRAPH_DOCUMENT_VERSION,
            task_description: graph.task_description.clone(),
            subgoals: graph
                .nodes
                .values()
                .map(|n| NodeDocument {
                    id: n.id.clone(),
                    description: n.description.clone(),
                    dependencies: n.dependencies.iter().cloned().collect(),
                    status: n.status,
                    outcome: n.outcome.clone(),
                    replan_count: n.replan_count,
                    plan: n.plan.clone(),
                    local_trace: n.local_trace.clone(),
                })
                .collect(),
            retired: graph.retired.clone(),
        }
    }
}

impl TryFrom<GraphDocument> for TaskGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDocument) -> Result<Self, Self::Error> {
        if doc.version != GRAPH_DOCUMENT_VERSION {
            return Err(GraphError::Document(format!(
                "unsupported version {} (expected {GRAPH_DOCUMENT_VERSION})",
                doc.version
            )));
        }
        let mut nodes = BTreeMap::new();
        for n in doc.subgoals {
            let node = SubTaskNode {
                id: n.id.clone(),
                description: n.description,
                dependencies: n.dependencies.into_iter().collect(),
                status: n.status,
                plan: n.plan,
                local_trace: n.local_trace,
                outcome: n.outcome,
                replan_count: n.replan_count,
            };
            if nodes.insert(n.id.clone(), node).is_some() {
                return Err(GraphError::DuplicateId(n.id));
            }
        }
        if let Some(id) = doc.retired.iter().find(|id| nodes.contains_key(*id)) {
            return Err(GraphError::DuplicateId(id.clone()));
        }
        let graph = TaskGraph {
            task_description: doc.task_description,
            nodes,
            retired: doc.retired,
        };
        validate_graph(&graph).map_err(GraphError::Invalid)?;
        Ok(graph)
    }
}

impl TaskGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphDocument::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument =
            serde_json::from_str(text).map_err(|e| GraphError::Document(e.to_string()))?;
        doc.try_into()
    }
}
