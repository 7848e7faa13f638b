use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{validate_graph, NodeId, NodeStatus, SubTaskNode, TaskGraph, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionUpdate {
    pub node_id: NodeId,
    pub new_description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewNodeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<NodeId>,
    pub description: String,
    #[serde(default)]
    pub dependencies: Vec<NodeId>,
    #[serde(default)]
    pub dependents: Vec<NodeId>,
}

/// Graph edit proposed by the supervisor between rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RevisionDelta {
    #[serde(default)]
    pub thought: String,
    pub need_update: bool,
    #[serde(default)]
    pub description_updates: Vec<DescriptionUpdate>,
    #[serde(default)]
    pub new_nodes: Vec<NewNodeSpec>,
    #[serde(default)]
    pub remove_nodes: Vec<NodeId>,
}

impl RevisionDelta {
    pub fn no_op(thought: impl Into<String>) -> Self {
        Self {
            thought: thought.into(),
            ..Self::default()
        }
    }

    pub fn is_effective(&self) -> bool {
        self.need_update
            && !(self.description_updates.is_empty()
                && self.new_nodes.is_empty()
                && self.remove_nodes.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RevisionRejection {
    UnknownNode { node: NodeId },
    TerminalNodeTargeted { node: NodeId, status: NodeStatus },
    DependentNotPending { node: NodeId, status: NodeStatus },
    DuplicateId { node: NodeId },
    EmptyDescription,
    Invalid { violations: Vec<Violation> },
}

impl fmt::Display for RevisionRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RevisionRejection::UnknownNode { node } => write!(f, "delta references unknown node `{node}`"),
            RevisionRejection::TerminalNodeTargeted { node, status } => {
                write!(f, "delta updates `{node}` which is already {status}")
            }
            RevisionRejection::DependentNotPending { node, status } => {
                write!(f, "new dependency wired into `{node}` which is {status}")
            }
            RevisionRejection::DuplicateId { node } => write!(f, "new node id `{node}` already exists"),
            RevisionRejection::EmptyDescription => write!(f, "new node description is empty"),
            RevisionRejection::Invalid { violations } => {
                let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
                write!(f, "revised graph is invalid: {}", text.join("; "))
            }
        }
    }
}

impl std::error::Error for RevisionRejection {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedRevision {
    pub graph: TaskGraph,
    pub updated: Vec<NodeId>,
    pub added: Vec<NodeId>,
    pub removed: Vec<NodeId>,
}

/// Applies `delta` to a copy of `graph`.
///
/// On any rejection the caller's graph is untouched; the revised graph is only
/// returned when it passes [`validate_graph`].
pub fn apply_revision(
    graph: &TaskGraph,
    delta: &RevisionDelta,
) -> Result<AppliedRevision, RevisionRejection> {
    let mut next = graph.clone();
    let mut applied = AppliedRevision {
        graph: TaskGraph::new(""),
        updated: Vec::new(),
        added: Vec::new(),
        removed: Vec::new(),
    };
    if !delta.need_update {
        applied.graph = next;
        return Ok(applied);
    }

    for update in &delta.description_updates {
        let node = next
            .node_mut(&update.node_id)
            .ok_or_else(|| RevisionRejection::UnknownNode {
                node: update.node_id.clone(),
            })?;
        if node.status.is_terminal() {
            return Err(RevisionRejection::TerminalNodeTargeted {
                node: node.id.clone(),
                status: node.status,
            });
        }
        node.description = update.new_description.clone();
        applied.updated.push(update.node_id.clone());
    }

    // Generated ids continue past every id the graph has ever held.
    let mut next_suffix = graph.max_numeric_suffix() + 1;

    let removed: BTreeSet<&NodeId> = delta.remove_nodes.iter().collect();
    for id in &removed {
        if next.nodes.remove(*id).is_none() {
            return Err(RevisionRejection::UnknownNode {
                node: (*id).clone(),
            });
        }
        applied.removed.push((*id).clone());
        next.retired.insert((*id).clone());
    }
    for node in next.nodes.values_mut() {
        node.dependencies.retain(|dep| !removed.contains(dep));
    }

    for spec in &delta.new_nodes {
        if spec.description.trim().is_empty() {
            return Err(RevisionRejection::EmptyDescription);
        }
        let id = match &spec.id {
            Some(id) => {
                if next.nodes.contains_key(id) || graph.nodes.contains_key(id) || next.retired.contains(id) {
                    return Err(RevisionRejection::DuplicateId { node: id.clone() });
                }
                id.clone()
            }
            None => loop {
                let candidate = NodeId::new(format!("node_{next_suffix}"))
                    .expect("generated ids are nonempty");
                next_suffix += 1;
                if !next.nodes.contains_key(&candidate)
                    && !graph.nodes.contains_key(&candidate)
                    && !next.retired.contains(&candidate)
                {
                    break candidate;
                }
            },
        };
        if let Some(n) = id.numeric_suffix() {
            next_suffix = next_suffix.max(n + 1);
        }
        for dep in &spec.dependencies {
            if !next.nodes.contains_key(dep) {
                return Err(RevisionRejection::UnknownNode { node: dep.clone() });
            }
        }
        next.nodes.insert(
            id.clone(),
            SubTaskNode::new(id.clone(), spec.description.clone(), spec.dependencies.iter().cloned()),
        );
        for dependent in &spec.dependents {
            let node = next
                .node_mut(dependent)
                .ok_or_else(|| RevisionRejection::UnknownNode {
                    node: dependent.clone(),
                })?;
            if node.status != NodeStatus::Pending {
                return Err(RevisionRejection::DependentNotPending {
                    node: dependent.clone(),
                    status: node.status,
                });
            }
            node.dependencies.insert(id.clone());
        }
        applied.added.push(id);
    }

    validate_graph(&next).map_err(|violations| RevisionRejection::Invalid { violations })?;
    applied.graph = next;
    Ok(applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ready_nodes, TerminalStatus};

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn chain() -> TaskGraph {
        let mut g = TaskGraph::new("t");
        let mut n1 = SubTaskNode::new(id("node_1"), "first", []);
        n1.status = NodeStatus::InProgress;
        n1.finish(TerminalStatus::Completed, Some("ok"), 3).unwrap();
        g.insert(n1).unwrap();
        g.insert(SubTaskNode::new(id("node_2"), "second", [id("node_1")]))
            .unwrap();
        g
    }

    #[test]
    fn no_op_delta_is_identity() {
        let g = chain();
        let delta = RevisionDelta {
            need_update: false,
            remove_nodes: vec![id("node_2")],
            ..Default::default()
        };
        assert_eq!(apply_revision(&g, &delta).unwrap().graph, g);
    }

    #[test]
    fn removing_only_sink_rejected() {
        let g = chain();
        // Removal re-roots dependents, so the sink rule only fails once nothing is left.
        let delta = RevisionDelta {
            need_update: true,
            remove_nodes: vec![id("node_1"), id("node_2")],
            ..Default::default()
        };
        let err = apply_revision(&g, &delta).unwrap_err();
        assert_eq!(
            err,
            RevisionRejection::Invalid {
                violations: vec![Violation::NoSink]
            }
        );
        assert!(err.to_string().contains("sink"));
    }

    #[test]
    fn dependents_wiring_creating_cycle_rejected() {
        let g = chain();
        // new node depends on node_2 and is also a dependency of node_2.
        let delta = RevisionDelta {
            need_update: true,
            new_nodes: vec![NewNodeSpec {
                id: None,
                description: "loop".into(),
                dependencies: vec![id("node_2")],
                dependents: vec![id("node_2")],
            }],
            ..Default::default()
        };
        let err = apply_revision(&g, &delta).unwrap_err();
        assert!(matches!(err, RevisionRejection::Invalid { .. }));
    }

    #[test]
    fn terminal_description_update_rejected() {
        let g = chain();
        let delta = RevisionDelta {
            need_update: true,
            description_updates: vec![DescriptionUpdate {
                node_id: id("node_1"),
                new_description: "rewrite".into(),
            }],
            ..Default::default()
        };
        assert!(matches!(
            apply_revision(&g, &delta),
            Err(RevisionRejection::TerminalNodeTargeted { .. })
        ));
    }

    #[test]
    fn generated_ids_follow_suffix() {
        let g = chain();
        let delta = RevisionDelta {
            need_update: true,
            new_nodes: vec![
                NewNodeSpec {
                    id: None,
                    description: "third".into(),
                    dependencies: vec![id("node_1")],
                    dependents: vec![],
                },
                NewNodeSpec {
                    id: None,
                    description: "fourth".into(),
                    dependencies: vec![id("node_3")],
                    dependents: vec![id("node_2")],
                },
            ],
            ..Default::default()
        };
        let applied = apply_revision(&g, &delta).unwrap();
        assert_eq!(applied.added, vec![id("node_3"), id("node_4")]);
        assert!(applied.graph.nodes[&id("node_2")]
            .dependencies
            .contains(&id("node_4")));
        assert_eq!(ready_nodes(&applied.graph), vec![id("node_3")]);
    }

    #[test]
    fn removal_drops_edges() {
        let mut g = chain();
        g.insert(SubTaskNode::new(id("node_3"), "x", [id("node_2")]))
            .unwrap();
        let delta = RevisionDelta {
            need_update: true,
            remove_nodes: vec![id("node_2")],
            ..Default::default()
        };
        let applied = apply_revision(&g, &delta).unwrap();
        assert!(applied.graph.nodes[&id("node_3")].dependencies.is_empty());
        // next generated id must not reuse node_2's slot
        let delta = RevisionDelta {
            need_update: true,
            new_nodes: vec![NewNodeSpec {
                id: None,
                description: "y".into(),
                dependencies: vec![],
                dependents: vec![],
            }],
            ..Default::default()
        };
        let again = apply_revision(&applied.graph, &delta).unwrap();
        assert_eq!(again.added, vec![id("node_4")]);
    }

    #[test]
    fn duplicate_and_unknown() {
        let g = chain();
        let dup = RevisionDelta {
            need_update: true,
            new_nodes: vec![NewNodeSpec {
                id: Some(id("node_1")),
                description: "x".into(),
                dependencies: vec![],
                dependents: vec![],
            }],
            ..Default::default()
        };
        assert!(matches!(
            apply_revision(&g, &dup),
            Err(RevisionRejection::DuplicateId { .. })
        ));
        let unknown = RevisionDelta {
            need_update: true,
            remove_nodes: vec![id("node_9")],
            ..Default::default()
        };
        assert!(matches!(
            apply_revision(&g, &unknown),
            Err(RevisionRejection::UnknownNode { .. })
        ));
    }
}
