use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NodeId, TaskGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A dependency id that names no node.
    DanglingDependency { node: NodeId, missing: NodeId },
    /// A dependency cycle, listed in traversal order.
    Cycle { path: Vec<NodeId> },
    /// No node is free of dependents (includes the empty graph).
    NoSink,
    /// A map key that disagrees with the stored node id.
    IdMismatch { key: NodeId, id: NodeId },
    /// `outcome` must be present exactly when the node is terminal.
    OutcomeMismatch { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingDependency { node, missing } => {
                write!(f, "`{node}` depends on unknown node `{missing}`")
            }
            Violation::Cycle { path } => {
                let names: Vec<&str> = path.iter().map(NodeId::as_str).collect();
                write!(f, "dependency cycle {}", names.join(" -> "))
            }
            Violation::NoSink => write!(f, "graph has no sink node (at least one sink is required)"),
            Violation::IdMismatch { key, id } => write!(f, "node stored under `{key}` has id `{id}`"),
            Violation::OutcomeMismatch { node } => {
                write!(f, "`{node}` outcome presence disagrees with its status")
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unvisited,
    OnStack,
    Done,
}

/// Checks structural invariants and returns every violation found.
pub fn validate_graph(graph: &TaskGraph) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();

    for (key, node) in &graph.nodes {
        if key != &node.id {
            violations.push(Violation::IdMismatch {
                key: key.clone(),
                id: node.id.clone(),
            });
        }
        for dep in &node.dependencies {
            if !graph.nodes.contains_key(dep) {
                violations.push(Violation::DanglingDependency {
                    node: node.id.clone(),
                    missing: dep.clone(),
                });
            }
        }
        if node.outcome.is_some() != node.status.is_terminal() {
            violations.push(Violation::OutcomeMismatch {
                node: node.id.clone(),
            });
        }
    }

    let mut marks: BTreeMap<&NodeId, Mark> =
        graph.nodes.keys().map(|k| (k, Mark::Unvisited)).collect();
    for start in graph.nodes.keys() {
        if marks[start] != Mark::Unvisited {
            continue;
        }
        // Iterative DFS; the stack holds (node, remaining dependencies).
        let mut path: Vec<&NodeId> = vec![start];
        let mut stack = vec![graph.nodes[start].dependencies.iter()];
        marks.insert(start, Mark::OnStack);
        while let Some(iter) = stack.last_mut() {
            match iter.next() {
                Some(dep) => match marks.get(dep).copied() {
                    None | Some(Mark::Done) => {}
                    Some(Mark::OnStack) => {
                        let from = path.iter().position(|n| *n == dep).unwrap_or(0);
                        let mut cycle: Vec<NodeId> =
                            path[from..].iter().map(|n| (*n).clone()).collect();
                        cycle.push(dep.clone());
                        violations.push(Violation::Cycle { path: cycle });
                    }
                    Some(Mark::Unvisited) => {
                        marks.insert(dep, Mark::OnStack);
                        path.push(dep);
                        stack.push(graph.nodes[dep].dependencies.iter());
                    }
                },
                None => {
                    stack.pop();
                    if let Some(done) = path.pop() {
                        marks.insert(done, Mark::Done);
                    }
                }
            }
        }
    }

    if graph.sinks().is_empty() {
        violations.push(Violation::NoSink);
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
