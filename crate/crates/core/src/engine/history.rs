use crate::graph::TraceEntry;

pub const DEFAULT_HISTORY_CAP: usize = 30;
pub const EMPTY_HISTORY: &str = "(no actions yet)";

fn render_entry(entry: &TraceEntry) -> String {
    format!("Action: {}\nObservation: {}", entry.action, entry.observation)
}

/// Renders action/observation pairs. Past `cap` entries, keeps the first entry,
/// an elision marker and the last `cap - 1` entries. Caps below 2 are raised to 2.
pub fn assemble_history(trace: &[TraceEntry], cap: usize) -> String {
    if trace.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    let cap = cap.max(2);
    if trace.len() <= cap {
        return trace.iter().map(render_entry).collect::<Vec<_>>().join("\n");
    }
    let tail = cap - 1;
    let elided = trace.len() - 1 - tail;
    let mut parts = Vec::with_capacity(cap + 1);
    parts.push(render_entry(&trace[0]));
    parts.push(format!("…{elided} steps elided…"));
    parts.extend(trace[trace.len() - tail..].iter().map(render_entry));
    parts.join("\n")
}
