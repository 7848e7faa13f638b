use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{TelemetryError, TraceEvent, TraceHeader, TRACE_VERSION};

/// Append-only event store. Sequence numbers must be contiguous per run.
pub trait TraceSink: Send + Sync {
    fn append(&self, event: &TraceEvent) -> Result<(), TelemetryError>;
}

fn check_seq(expected: u64, event: &TraceEvent) -> Result<(), TelemetryError> {
    if event.seq != expected {
        return Err(TelemetryError::SequenceGap {
            run: event.run_id.clone(),
            expected,
            got: event.seq,
        });
    }
    Ok(())
}

#[derive(Debug, Default)]
struct MemoryState {
    events: Vec<TraceEvent>,
    next: HashMap<String, u64>,
}

/// In-memory sink shared by any number of concurrent runs.
#[derive(Debug, Default)]
pub struct MemorySink {
    state: Mutex<MemoryState>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).events.clone()
    }

    pub fn events_for(&self, run_id: &str) -> Vec<TraceEvent> {
        self.events().into_iter().filter(|e| e.run_id == run_id).collect()
    }
}

impl TraceSink for MemorySink {
    fn append(&self, event: &TraceEvent) -> Result<(), TelemetryError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let next = state.next.get(&event.run_id).copied().unwrap_or(0);
        check_seq(next, event)?;
        state.next.insert(event.run_id.clone(), next + 1);
        state.events.push(event.clone());
        Ok(())
    }
}

struct FileState {
    writer: BufWriter<File>,
    next: u64,
}

/// One JSON object per line: the header, then one event per line.
pub struct JsonlFileSink {
    path: PathBuf,
    run_id: String,
    state: Mutex<FileState>,
}

impl JsonlFileSink {
    /// Creates (truncating) the trace file and writes the header line.
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self, TelemetryError> {
        let io = |e: std::io::Error| TelemetryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut writer = BufWriter::new(File::create(path).map_err(io)?);
        let line = serde_json::to_string(header).expect("header serializes");
        writeln!(writer, "{line}").map_err(io)?;
        writer.flush().map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            run_id: header.run_id.clone(),
            state: Mutex::new(FileState { writer, next: 0 }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl TraceSink for JsonlFileSink {
    fn append(&self, event: &TraceEvent) -> Result<(), TelemetryError> {
        if event.run_id != self.run_id {
            return Err(TelemetryError::WrongRun {
                expected: self.run_id.clone(),
                got: event.run_id.clone(),
            });
        }
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        check_seq(state.next, event)?;
        let io = |e: std::io::Error| TelemetryError::Io {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        let line = serde_json::to_string(event).expect("event serializes");
        writeln!(state.writer, "{line}").map_err(io)?;
        state.writer.flush().map_err(io)?;
        state.next += 1;
        Ok(())
    }
}

/// Parses a trace file, checking the header version and sequence contiguity.
pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<TraceEvent>), TelemetryError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| TelemetryError::Io {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let malformed = |line: usize, message: String| TelemetryError::Malformed {
        path: display.clone(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty trace".into()))?;
    let first = first.map_err(|e| malformed(1, e.to_string()))?;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| malformed(1, format!("header: {e}")))?;
    if header.version != TRACE_VERSION {
        return Err(malformed(1, format!("unsupported trace version {}", header.version)));
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| malformed(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent =
            serde_json::from_str(&line).map_err(|e| malformed(i + 1, e.to_string()))?;
        if event.run_id != header.run_id {
            return Err(malformed(i + 1, format!("event for foreign run `{}`", event.run_id)));
        }
        if event.seq != events.len() as u64 {
            return Err(malformed(
                i + 1,
                format!("expected seq {}, found {}", events.len(), event.seq),
            ));
        }
        events.push(event);
    }
    Ok((header, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Gold;
    use crate::graph::NodeId;
    use crate::telemetry::EventPayload;

    fn event(run: &str, seq: u64) -> TraceEvent {
        TraceEvent {
            run_id: run.into(),
            seq,
            timestamp_ms: None,
            payload: EventPayload::NodeDispatched {
                node: NodeId::new("node_1").unwrap(),
                round: 1,
            },
        }
    }

    fn header() -> TraceHeader {
        TraceHeader {
            version: TRACE_VERSION,
            run_id: "r".into(),
            method: "tdp".into(),
            task_id: "t".into(),
            gold: Gold::default(),
        }
    }

    #[test]
    fn memory_sink_enforces_contiguity_per_run() {
        let sink = MemorySink::new();
        sink.append(&event("a", 0)).unwrap();
        sink.append(&event("b", 0)).unwrap();
        assert!(matches!(
            sink.append(&event("a", 2)),
            Err(TelemetryError::SequenceGap { expected: 1, got: 2, .. })
        ));
        sink.append(&event("a", 1)).unwrap();
        assert_eq!(sink.events_for("a").len(), 2);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/r.jsonl");
        let sink = JsonlFileSink::create(&path, &header()).unwrap();
        let written: Vec<_> = (0..50).map(|i| event("r", i)).collect();
        for e in &written {
            sink.append(e).unwrap();
        }
        assert!(sink.append(&event("r", 51)).is_err());
        assert!(matches!(sink.append(&event("x", 50)), Err(TelemetryError::WrongRun { .. })));
        let (h, events) = read_trace(&path).unwrap();
        assert_eq!(h, header());
        assert_eq!(events, written);
    }

    #[test]
    fn missing_trace_names_path() {
        let err = read_trace(Path::new("/nonexistent/trace.jsonl")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/trace.jsonl"));
    }
}
