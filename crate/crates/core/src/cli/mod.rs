//! Command-line front end: run, compare, replay and report.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::engine::{run_method, Method, RoleBackends, RunConfig};
use crate::environments::{load_fixture_set, TaskInstance};
use crate::telemetry::{
    compare_report, read_trace, compute_metrics, summarize, CompareReport, JsonlFileSink, MetricsRecord, TraceHeader,
};

pub use config::{BackendSpec, BackendsConfig, FileConfig};

pub const DEFAULT_TRACE_DIR: &str = "traces";

#[derive(Debug, Parser)]
#[command(name = "tdp", version, about = "Decoupled DAG planning for long-horizon agent tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one method over a fixture set, writing one trace per task.
    Run {
        #[arg(long)]
        method: Method,
        /// Fixture file or directory of fixture files.
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's trace directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Overrides the config's parallelism degree.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Print machine-readable metrics instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run several methods over the same fixtures and compare them.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Method whose token usage the reduction column is relative to.
        #[arg(long, default_value = "plan-act")]
        reference: Method,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Recompute a run's metrics from its trace file. No backend is contacted.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Aggregate existing traces matched by a glob pattern.
    Report {
        #[arg(long)]
        traces: String,
        #[arg(long)]
        reference: Option<Method>,
        #[arg(long)]
        json: bool,
    },
}

type CliResult = Result<(), String>;

/// Parses `argv` (program name first), executes the command and returns the exit status.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run {
            method,
            tasks,
            config,
            trace_dir,
            parallelism,
            json,
        } => cmd_run(&[method], None, &tasks, &config, trace_dir, parallelism, json, out),
        Command::Compare {
            methods,
            tasks,
            config,
            reference,
            trace_dir,
            parallelism,
            json,
        } => cmd_run(&methods, Some(reference), &tasks, &config, trace_dir, parallelism, json, out),
        Command::Replay { trace } => cmd_replay(&trace, out),
        Command::Report { traces, reference, json } => cmd_report(&traces, reference, json, out),
    };
    match result {
        Ok(()) => 0,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

struct Job<'a> {
    method: Method,
    task: &'a TaskInstance,
}

struct Setup {
    run: RunConfig,
    backends: RoleBackends,
    trace_dir: PathBuf,
    parallelism: usize,
}

fn setup(config: &Path, trace_dir: Option<PathBuf>, parallelism: Option<usize>) -> Result<Setup, String> {
    let file = FileConfig::load(config)?;
    let backends = file.build_backends()?;
    Ok(Setup {
        trace_dir: trace_dir
            .or(file.trace_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_TRACE_DIR)),
        parallelism: parallelism.or(file.parallelism).unwrap_or(1).max(1),
        run: file.run,
        backends,
    })
}

fn run_job(job: &Job<'_>, setup: &Setup) -> Result<(MetricsRecord, PathBuf), String> {
    let header = TraceHeader::new(job.method.as_str(), job.task);
    let path = setup.trace_dir.join(format!("{}.jsonl", header.run_id));
    let sink = JsonlFileSink::create(&path, &header).map_err(|e| e.to_string())?;
    let mut env = job.task.env_kind().create();
    let report = run_method(job.method, job.task, env.as_mut(), &setup.backends, &setup.run, &sink)
        .map_err(|e| format!("{}: {e}", header.run_id))?;
    Ok((report.metrics(&header), path))
}

/// Runs jobs on up to `parallelism` threads; results keep job order.
fn run_jobs(jobs: &[Job<'_>], setup: &Setup) -> Vec<Result<(MetricsRecord, PathBuf), String>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(MetricsRecord, PathBuf), String>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..setup.parallelism.min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let result = run_job(job, setup);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err("job did not run".into())))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    methods: &[Method],
    reference: Option<Method>,
    tasks: &Path,
    config: &Path,
    trace_dir: Option<PathBuf>,
    parallelism: Option<usize>,
    json: bool,
    out: &mut dyn Write,
) -> CliResult {
    if let Some(reference) = reference.filter(|r| !methods.contains(r)) {
        return Err(format!("reference method `{reference}` is not among --methods"));
    }
    let tasks = load_fixture_set(tasks).map_err(|e| e.to_string())?;
    let setup = setup(config, trace_dir, parallelism)?;
    let jobs: Vec<Job<'_>> = methods
        .iter()
        .flat_map(|&method| tasks.iter().map(move |task| Job { method, task }))
        .collect();
    let results = run_jobs(&jobs, &setup);

    let mut batches: BTreeMap<String, Vec<MetricsRecord>> = BTreeMap::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok((record, path)) => {
                if !json {
                    writeln!(
                        out,
                        "{}: {:?} ({:?}) steps={} output_tokens={} trace={}",
                        record.run_id,
                        record.terminal,
                        record.reason,
                        record.steps_used,
                        record.output_tokens,
                        path.display()
                    )
                    .map_err(|e| e.to_string())?;
                }
                batches.entry(record.method.clone()).or_default().push(record);
            }
            Err(message) => failures.push(message),
        }
    }
    if batches.is_empty() {
        return Err(failures.join("; "));
    }
    match reference {
        Some(reference) if batches.contains_key(reference.as_str()) => {
            let report = compare_report(&batches, reference.as_str()).map_err(|e| e.to_string())?;
            print_report(&report, &batches, json, out)?;
        }
        _ => {
            let records: Vec<&MetricsRecord> = batches.values().flatten().collect();
            if json {
                let text = serde_json::to_string_pretty(&records).expect("records serialize");
                writeln!(out, "{text}").map_err(|e| e.to_string())?;
            } else {
                for (method, records) in &batches {
                    let summary = summarize(method, records).map_err(|e| e.to_string())?;
                    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
                    writeln!(out, "{text}").map_err(|e| e.to_string())?;
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures.join("; "))
    }
}

fn print_report(
    report: &CompareReport,
    batches: &BTreeMap<String, Vec<MetricsRecord>>,
    json: bool,
    out: &mut dyn Write,
) -> CliResult {
    let text = if json {
        let doc = serde_json::json!({ "report": report, "runs": batches });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    } else {
        report.render_table()
    };
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn cmd_replay(trace: &Path, out: &mut dyn Write) -> CliResult {
    let (header, events) = read_trace(trace).map_err(|e| e.to_string())?;
    let record = compute_metrics(&header, &events).map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn cmd_report(pattern: &str, reference: Option<Method>, json: bool, out: &mut dyn Write) -> CliResult {
    let paths = glob::glob(pattern).map_err(|e| format!("pattern `{pattern}`: {e}"))?;
    let mut batches: BTreeMap<String, Vec<MetricsRecord>> = BTreeMap::new();
    for path in paths {
        let path = path.map_err(|e| e.to_string())?;
        let (header, events) = read_trace(&path).map_err(|e| e.to_string())?;
        let record = compute_metrics(&header, &events).map_err(|e| e.to_string())?;
        batches.entry(record.method.clone()).or_default().push(record);
    }
    let Some(first) = batches.keys().next().cloned() else {
        return Err(format!("no trace files match `{pattern}`"));
    };
    let reference = match reference {
        Some(r) => r.as_str().to_string(),
        None if batches.contains_key(Method::PlanAct.as_str()) => Method::PlanAct.as_str().to_string(),
        None => first,
    };
    let report = compare_report(&batches, &reference).map_err(|e| e.to_string())?;
    print_report(&report, &batches, json, out)
}
