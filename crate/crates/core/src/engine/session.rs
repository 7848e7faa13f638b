use std::collections::BTreeMap;
use std::fmt;

use super::{EngineError, GraphObserver, RoleBackends, RunConfig, RunReport};
use crate::environments::{render_commands, Environment, StepResult, TaskInstance};
use crate::graph::{NodeId, TaskGraph, TraceEntry};
use crate::roles::{call_role, Bindings, CallKind, Role, RoleFault, TokenUsage};
use crate::telemetry::{EndReason, EventPayload, Recorder, RunTerminal, TraceSink};

/// Per-run plumbing shared by the graph engine and the baselines: role calls
/// with token accounting, budgeted environment steps and event emission.
pub(crate) struct Session<'a> {
    pub config: &'a RunConfig,
    backends: &'a RoleBackends,
    pub env: &'a mut dyn Environment,
    pub rec: Recorder<'a>,
    method: String,
    task_id: String,
    pub task_description: String,
    pub commands: String,
    pub tokens: BTreeMap<Role, TokenUsage>,
    pub steps: u32,
    pub replans: u32,
    pub node_replans: u32,
    observer: Option<&'a mut dyn GraphObserver>,
}

impl<'a> Session<'a> {
    pub fn start(
        method: &str,
        task: &TaskInstance,
        env: &'a mut dyn Environment,
        backends: &'a RoleBackends,
        config: &'a RunConfig,
        sink: &'a dyn TraceSink,
    ) -> Result<Self, EngineError> {
        config.validate().map_err(EngineError::Config)?;
        let task_description = env.reset(task)?;
        let commands = render_commands(&env.admissible_commands());
        let run_id = crate::telemetry::run_id(method, &task.id);
        Ok(Self {
            config,
            backends,
            env,
            rec: Recorder::new(run_id, sink, config.wall_clock_timestamps),
            method: method.to_string(),
            task_id: task.id.clone(),
            task_description,
            commands,
            tokens: BTreeMap::new(),
            steps: 0,
            replans: 0,
            node_replans: 0,
            observer: None,
        })
    }

    pub fn with_observer(mut self, observer: &'a mut dyn GraphObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    /// Shows the last emitted event and the graph as it stands to the observer.
    pub fn observe(&mut self, graph: &TaskGraph) {
        if let (Some(observer), Some(event)) = (self.observer.as_deref_mut(), self.rec.last()) {
            observer.observe(event, graph);
        }
    }

    pub fn budget_left(&self) -> bool {
        self.steps < self.config.s_max
    }

    /// One role call with retries; the outer error is a telemetry failure,
    /// the inner one a role fault the caller must handle.
    pub fn call<T, E, P>(
        &mut self,
        call: CallKind,
        node: Option<&NodeId>,
        bindings: &Bindings,
        parser: P,
    ) -> Result<Result<T, RoleFault>, EngineError>
    where
        E: fmt::Display,
        P: Fn(&str) -> Result<T, E>,
    {
        let template = self.config.templates.get(call.template());
        let result = call_role(
            self.backends.for_call(call),
            call,
            template,
            bindings,
            parser,
            self.config.parser_retry_budget,
        );
        let (usage, attempts, fault, value) = match result {
            Ok(out) => (out.usage, out.attempts, None, Ok(out.value)),
            Err(fault) => (fault.usage(), fault.attempts.clone(), Some(fault.to_string()), Err(fault)),
        };
        *self.tokens.entry(call.role()).or_default() += usage;
        self.rec.emit(EventPayload::RoleCall {
            call,
            role: call.role(),
            node: node.cloned(),
            usage,
            attempts,
            fault,
        })?;
        Ok(value)
    }

    /// Steps the environment once and returns the recorded trace entry.
    pub fn step(&mut self, node: Option<&NodeId>, action: &str) -> Result<(TraceEntry, StepResult), EngineError> {
        debug_assert!(self.budget_left());
        let result = self.env.step(action)?;
        let entry = TraceEntry {
            step_index: self.steps,
            action: action.to_string(),
            observation: result.observation.clone(),
        };
        self.steps += 1;
        self.rec.emit(EventPayload::EnvStep {
            node: node.cloned(),
            step_index: entry.step_index,
            action: entry.action.clone(),
            observation: entry.observation.clone(),
            reward_delta: result.reward_delta,
            done: result.done,
        })?;
        Ok((entry, result))
    }

    pub fn finish(
        mut self,
        terminal: RunTerminal,
        reason: EndReason,
        detail: Option<String>,
        graph: Option<TaskGraph>,
    ) -> Result<RunReport, EngineError> {
        let env = self.env.metrics();
        let delivered = env.delivered || graph.as_ref().is_some_and(TaskGraph::all_sinks_completed);
        self.rec.emit(EventPayload::RunEnd {
            terminal,
            reason,
            steps_used: self.steps,
            delivered,
            env: env.clone(),
            detail: detail.clone(),
        })?;
        Ok(RunReport {
            run_id: self.rec.run_id().to_string(),
            method: self.method,
            task_id: self.task_id,
            terminal,
            reason,
            detail,
            steps_used: self.steps,
            nodes: graph.as_ref().map(RunReport::node_records).unwrap_or_default(),
            tokens: self.tokens,
            replans_total: self.replans,
            node_scoped_replans: self.node_replans,
            delivered,
            env,
            graph,
        })
    }
}
