//! The graph engine: decompose, dispatch ready nodes with node-scoped context,
//! repair deviations inside the active node, revise the graph between rounds.

mod config;
mod history;
mod report;
pub(crate) mod session;

use std::str::FromStr;

use thiserror::Error;

use crate::environments::{EnvError, Environment, TaskInstance};
use crate::graph::{
    apply_revision, build_node_context, ready_nodes, render_dag_state, GraphDocument, GraphError,
    NodeId, NodeScopedContext, NodeStatus, RevisionDelta, TaskGraph, TerminalStatus,
};
use crate::roles::{
    extract_action, parse_evaluation, parse_plan, parse_replan, parse_revision, parse_subgoals,
    render_plan, Bindings, CallKind, EvalStatus, ParseError, Plan,
};
use crate::telemetry::{
    EndReason, EventPayload, ReplanScope, RunTerminal, TelemetryError, TraceEvent, TraceSink,
};

pub use config::{
    RoleBackends, RunConfig, DEFAULT_MAX_REPLANS, DEFAULT_MAX_ROUNDS, DEFAULT_STEP_BUDGET,
};
pub use history::{assemble_history, DEFAULT_HISTORY_CAP, EMPTY_HISTORY};
pub use report::{NodeRecord, RunReport};
use session::Session;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Sees the graph after every graph-related event of a run.
pub trait GraphObserver {
    fn observe(&mut self, event: &TraceEvent, graph: &TaskGraph);
}

impl<F: FnMut(&TraceEvent, &TaskGraph)> GraphObserver for F {
    fn observe(&mut self, event: &TraceEvent, graph: &TaskGraph) {
        self(event, graph)
    }
}

/// Control strategies that share backends, environments and telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Tdp,
    React,
    Cot,
    PlanAct,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tdp, Method::React, Method::Cot, Method::PlanAct];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tdp => "tdp",
            Method::React => "react",
            Method::Cot => "cot",
            Method::PlanAct => "plan-act",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected tdp, react, cot or plan-act)"))
    }
}

/// Runs `task` with the chosen method.
pub fn run_method(
    method: Method,
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
) -> Result<RunReport, EngineError> {
    match method {
        Method::Tdp => run_task(task, env, backends, config, sink),
        Method::React => crate::baselines::run_react(task, env, backends, config, sink),
        Method::Cot => crate::baselines::run_cot(task, env, backends, config, sink),
        Method::PlanAct => crate::baselines::run_plan_and_act(task, env, backends, config, sink),
    }
}

pub fn construct_bindings(task_description: &str, commands: &str) -> Bindings {
    Bindings::new()
        .set("task_description", task_description)
        .set("admissible_commands", commands)
}

/// Planner prompt inputs: nothing beyond the node's own scoped context.
pub fn planner_bindings(task_description: &str, ctx: &NodeScopedContext, commands: &str, cap: usize) -> Bindings {
    Bindings::new()
        .set("task_description", task_description)
        .set("nodes_description", ctx.render_subgoal())
        .set("admissible_commands", commands)
        .set("history", assemble_history(&ctx.local_trace, cap))
}

pub fn executor_bindings(
    task_description: &str,
    ctx: &NodeScopedContext,
    plan: &Plan,
    commands: &str,
    cap: usize,
) -> Bindings {
    Bindings::new()
        .set("task_description", task_description)
        .set("subgoal", ctx.render_subgoal())
        .set("plan", render_plan(plan))
        .optional("guidance", ctx.guidance.as_deref())
        .set("admissible_commands", commands)
        .set("history", assemble_history(&ctx.local_trace, cap))
}

pub fn evaluator_bindings(
    task_description: &str,
    ctx: &NodeScopedContext,
    plan: &Plan,
    commands: &str,
    cap: usize,
) -> Bindings {
    Bindings::new()
        .set("task_description", task_description)
        .set("subgoal", ctx.render_subgoal())
        .set("current_plan", render_plan(plan))
        .set("admissible_commands", commands)
        .set("history", assemble_history(&ctx.local_trace, cap))
}

pub fn replanner_bindings(
    task_description: &str,
    ctx: &NodeScopedContext,
    plan: &Plan,
    reason: Option<&str>,
    commands: &str,
    cap: usize,
) -> Bindings {
    evaluator_bindings(task_description, ctx, plan, commands, cap).optional("reason", reason)
}

pub fn reviser_bindings(task_description: &str, graph: &TaskGraph, steps: u32, commands: &str, cap: usize) -> Bindings {
    Bindings::new()
        .set("task_description", task_description)
        .set("current_step", steps.to_string())
        .set("history", assemble_history(&graph.global_trace(), cap))
        .set("dag_state", render_dag_state(graph))
        .set("admissible_commands", commands)
}

pub(crate) fn parse_action(text: &str) -> Result<String, ParseError> {
    let action = extract_action(text);
    if action.is_empty() {
        return Err(ParseError::NoAction);
    }
    Ok(action)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeExit {
    Finished(TerminalStatus),
    /// The environment finished while the node was still open.
    EnvDone,
    BudgetExhausted,
}

fn node_mut<'g>(graph: &'g mut TaskGraph, id: &NodeId) -> Result<&'g mut crate::graph::SubTaskNode, GraphError> {
    graph.node_mut(id).ok_or_else(|| GraphError::UnknownNode(id.clone()))
}

fn finish_node(
    s: &mut Session<'_>,
    graph: &mut TaskGraph,
    id: &NodeId,
    status: TerminalStatus,
    reason: Option<&str>,
) -> Result<NodeExit, EngineError> {
    let node = node_mut(graph, id)?;
    let from = node.status;
    node.finish(status, reason, s.config.outcome_k)?;
    s.rec.emit(EventPayload::NodeStatus {
        node: id.clone(),
        from,
        to: node.status,
        outcome: node.outcome.clone(),
    })?;
    s.observe(graph);
    Ok(NodeExit::Finished(status))
}

fn current_plan(graph: &TaskGraph, id: &NodeId) -> Result<Plan, GraphError> {
    Ok(graph
        .node(id)
        .ok_or_else(|| GraphError::UnknownNode(id.clone()))?
        .plan
        .clone()
        .unwrap_or_default())
}

/// Plan, then act/evaluate (and possibly replan) until the node settles.
fn execute_node(s: &mut Session<'_>, graph: &mut TaskGraph, id: &NodeId) -> Result<NodeExit, EngineError> {
    node_mut(graph, id)?.transition(NodeStatus::InProgress)?;
    s.rec.emit(EventPayload::NodeStatus {
        node: id.clone(),
        from: NodeStatus::Pending,
        to: NodeStatus::InProgress,
        outcome: None,
    })?;
    s.observe(graph);
    let task = s.task_description.clone();
    let commands = s.commands.clone();
    let cap = s.config.history_cap;

    let ctx = build_node_context(graph, id, None)?;
    let plan = match s.call(CallKind::Plan, Some(id), &planner_bindings(&task, &ctx, &commands, cap), parse_plan)? {
        Ok(plan) => plan,
        Err(fault) => return finish_node(s, graph, id, TerminalStatus::Failed, Some(&fault.to_string())),
    };
    node_mut(graph, id)?.plan = Some(plan);

    let mut guidance: Option<String> = None;
    loop {
        if !s.budget_left() {
            return Ok(NodeExit::BudgetExhausted);
        }
        let plan = current_plan(graph, id)?;
        let ctx = build_node_context(graph, id, guidance.take())?;
        let bindings = executor_bindings(&task, &ctx, &plan, &commands, cap);
        let action = match s.call(CallKind::Execute, Some(id), &bindings, parse_action)? {
            Ok(action) => action,
            Err(fault) => return finish_node(s, graph, id, TerminalStatus::Failed, Some(&fault.to_string())),
        };
        let (entry, _) = s.step(Some(id), &action)?;
        node_mut(graph, id)?.record_step(entry);
        s.observe(graph);

        let ctx = build_node_context(graph, id, None)?;
        let bindings = evaluator_bindings(&task, &ctx, &plan, &commands, cap);
        let eval = match s.call(CallKind::Evaluate, Some(id), &bindings, parse_evaluation)? {
            Ok(eval) => eval,
            Err(fault) => return finish_node(s, graph, id, TerminalStatus::Failed, Some(&fault.to_string())),
        };
        match eval.status {
            EvalStatus::Completed => {
                return finish_node(s, graph, id, TerminalStatus::Completed, eval.reason.as_deref())
            }
            EvalStatus::Failed => return finish_node(s, graph, id, TerminalStatus::Failed, eval.reason.as_deref()),
            EvalStatus::NeedsMoreSteps if eval.need_replan => {
                let replan_count = graph.node(id).map_or(0, |n| n.replan_count);
                if replan_count >= s.config.max_replans_per_node {
                    let reason = format!(
                        "replan budget of {} exhausted; {}",
                        s.config.max_replans_per_node,
                        eval.reason.as_deref().unwrap_or("no reason given")
                    );
                    return finish_node(s, graph, id, TerminalStatus::Failed, Some(&reason));
                }
                let bindings = replanner_bindings(&task, &ctx, &plan, eval.reason.as_deref(), &commands, cap);
                let decision = match s.call(CallKind::Replan, Some(id), &bindings, parse_replan)? {
                    Ok(decision) => decision,
                    Err(fault) => {
                        return finish_node(s, graph, id, TerminalStatus::Failed, Some(&fault.to_string()))
                    }
                };
                let node = node_mut(graph, id)?;
                let new_plan = decision.new_plan.filter(|_| decision.replan);
                if let Some(new_plan) = &new_plan {
                    node.plan = Some(new_plan.clone());
                    node.replan_count += 1;
                    s.replans += 1;
                    s.node_replans += 1;
                }
                let replan_count = node.replan_count;
                s.rec.emit(EventPayload::Replan {
                    scope: ReplanScope::Node { node: id.clone() },
                    accepted: new_plan.is_some(),
                    replan_count,
                    new_plan: new_plan.as_ref().map(render_plan),
                })?;
                s.observe(graph);
            }
            EvalStatus::NeedsMoreSteps => guidance = eval.guidance().map(str::to_string),
        }
        if s.env.is_done() {
            return Ok(NodeExit::EnvDone);
        }
    }
}

/// Asks the supervisor for a graph edit and applies it atomically.
fn revise(s: &mut Session<'_>, graph: &mut TaskGraph, round: u32) -> Result<(), EngineError> {
    let bindings = reviser_bindings(&s.task_description, graph, s.steps, &s.commands, s.config.history_cap);
    let delta = match s.call(CallKind::Revise, None, &bindings, parse_revision)? {
        Ok(delta) => delta,
        Err(fault) => {
            s.rec.emit(EventPayload::Revision {
                round,
                delta: RevisionDelta::no_op(""),
                applied: false,
                rejection: Some(fault.to_string()),
                added: Vec::new(),
                removed: Vec::new(),
            })?;
            s.observe(graph);
            return Ok(());
        }
    };
    let payload = match apply_revision(graph, &delta) {
        Ok(applied) => {
            *graph = applied.graph;
            EventPayload::Revision {
                round,
                applied: delta.need_update,
                delta,
                rejection: None,
                added: applied.added,
                removed: applied.removed,
            }
        }
        Err(rejection) => EventPayload::Revision {
            round,
            delta,
            applied: false,
            rejection: Some(rejection.to_string()),
            added: Vec::new(),
            removed: Vec::new(),
        },
    };
    s.rec.emit(payload)?;
    s.observe(graph);
    Ok(())
}

fn done_reason(s: &Session<'_>, graph: &TaskGraph) -> Option<EndReason> {
    if s.env.is_done() {
        Some(EndReason::EnvironmentDone)
    } else if graph.all_sinks_completed() {
        Some(EndReason::SinksCompleted)
    } else {
        None
    }
}

/// Runs the full decompose / dispatch / revise loop on one task.
pub fn run_task(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
) -> Result<RunReport, EngineError> {
    run_task_observed(task, env, backends, config, sink, &mut |_: &TraceEvent, _: &TaskGraph| {})
}

/// [`run_task`] with a hook that sees a graph snapshot after each graph-related event.
pub fn run_task_observed(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
    observer: &mut dyn GraphObserver,
) -> Result<RunReport, EngineError> {
    let mut s = Session::start(Method::Tdp.as_str(), task, env, backends, config, sink)?.with_observer(observer);
    let task_description = s.task_description.clone();
    let graph_parser = |text: &str| -> Result<TaskGraph, String> {
        let specs = parse_subgoals(text).map_err(|e| e.to_string())?;
        TaskGraph::from_subgoals(task_description.as_str(), &specs).map_err(|e| e.to_string())
    };
    let bindings = construct_bindings(&s.task_description, &s.commands);
    let mut graph = match s.call(CallKind::Construct, None, &bindings, graph_parser)? {
        Ok(graph) => graph,
        Err(fault) => {
            return s.finish(RunTerminal::Terminated, EndReason::ConstructionFault, Some(fault.to_string()), None)
        }
    };
    s.rec.emit(EventPayload::GraphConstructed {
        graph: GraphDocument::from(&graph),
    })?;
    s.observe(&graph);

    let mut round = 0;
    loop {
        if let Some(reason) = done_reason(&s, &graph) {
            return s.finish(RunTerminal::Completed, reason, None, Some(graph));
        }
        if !s.budget_left() {
            return s.finish(RunTerminal::Terminated, EndReason::StepBudget, None, Some(graph));
        }
        if round >= s.config.max_rounds {
            return s.finish(RunTerminal::Terminated, EndReason::RoundLimit, None, Some(graph));
        }
        round += 1;
        let ready = ready_nodes(&graph);
        for id in &ready {
            if s.env.is_done() || !s.budget_left() {
                break;
            }
            s.rec.emit(EventPayload::NodeDispatched { node: id.clone(), round })?;
            s.observe(&graph);
            if execute_node(&mut s, &mut graph, id)? == NodeExit::BudgetExhausted {
                break;
            }
        }
        if let Some(reason) = done_reason(&s, &graph) {
            return s.finish(RunTerminal::Completed, reason, None, Some(graph));
        }
        if !s.budget_left() {
            return s.finish(RunTerminal::Terminated, EndReason::StepBudget, None, Some(graph));
        }
        revise(&mut s, &mut graph, round)?;
        if ready.is_empty() && ready_nodes(&graph).is_empty() {
            let detail = "no node is ready and revision made none ready".to_string();
            return s.finish(RunTerminal::Terminated, EndReason::Stall, Some(detail), Some(graph));
        }
    }
}
