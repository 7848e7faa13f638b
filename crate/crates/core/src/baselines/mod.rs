//! Reference controllers run against the same backends, budgets and telemetry
//! as the graph engine: step-by-step reasoning and acting, a one-shot plan,
//! and a global plan that is regenerated on deviation.

use crate::engine::session::Session;
use crate::engine::{
    assemble_history, parse_action, EngineError, Method, RoleBackends, RunConfig, RunReport, EMPTY_HISTORY,
};
use crate::environments::{Environment, TaskInstance};
use crate::graph::TraceEntry;
use crate::roles::{
    parse_evaluation, parse_plan, parse_react, parse_replan, render_plan, Bindings, CallKind, EvalStatus, Plan,
};
use crate::telemetry::{EndReason, EventPayload, ReplanScope, RunTerminal, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    React,
    Cot,
    PlanAndAct,
}

impl From<BaselineKind> for Method {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::React => Method::React,
            BaselineKind::Cot => Method::Cot,
            BaselineKind::PlanAndAct => Method::PlanAct,
        }
    }
}

/// Baselines render every step of the run into their prompts.
fn full_history(trace: &[TraceEntry]) -> String {
    assemble_history(trace, usize::MAX)
}

fn global_plan_bindings(s: &Session<'_>) -> Bindings {
    Bindings::new()
        .set("task_description", &s.task_description)
        .set("nodes_description", &s.task_description)
        .set("admissible_commands", &s.commands)
        .set("history", EMPTY_HISTORY)
}

fn executor_bindings(s: &Session<'_>, plan: &Plan, guidance: Option<&str>, trace: &[TraceEntry]) -> Bindings {
    Bindings::new()
        .set("task_description", &s.task_description)
        .set("subgoal", &s.task_description)
        .set("plan", render_plan(plan))
        .optional("guidance", guidance)
        .set("admissible_commands", &s.commands)
        .set("history", full_history(trace))
}

fn evaluation_bindings(s: &Session<'_>, plan: &Plan, trace: &[TraceEntry]) -> Bindings {
    Bindings::new()
        .set("task_description", &s.task_description)
        .set("subgoal", &s.task_description)
        .set("current_plan", render_plan(plan))
        .set("admissible_commands", &s.commands)
        .set("history", full_history(trace))
}

fn completed(s: Session<'_>) -> Result<RunReport, EngineError> {
    s.finish(RunTerminal::Completed, EndReason::EnvironmentDone, None, None)
}

fn terminated(s: Session<'_>, reason: EndReason, detail: impl Into<String>) -> Result<RunReport, EngineError> {
    s.finish(RunTerminal::Terminated, reason, Some(detail.into()), None)
}

/// Thought/action loop over the whole accumulated history.
pub fn run_react(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
) -> Result<RunReport, EngineError> {
    let mut s = Session::start(Method::React.as_str(), task, env, backends, config, sink)?;
    let mut trace = Vec::new();
    loop {
        if s.env.is_done() {
            return completed(s);
        }
        if !s.budget_left() {
            return s.finish(RunTerminal::Terminated, EndReason::StepBudget, None, None);
        }
        let bindings = Bindings::new()
            .set("task_description", &s.task_description)
            .set("admissible_commands", &s.commands)
            .set("history", full_history(&trace));
        let step = match s.call(CallKind::React, None, &bindings, parse_react)? {
            Ok(step) => step,
            Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
        };
        let (entry, _) = s.step(None, &step.action)?;
        trace.push(entry);
    }
}

/// One planning call, then one executor call per plan step. Never replans.
pub fn run_cot(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
) -> Result<RunReport, EngineError> {
    let mut s = Session::start(Method::Cot.as_str(), task, env, backends, config, sink)?;
    let plan = match s.call(CallKind::Plan, None, &global_plan_bindings(&s), parse_plan)? {
        Ok(plan) => plan,
        Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
    };
    let mut trace = Vec::new();
    for step in &plan.steps {
        if s.env.is_done() {
            break;
        }
        if !s.budget_left() {
            return s.finish(RunTerminal::Terminated, EndReason::StepBudget, None, None);
        }
        let guidance = format!("Carry out step {}: {}", step.index, step.step_text);
        let bindings = executor_bindings(&s, &plan, Some(&guidance), &trace);
        let action = match s.call(CallKind::Execute, None, &bindings, parse_action)? {
            Ok(action) => action,
            Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
        };
        let (entry, _) = s.step(None, &action)?;
        trace.push(entry);
    }
    if s.env.is_done() {
        return completed(s);
    }
    let detail = format!("all {} plan steps executed without finishing the task", plan.len());
    terminated(s, EndReason::PlanExhausted, detail)
}

/// Global plan with step-wise execution; any flagged deviation regenerates
/// the whole plan from the full history.
pub fn run_plan_and_act(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backends: &RoleBackends,
    config: &RunConfig,
    sink: &dyn TraceSink,
) -> Result<RunReport, EngineError> {
    let mut s = Session::start(Method::PlanAct.as_str(), task, env, backends, config, sink)?;
    let mut plan = match s.call(CallKind::Plan, None, &global_plan_bindings(&s), parse_plan)? {
        Ok(plan) => plan,
        Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
    };
    let mut trace = Vec::new();
    let mut guidance: Option<String> = None;
    loop {
        if s.env.is_done() {
            return completed(s);
        }
        if !s.budget_left() {
            return s.finish(RunTerminal::Terminated, EndReason::StepBudget, None, None);
        }
        let bindings = executor_bindings(&s, &plan, guidance.take().as_deref(), &trace);
        let action = match s.call(CallKind::Execute, None, &bindings, parse_action)? {
            Ok(action) => action,
            Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
        };
        let (entry, _) = s.step(None, &action)?;
        trace.push(entry);

        let bindings = evaluation_bindings(&s, &plan, &trace);
        let eval = match s.call(CallKind::Evaluate, None, &bindings, parse_evaluation)? {
            Ok(eval) => eval,
            Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
        };
        match eval.status {
            EvalStatus::Completed => {
                let reason = if s.env.is_done() {
                    EndReason::EnvironmentDone
                } else {
                    EndReason::TaskCompleted
                };
                return s.finish(RunTerminal::Completed, reason, eval.reason, None);
            }
            EvalStatus::Failed => {
                return terminated(s, EndReason::TaskFailed, eval.reason.unwrap_or_else(|| "failed".into()))
            }
            EvalStatus::NeedsMoreSteps if eval.need_replan => {
                if s.replans >= s.config.max_replans_per_node {
                    let detail = format!("replan budget of {} exhausted", s.config.max_replans_per_node);
                    return terminated(s, EndReason::ReplanBudget, detail);
                }
                let bindings = evaluation_bindings(&s, &plan, &trace).optional("reason", eval.reason.as_deref());
                let decision = match s.call(CallKind::Replan, None, &bindings, parse_replan)? {
                    Ok(decision) => decision,
                    Err(fault) => return terminated(s, EndReason::RoleFault, fault.to_string()),
                };
                let new_plan = decision.new_plan.filter(|_| decision.replan);
                if let Some(new_plan) = &new_plan {
                    plan = new_plan.clone();
                    s.replans += 1;
                }
                let replan_count = s.replans;
                s.rec.emit(EventPayload::Replan {
                    scope: ReplanScope::Global,
                    accepted: new_plan.is_some(),
                    replan_count,
                    new_plan: new_plan.as_ref().map(render_plan),
                })?;
            }
            EvalStatus::NeedsMoreSteps => guidance = eval.guidance().map(str::to_string),
        }
    }
}
