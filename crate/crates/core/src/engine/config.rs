use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::history::DEFAULT_HISTORY_CAP;
use crate::graph::DEFAULT_OUTCOME_K;
use crate::roles::{CallKind, ModelBackend, Role, TemplateSet, DEFAULT_RETRY_BUDGET};

pub const DEFAULT_STEP_BUDGET: u32 = 30;
pub const DEFAULT_MAX_REPLANS: u32 = 3;
pub const DEFAULT_MAX_ROUNDS: u32 = 64;

/// Budgets and prompt templates shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Hard cap on environment interactions per run.
    pub s_max: u32,
    pub max_replans_per_node: u32,
    pub parser_retry_budget: u32,
    pub history_cap: usize,
    pub outcome_k: usize,
    /// Outer-loop guard for the graph engine.
    pub max_rounds: u32,
    pub wall_clock_timestamps: bool,
    #[serde(skip)]
    pub templates: TemplateSet,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            s_max: DEFAULT_STEP_BUDGET,
            max_replans_per_node: DEFAULT_MAX_REPLANS,
            parser_retry_budget: DEFAULT_RETRY_BUDGET,
            history_cap: DEFAULT_HISTORY_CAP,
            outcome_k: DEFAULT_OUTCOME_K,
            max_rounds: DEFAULT_MAX_ROUNDS,
            wall_clock_timestamps: false,
            templates: TemplateSet::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.s_max == 0 {
            return Err("s_max must be at least 1".into());
        }
        if self.history_cap < 2 {
            return Err("history_cap must be at least 2".into());
        }
        if self.max_rounds == 0 {
            return Err("max_rounds must be at least 1".into());
        }
        Ok(())
    }
}

/// One backend per role; the same backend may serve several roles.
#[derive(Clone)]
pub struct RoleBackends {
    pub supervisor: Arc<dyn ModelBackend>,
    pub planner: Arc<dyn ModelBackend>,
    pub executor: Arc<dyn ModelBackend>,
}

impl RoleBackends {
    pub fn uniform(backend: Arc<dyn ModelBackend>) -> Self {
        Self {
            supervisor: backend.clone(),
            planner: backend.clone(),
            executor: backend,
        }
    }

    pub fn for_role(&self, role: Role) -> &dyn ModelBackend {
        match role {
            Role::Supervisor => self.supervisor.as_ref(),
            Role::Planner => self.planner.as_ref(),
            Role::Executor => self.executor.as_ref(),
        }
    }

    pub fn for_call(&self, call: CallKind) -> &dyn ModelBackend {
        self.for_role(call.role())
    }
}

impl std::fmt::Debug for RoleBackends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoleBackends").finish_non_exhaustive()
    }
}
