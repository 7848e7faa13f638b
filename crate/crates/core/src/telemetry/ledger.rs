use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EventPayload, TraceEvent};
use crate::graph::NodeId;
use crate::roles::{Role, TokenUsage};

/// One ledger cell: a run, a role and the node the call served (None for run-wide calls).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LedgerKey {
    pub run_id: String,
    pub role: Role,
    pub node: Option<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenLedger {
    cells: BTreeMap<LedgerKey, TokenUsage>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: LedgerKey, usage: TokenUsage) {
        *self.cells.entry(key).or_default() += usage;
    }

    pub fn from_events(events: &[TraceEvent]) -> Self {
        let mut ledger = Self::new();
        for event in events {
            if let EventPayload::RoleCall {
                role, node, usage, ..
            } = &event.payload
            {
                ledger.record(
                    LedgerKey {
                        run_id: event.run_id.clone(),
                        role: *role,
                        node: node.clone(),
                    },
                    *usage,
                );
            }
        }
        ledger
    }

    pub fn cells(&self) -> &BTreeMap<LedgerKey, TokenUsage> {
        &self.cells
    }

    pub fn total(&self) -> TokenUsage {
        self.cells.values().copied().sum()
    }

    pub fn by_role(&self) -> BTreeMap<Role, TokenUsage> {
        let mut out = BTreeMap::new();
        for (key, usage) in &self.cells {
            *out.entry(key.role).or_default() += *usage;
        }
        out
    }
}
