use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::opcode::{Opcode, RuleGroup};

/// Simplified gas schedule: one cost per rule group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasTable {
    pub cost: BTreeMap<RuleGroup, u64>,
}

impl Default for GasTable {
    fn default() -> Self {
        use RuleGroup::*;
        let cost = [
            (Halt, 0),
            (Pop, 3),
            (Unary, 3),
            (Binary, 3),
            (Ternary, 3),
            (MLoad, 3),
            (Sha3, 30),
            (MStore, 3),
            (SLoad, 200),
            (SStore, 5000),
            (Dup, 3),
            (Swap, 3),
            (JumpI, 10),
            (Jump, 8),
            (Call, 700),
            (Push, 3),
            (Environment, 2),
            (JumpDest, 1),
            (Log, 375),
        ]
        .into_iter()
        .collect();
        GasTable { cost }
    }
}

impl GasTable {
    pub fn cost_of(&self, op: &Opcode) -> u64 {
        self.cost.get(&op.rule_group()).copied().unwrap_or(0)
    }

    /// Total cost of a sequence of executed opcodes.
    pub fn total<'a>(&self, ops: impl IntoIterator<Item = &'a Opcode>) -> u64 {
        ops.into_iter().map(|op| self.cost_of(op)).sum()
    }
}
