//! Recognized guards: the storage lock of a nonReentrant modifier and the
//! bound checks of safe-math helpers.

use std::collections::BTreeSet;

use crate::bundle::INJECTED_CHECK;
use crate::dependency::{stack_operands, DependencyRelation, Occurrence};
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;
use crate::symbolic::enumerate::Trace;
use crate::word::Word;

/// Constant storage keys read by loads that feed the condition of the
/// JUMPI at `pos`.
fn checked_keys(trace: &Trace, pos: usize, dp: &DependencyRelation) -> BTreeSet<Word> {
    dp.data_closure(Occurrence::new(trace.id, pos))
        .into_iter()
        .filter(|o| o.trace == trace.id)
        .filter_map(|o| trace.steps[o.pos].storage_read().and_then(|k| k.as_concrete()))
        .collect()
}

/// For each position, the lock slots held when it executes: slots whose
/// value was tested by a branch and then set to a nonzero constant, and not
/// released since.
pub fn held_locks(_program: &Program, trace: &Trace, dp: &DependencyRelation) -> Vec<BTreeSet<Word>> {
    let mut checked = BTreeSet::new();
    let mut held: BTreeSet<Word> = BTreeSet::new();
    let mut out = Vec::with_capacity(trace.steps.len());
    for (i, s) in trace.steps.iter().enumerate() {
        out.push(held.clone());
        match s.op.mnemonic {
            Mnemonic::JumpI => checked.extend(checked_keys(trace, i, dp)),
            Mnemonic::SStore => {
                let Some(k) = s.args[0].as_concrete() else { continue };
                match s.args[1].as_concrete() {
                    Some(v) if !v.is_zero() && checked.contains(&k) => {
                        held.insert(k);
                    }
                    _ => {
                        held.remove(&k);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Whether a branch before `pos` tests lock slot `key`.
pub fn checks_lock(trace: &Trace, pos: usize, key: Word, dp: &DependencyRelation) -> bool {
    trace.steps[..pos.min(trace.steps.len())]
        .iter()
        .enumerate()
        .any(|(j, s)| s.op.mnemonic == Mnemonic::JumpI && checked_keys(trace, j, dp).contains(&key))
}

/// Positions of arithmetic instructions covered by an injected bound check:
/// the check's condition depends on the result or on the operands that can
/// make it fail (only the divisor for DIV).
pub fn injected_check_guards(program: &Program, trace: &Trace, dp: &DependencyRelation) -> BTreeSet<usize> {
    let checks: Vec<BTreeSet<Occurrence>> = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.op.mnemonic == Mnemonic::JumpI
                && program.node_kinds.get(&s.pc).map(String::as_str) == Some(INJECTED_CHECK)
        })
        .map(|(j, _)| dp.data_closure(Occurrence::new(trace.id, j)))
        .collect();
    let mut out = BTreeSet::new();
    if checks.is_empty() {
        return out;
    }
    let operands = stack_operands(trace);
    for (a, s) in trace.steps.iter().enumerate() {
        if !matches!(
            s.op.mnemonic,
            Mnemonic::Add | Mnemonic::Sub | Mnemonic::Mul | Mnemonic::Div | Mnemonic::Exp
        ) {
            continue;
        }
        let occ = Occurrence::new(trace.id, a);
        let checked = match s.op.mnemonic {
            Mnemonic::Div => &operands[a][1..],
            _ => &operands[a][..],
        };
        let producers: BTreeSet<Occurrence> = checked
            .iter()
            .flatten()
            .map(|p| Occurrence::new(trace.id, *p))
            .collect();
        if checks
            .iter()
            .any(|c| c.contains(&occ) || (!producers.is_empty() && producers.is_subset(c)))
        {
            out.insert(a);
        }
    }
    out
}
