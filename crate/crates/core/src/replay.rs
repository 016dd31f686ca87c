//! Differential replay of a bundle's transactions on the original and the
//! fixed contract, with gas and step overhead.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bundle::{ContractBundle, INJECTED_CHECK};
use crate::detect::{Detection, VulnerabilityKind};
use crate::error::{Error, Result};
use crate::evm::concrete::{run_concrete_with, ConcreteRun, HaltKind, RunOptions, Storage};
use crate::evm::gas::GasTable;
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;
use crate::patch::{apply_patches, edited_regions, plan_fixes};
use crate::word::Word;

/// Transactions replayed per contract.
pub const MAX_TRANSACTIONS: usize = 10;

/// Source node kinds an arithmetic opcode must map to to count as a site.
const ARITHMETIC_NODES: &[&str] = &["BinaryOperation", "Assignment", "UnaryOperation"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TxOverhead {
    pub index: usize,
    pub gas_original: u64,
    pub gas_fixed: u64,
    /// Executed instructions, nested calls included.
    pub time_original: u64,
    pub time_fixed: u64,
    pub halt_original: HaltKind,
    pub halt_fixed: HaltKind,
    /// The fixed run reverted at an inserted check.
    pub triggered: bool,
    pub gas_delta: i64,
    pub gas_overhead_ppm: i64,
    pub gas_overhead_pct: f64,
    pub time_overhead_pct: f64,
}

/// Checked arithmetic sites by opcode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckCounts {
    pub targeted: usize,
    pub blanket: usize,
    pub targeted_by_op: BTreeMap<String, usize>,
    pub blanket_by_op: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadStats {
    pub contract: String,
    pub transactions: Vec<TxOverhead>,
    pub mean_gas_overhead_pct: f64,
    pub mean_time_overhead_pct: f64,
    pub checks: CheckCounts,
}

/// `(fixed - original) / original` in percent; 0 for an empty original.
pub fn overhead_pct(original: u64, fixed: u64) -> f64 {
    if original == 0 {
        return 0.0;
    }
    (fixed as f64 - original as f64) * 100.0 / original as f64
}

/// Same ratio in parts per million, truncated toward zero.
pub fn overhead_ppm(original: u64, fixed: u64) -> i64 {
    if original == 0 {
        return 0;
    }
    (fixed as i64 - original as i64) * 1_000_000 / original as i64
}

/// Arithmetic source sites: distinct spans of ADD/SUB/MUL/DIV opcodes,
/// keyed by span and labelled with the opcode.
pub fn arithmetic_sites(program: &Program, bundle: &ContractBundle) -> BTreeMap<(usize, usize), Mnemonic> {
    let mut out = BTreeMap::new();
    for e in &bundle.sourcemap {
        if e.node == INJECTED_CHECK || !ARITHMETIC_NODES.contains(&e.node.as_str()) {
            continue;
        }
        let Some(op) = program.get(e.pc) else { continue };
        if matches!(
            op.mnemonic,
            Mnemonic::Add | Mnemonic::Sub | Mnemonic::Mul | Mnemonic::Div
        ) {
            out.entry((e.start, e.length)).or_insert(op.mnemonic);
        }
    }
    out
}

/// Targeted counts the sites in culprit chains of arithmetic reports;
/// blanket counts every site.
pub fn check_counts(program: &Program, bundle: &ContractBundle, detection: &Detection) -> CheckCounts {
    let sites = arithmetic_sites(program, bundle);
    let mut culprit_spans = BTreeSet::new();
    for r in detection.of_kind(VulnerabilityKind::Arithmetic) {
        for c in &r.culprits {
            if let Some(e) = bundle.source_entry(*c) {
                culprit_spans.insert((e.start, e.length));
            }
        }
    }
    let mut counts = CheckCounts::default();
    for (span, m) in &sites {
        let name = m.to_string();
        counts.blanket += 1;
        *counts.blanket_by_op.entry(name.clone()).or_default() += 1;
        if culprit_spans.contains(span) {
            counts.targeted += 1;
            *counts.targeted_by_op.entry(name).or_default() += 1;
        }
    }
    counts
}

/// Pcs of `fixed` whose revert counts as an inserted check firing: pcs
/// compiled from a check template, or mapped into text the plan inserted.
pub fn check_pcs(fixed: &ContractBundle, regions: &[(usize, usize)]) -> BTreeSet<usize> {
    fixed
        .sourcemap
        .iter()
        .filter(|e| {
            e.node == INJECTED_CHECK
                || regions
                    .iter()
                    .any(|(s, t)| e.start < *t && *s < e.start + e.length.max(1))
        })
        .map(|e| e.pc)
        .collect()
}

fn triggered(run: &ConcreteRun, checks: &BTreeSet<usize>) -> bool {
    let outer = !run.halt.kind.is_success() && checks.contains(&run.halt.pc);
    outer
        || run
            .nested
            .iter()
            .any(|n| !n.halt.is_success() && checks.contains(&n.halt_pc))
}

fn nonzero(s: &Storage) -> BTreeMap<Word, Word> {
    s.iter()
        .filter(|(_, v)| **v != Word::ZERO)
        .map(|(k, v)| (*k, *v))
        .collect()
}

/// Replays up to `MAX_TRANSACTIONS` of the original bundle's transactions
/// on both contracts. Storage carries over between transactions; after a
/// triggered check the fixed contract continues from the original's state.
pub fn replay(
    original: &ContractBundle,
    fixed: &ContractBundle,
    detection: &Detection,
    gas: &GasTable,
) -> Result<OverheadStats> {
    let p_orig = original.program()?;
    let p_fixed = fixed.program()?;
    let plan = plan_fixes(detection, original)?;
    let regions = match apply_patches(&original.source, &plan) {
        Ok(text) if text == fixed.source => edited_regions(&plan),
        _ => Vec::new(),
    };
    let checks = check_pcs(fixed, &regions);
    let opts = RunOptions {
        gas: gas.clone(),
        ..RunOptions::default()
    };

    let mut s_orig = original.initial_storage()?;
    let mut s_fixed = fixed.initial_storage()?;
    let mut rows = Vec::new();
    for (index, tx) in original.transactions.iter().take(MAX_TRANSACTIONS).enumerate() {
        let a = run_concrete_with(&p_orig, &tx.env(&s_orig)?, &opts)?;
        let b = run_concrete_with(&p_fixed, &tx.env(&s_fixed)?, &opts)?;
        let fired = triggered(&b, &checks);
        // A reverted transaction leaves storage as it was.
        let next_orig = if a.halt.kind.is_success() {
            a.final_storage().clone()
        } else {
            s_orig.clone()
        };
        let next_fixed = if b.halt.kind.is_success() {
            b.final_storage().clone()
        } else {
            s_fixed.clone()
        };
        if !fired {
            let same = a.halt.kind == b.halt.kind
                && a.halt.output == b.halt.output
                && nonzero(&next_orig) == nonzero(&next_fixed);
            if !same {
                return Err(Error::DivergentRun(index));
            }
        }
        s_fixed = if fired { next_orig.clone() } else { next_fixed };
        s_orig = next_orig;
        let (to, tf) = (a.records.len() as u64, b.records.len() as u64);
        rows.push(TxOverhead {
            index,
            gas_original: a.gas_used,
            gas_fixed: b.gas_used,
            time_original: to,
            time_fixed: tf,
            halt_original: a.halt.kind,
            halt_fixed: b.halt.kind,
            triggered: fired,
            gas_delta: b.gas_used as i64 - a.gas_used as i64,
            gas_overhead_ppm: overhead_ppm(a.gas_used, b.gas_used),
            gas_overhead_pct: overhead_pct(a.gas_used, b.gas_used),
            time_overhead_pct: overhead_pct(to, tf),
        });
    }
    // Transactions stopped by a check run a different path; they are
    // reported but left out of the means.
    let measured: Vec<&TxOverhead> = rows.iter().filter(|r| !r.triggered).collect();
    let mean = |f: fn(&TxOverhead) -> f64| {
        if measured.is_empty() {
            0.0
        } else {
            measured.iter().map(|r| f(r)).sum::<f64>() / measured.len() as f64
        }
    };
    Ok(OverheadStats {
        contract: original.name.clone(),
        mean_gas_overhead_pct: mean(|r| r.gas_overhead_pct),
        mean_time_overhead_pct: mean(|r| r.time_overhead_pct),
        checks: check_counts(&p_orig, original, detection),
        transactions: rows,
    })
}
