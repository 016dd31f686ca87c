//! Vulnerability detectors over the dependency relation: intra- and
//! cross-function reentrancy, dangerous tx.origin, and arithmetic reaching
//! an external call.

mod guards;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bundle::ContractBundle;
use crate::dependency::{DependencyRelation, Occurrence};
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;
use crate::symbolic::enumerate::{Trace, TraceSet};

pub use guards::{checks_lock, held_locks, injected_check_guards};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VulnerabilityKind {
    IntraReentrancy,
    CrossReentrancy,
    TxOrigin,
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub kind: VulnerabilityKind,
    pub function: String,
    pub critical_pc: usize,
    pub culprits: Vec<usize>,
    /// EXP sites on the same dependency chains; fixed alongside arithmetic.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub related: Vec<usize>,
    pub source: Option<Span>,
    pub trace_id: usize,
}

/// Reports plus the findings suppressed by a recognized guard.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub reports: Vec<VulnerabilityReport>,
    pub mitigated: Vec<VulnerabilityReport>,
}

impl Detection {
    pub fn is_vulnerable(&self) -> bool {
        !self.reports.is_empty()
    }

    pub fn kinds(&self) -> BTreeSet<VulnerabilityKind> {
        self.reports.iter().map(|r| r.kind).collect()
    }

    pub fn of_kind(&self, kind: VulnerabilityKind) -> impl Iterator<Item = &VulnerabilityReport> {
        self.reports.iter().filter(move |r| r.kind == kind)
    }

    /// Attaches source spans of the critical pcs (the culprit for cross
    /// reports) from the bundle's source map.
    pub fn with_sources(mut self, bundle: &ContractBundle) -> Self {
        for r in self.reports.iter_mut().chain(self.mitigated.iter_mut()) {
            let pc = match r.kind {
                VulnerabilityKind::CrossReentrancy => r.culprits[0],
                _ => r.critical_pc,
            };
            r.source = bundle.source_entry(pc).map(|e| Span {
                start: e.start,
                length: e.length,
            });
        }
        self
    }
}

/// Opcodes whose execution can hand control or value to another account.
pub fn is_critical(m: Mnemonic) -> bool {
    m.is_critical()
}

fn is_arith(m: Mnemonic) -> bool {
    matches!(m, Mnemonic::Add | Mnemonic::Sub | Mnemonic::Mul | Mnemonic::Div)
}

/// A finding before grouping: one critical occurrence, one culprit pc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Finding {
    kind: VulnerabilityKind,
    critical_pc: usize,
    critical: Occurrence,
    culprit: usize,
    mitigated: bool,
}

fn critical_occurrences(trace: &Trace) -> impl Iterator<Item = usize> + '_ {
    trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| is_critical(s.op.mnemonic))
        .map(|(i, _)| i)
}

fn intra_findings(program: &Program, trace: &Trace, dp: &DependencyRelation, out: &mut Vec<Finding>) {
    let held = held_locks(program, trace, dp);
    for c in critical_occurrences(trace) {
        let closure = dp.closure(Occurrence::new(trace.id, c));
        let f_c = program.function_of(trace.steps[c].pc);
        for o in closure.range(Occurrence::new(trace.id, c + 1)..Occurrence::new(trace.id, usize::MAX)) {
            let s = &trace.steps[o.pos];
            if s.op.mnemonic != Mnemonic::SStore || program.function_of(s.pc) != f_c {
                continue;
            }
            out.push(Finding {
                kind: VulnerabilityKind::IntraReentrancy,
                critical_pc: trace.steps[c].pc,
                critical: Occurrence::new(trace.id, c),
                culprit: s.pc,
                mitigated: !held[c].is_empty(),
            });
        }
    }
}

/// Intra-function reentrancy in one trace: a critical opcode that depends
/// on a later SSTORE of the same function.
pub fn detect_intra_reentrancy(program: &Program, trace: &Trace, dp: &DependencyRelation) -> Detection {
    let mut f = Vec::new();
    intra_findings(program, trace, dp, &mut f);
    group(program, f)
}

/// Cross-function reentrancy: an SSTORE of another function that the
/// critical opcode of an intra-vulnerable trace depends on.
pub fn detect_cross_reentrancy(program: &Program, traces: &TraceSet, dp: &DependencyRelation) -> Detection {
    let mut intra = Vec::new();
    for t in &traces.traces {
        intra_findings(program, t, dp, &mut intra);
    }
    let mut out = Vec::new();
    cross_findings(program, traces, dp, &intra, &mut out);
    group(program, out)
}

fn cross_findings(
    program: &Program,
    traces: &TraceSet,
    dp: &DependencyRelation,
    intra: &[Finding],
    out: &mut Vec<Finding>,
) {
    let vulnerable: BTreeSet<Occurrence> = intra.iter().map(|f| f.critical).collect();
    let mut held_cache: BTreeMap<usize, Vec<BTreeSet<crate::word::Word>>> = BTreeMap::new();
    for c in vulnerable {
        let trace = &traces.traces[c.trace];
        let held = held_cache
            .entry(c.trace)
            .or_insert_with(|| held_locks(program, trace, dp))[c.pos]
            .clone();
        let f_c = program.function_of(trace.steps[c.pos].pc);
        for o in dp.closure(c) {
            let s = &traces.traces[o.trace].steps[o.pos];
            if s.op.mnemonic != Mnemonic::SStore || program.function_of(s.pc) == f_c {
                continue;
            }
            let guarded = held.iter().any(|k| checks_lock(&traces.traces[o.trace], o.pos, *k, dp));
            out.push(Finding {
                kind: VulnerabilityKind::CrossReentrancy,
                critical_pc: trace.steps[c.pos].pc,
                critical: c,
                culprit: s.pc,
                mitigated: guarded,
            });
        }
    }
}

fn origin_findings(trace: &Trace, traces: &TraceSet, dp: &DependencyRelation, out: &mut Vec<Finding>) {
    for c in critical_occurrences(trace) {
        for o in dp.closure(Occurrence::new(trace.id, c)) {
            let s = &traces.traces[o.trace].steps[o.pos];
            if s.op.mnemonic == Mnemonic::Origin {
                out.push(Finding {
                    kind: VulnerabilityKind::TxOrigin,
                    critical_pc: trace.steps[c].pc,
                    critical: Occurrence::new(trace.id, c),
                    culprit: s.pc,
                    mitigated: false,
                });
            }
        }
    }
}

/// Critical opcodes of `trace` depending on an ORIGIN read, in any trace.
pub fn detect_tx_origin(program: &Program, trace: &Trace, traces: &TraceSet, dp: &DependencyRelation) -> Detection {
    let mut f = Vec::new();
    origin_findings(trace, traces, dp, &mut f);
    group(program, f)
}

/// Arithmetic occurrences covered by an injected check, over all traces.
fn all_guards(program: &Program, traces: &TraceSet, dp: &DependencyRelation) -> BTreeSet<Occurrence> {
    traces
        .traces
        .iter()
        .flat_map(|t| {
            injected_check_guards(program, t, dp)
                .into_iter()
                .map(move |pos| Occurrence::new(t.id, pos))
        })
        .collect()
}

fn arithmetic_findings(
    trace: &Trace,
    traces: &TraceSet,
    dp: &DependencyRelation,
    guarded: &BTreeSet<Occurrence>,
    out: &mut Vec<Finding>,
    exp: &mut BTreeMap<(usize, usize), BTreeSet<usize>>,
) {
    for c in critical_occurrences(trace) {
        let crit = Occurrence::new(trace.id, c);
        for o in dp.closure(crit) {
            let s = &traces.traces[o.trace].steps[o.pos];
            let m = s.op.mnemonic;
            if s.args.iter().all(|a| a.is_concrete()) {
                continue;
            }
            if m == Mnemonic::Exp {
                exp.entry((trace.steps[c].pc, trace.id)).or_default().insert(s.pc);
            }
            if !is_arith(m) {
                continue;
            }
            out.push(Finding {
                kind: VulnerabilityKind::Arithmetic,
                critical_pc: trace.steps[c].pc,
                critical: crit,
                culprit: s.pc,
                mitigated: guarded.contains(&o),
            });
        }
    }
}

/// Critical opcodes depending on ADD, SUB, MUL or DIV over a symbolic
/// operand. The arithmetic may run in another trace and reach the critical
/// opcode through storage.
pub fn detect_arithmetic(program: &Program, traces: &TraceSet, dp: &DependencyRelation) -> Detection {
    let guarded = all_guards(program, traces, dp);
    let mut f = Vec::new();
    let mut exp = BTreeMap::new();
    for t in &traces.traces {
        arithmetic_findings(t, traces, dp, &guarded, &mut f, &mut exp);
    }
    attach_exp(group(program, f), &exp)
}

fn attach_exp(mut d: Detection, exp: &BTreeMap<(usize, usize), BTreeSet<usize>>) -> Detection {
    for r in &mut d.reports {
        if r.kind != VulnerabilityKind::Arithmetic {
            continue;
        }
        let related: BTreeSet<usize> = exp
            .iter()
            .filter(|((pc, _), _)| *pc == r.critical_pc)
            .flat_map(|(_, pcs)| pcs.iter().copied())
            .collect();
        r.related = related.into_iter().collect();
    }
    d
}

/// Runs all four detectors over every trace.
pub fn detect_all(program: &Program, traces: &TraceSet, dp: &DependencyRelation) -> Detection {
    let mut findings = Vec::new();
    let mut intra = Vec::new();
    let mut exp = BTreeMap::new();
    let guarded = all_guards(program, traces, dp);
    for t in &traces.traces {
        intra_findings(program, t, dp, &mut intra);
        origin_findings(t, traces, dp, &mut findings);
        arithmetic_findings(t, traces, dp, &guarded, &mut findings, &mut exp);
    }
    cross_findings(program, traces, dp, &intra, &mut findings);
    findings.extend(intra);
    attach_exp(group(program, findings), &exp)
}

/// Collapses findings by (kind, critical pc, culprit pc) and then groups the
/// culprits of each (kind, critical pc, function).
fn group(program: &Program, mut findings: Vec<Finding>) -> Detection {
    findings.sort();
    let mut seen: BTreeMap<(VulnerabilityKind, usize, usize), (Occurrence, bool)> = BTreeMap::new();
    for f in &findings {
        let key = (f.kind, f.critical_pc, f.culprit);
        let e = seen.entry(key).or_insert((f.critical, f.mitigated));
        // An unguarded occurrence anywhere keeps the finding live.
        e.1 &= f.mitigated;
    }
    let mut grouped: BTreeMap<(bool, VulnerabilityKind, usize, String), VulnerabilityReport> = BTreeMap::new();
    for ((kind, critical_pc, culprit), (occ, mitigated)) in seen {
        let function = match kind {
            VulnerabilityKind::CrossReentrancy => program.function_of(culprit),
            _ => program.function_of(critical_pc),
        }
        .to_string();
        let r = grouped
            .entry((mitigated, kind, critical_pc, function.clone()))
            .or_insert_with(|| VulnerabilityReport {
                kind,
                function,
                critical_pc,
                culprits: Vec::new(),
                related: Vec::new(),
                source: None,
                trace_id: occ.trace,
            });
        r.culprits.push(culprit);
        r.trace_id = r.trace_id.min(occ.trace);
    }
    let mut d = Detection::default();
    for ((mitigated, ..), r) in grouped {
        if mitigated {
            d.mitigated.push(r);
        } else {
            d.reports.push(r);
        }
    }
    d
}
