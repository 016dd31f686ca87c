use std::collections::{BTreeMap, BTreeSet};

use super::graph::Cfg;
use super::postdom::PostDomTree;
use crate::symbolic::enumerate::Trace;

/// For every pc, the branch pcs it is control dependent on: `b` has two
/// successors `m`, `n` with the pc post-dominating `m` but not `n`. A pc is
/// never listed as depending on itself.
pub fn static_control_deps(cfg: &Cfg, pdt: &PostDomTree) -> BTreeMap<usize, BTreeSet<usize>> {
    let succ = cfg.succ_map();
    let mut out: BTreeMap<usize, BTreeSet<usize>> = cfg.nodes.iter().map(|n| (*n, BTreeSet::new())).collect();
    for (b, ss) in &succ {
        if ss.len() < 2 {
            continue;
        }
        for x in &cfg.nodes {
            if x == b {
                continue;
            }
            let some_in = ss.iter().any(|m| pdt.post_dominates(*x, *m));
            let some_out = ss.iter().any(|n| !pdt.post_dominates(*x, *n));
            if some_in && some_out {
                out.entry(*x).or_default().insert(*b);
            }
        }
    }
    out
}

/// Control dependencies of one trace, by position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlDeps {
    /// `deps[i]` lists positions of branch instructions position `i` depends on.
    pub deps: Vec<BTreeSet<usize>>,
}

/// Projects the pc-level dependencies onto a trace: each dependency links to
/// the most recent earlier occurrence of the branch.
pub fn control_deps(trace: &Trace, cfg: &Cfg, pdt: &PostDomTree) -> ControlDeps {
    let by_pc = static_control_deps(cfg, pdt);
    project(trace, &by_pc)
}

pub fn project(trace: &Trace, by_pc: &BTreeMap<usize, BTreeSet<usize>>) -> ControlDeps {
    let mut last_seen: BTreeMap<usize, usize> = BTreeMap::new();
    let mut deps = Vec::with_capacity(trace.steps.len());
    for (i, step) in trace.steps.iter().enumerate() {
        let mut d = BTreeSet::new();
        if let Some(branches) = by_pc.get(&step.pc) {
            for b in branches {
                if let Some(j) = last_seen.get(b) {
                    d.insert(*j);
                }
            }
        }
        deps.push(d);
        last_seen.insert(step.pc, i);
    }
    ControlDeps { deps }
}
