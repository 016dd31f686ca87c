//! Per-location loop bounds.
//!
//! A node outside every strongly connected component gets bound 1. Inside a
//! component, a back edge into a loop head contributes nothing, an edge to a
//! node of the same component contributes that node's bound, and an edge
//! leaving the component contributes nothing. A node with a single successor
//! adds 1 when it is a counted assignment; a branching node sums its
//! successors.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::Serialize;

use super::discover::StaticCfg;
use crate::cfg::graph::Cfg;
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;

/// Default ceiling on per-head iteration budgets.
pub const DEFAULT_LOOP_CAP: u64 = 50;

/// Source node kinds a `SWAP` must map to before it counts as an assignment.
pub const ASSIGNMENT_NODES: &[&str] = &[
    "Assignment",
    "VariableDeclaration",
    "VariableDeclarationStatement",
    "UnaryOperation",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopBounds {
    pub bound: BTreeMap<usize, u64>,
    pub loop_heads: BTreeSet<usize>,
    pub back_edges: BTreeSet<(usize, usize)>,
    pub cap: u64,
}

impl LoopBounds {
    pub fn bound_of(&self, pc: usize) -> u64 {
        self.bound.get(&pc).copied().unwrap_or(1)
    }

    /// Iterations allowed through `head`: `min(bound, cap)`, at least 1 so
    /// that every loop body is entered once.
    pub fn budget(&self, head: usize) -> u64 {
        self.bound_of(head).min(self.cap).max(1)
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap.max(1);
        self
    }
}

/// Whether the instruction at `pc` counts as an assignment for bounds.
pub fn counts_as_assignment(program: &Program, scfg: &StaticCfg, pc: usize) -> bool {
    let Some(op) = program.get(pc) else {
        return false;
    };
    let constant = scfg.constant_operand.get(&pc).copied().unwrap_or(false);
    match op.mnemonic {
        Mnemonic::Swap(_) => {
            let mapped = program
                .node_kinds
                .get(&pc)
                .is_some_and(|k| ASSIGNMENT_NODES.contains(&k.as_str()));
            mapped && !constant
        }
        Mnemonic::MStore | Mnemonic::MStore8 => !constant,
        _ => false,
    }
}

/// Back edges of a depth-first search from the entry.
pub fn back_edges(cfg: &Cfg) -> BTreeSet<(usize, usize)> {
    let succ = cfg.succ_map();
    let mut out = BTreeSet::new();
    if !cfg.nodes.contains(&cfg.entry) {
        return out;
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color: BTreeMap<usize, u8> = BTreeMap::new();
    let mut stack: Vec<(usize, usize)> = vec![(cfg.entry, 0)];
    color.insert(cfg.entry, 1);
    while let Some((n, i)) = stack.pop() {
        let ss = succ.get(&n).map(|v| v.as_slice()).unwrap_or(&[]);
        if i < ss.len() {
            stack.push((n, i + 1));
            let s = ss[i];
            match color.get(&s).copied().unwrap_or(0) {
                0 => {
                    color.insert(s, 1);
                    stack.push((s, 0));
                }
                1 => {
                    out.insert((n, s));
                }
                _ => {}
            }
        } else {
            color.insert(n, 2);
        }
    }
    out
}

pub fn compute_loop_bounds(program: &Program, scfg: &StaticCfg) -> LoopBounds {
    let cfg = &scfg.cfg;
    let back = back_edges(cfg);
    let heads: BTreeSet<usize> = back.iter().map(|(_, h)| *h).collect();

    let mut g: DiGraphMap<usize, ()> = DiGraphMap::new();
    for n in &cfg.nodes {
        g.add_node(*n);
    }
    for (a, b) in &cfg.edges {
        g.add_edge(*a, *b, ());
    }
    let mut comp: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, scc) in tarjan_scc(&g).into_iter().enumerate() {
        let cyclic = scc.len() > 1 || cfg.edges.contains(&(scc[0], scc[0]));
        if cyclic {
            for n in scc {
                comp.insert(n, i);
            }
        }
    }

    let mut bound: BTreeMap<usize, u64> = cfg.nodes.iter().map(|n| (*n, 1)).collect();
    for n in comp.keys() {
        bound.insert(*n, 0);
    }
    let succ = cfg.succ_map();
    let assign: BTreeMap<usize, u64> = comp
        .keys()
        .map(|n| (*n, counts_as_assignment(program, scfg, *n) as u64))
        .collect();

    // Without back edges each component is acyclic, so this settles in at
    // most |N| rounds.
    let limit = cfg.nodes.len() + 1;
    for _ in 0..limit {
        let mut changed = false;
        for (&n, &c) in &comp {
            let ss = succ.get(&n).map(|v| v.as_slice()).unwrap_or(&[]);
            let contrib = |s: usize| -> u64 {
                if back.contains(&(n, s)) || comp.get(&s) != Some(&c) {
                    0
                } else {
                    bound[&s]
                }
            };
            let v = if ss.len() >= 2 {
                ss.iter().fold(0u64, |acc, s| acc.saturating_add(contrib(*s)))
            } else {
                ss.first().map(|s| contrib(*s)).unwrap_or(0).saturating_add(assign[&n])
            };
            if bound[&n] != v {
                bound.insert(n, v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    LoopBounds {
        bound,
        loop_heads: heads,
        back_edges: back,
        cap: DEFAULT_LOOP_CAP,
    }
}
