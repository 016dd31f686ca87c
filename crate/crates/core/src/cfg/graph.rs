use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::evm::program::Program;

/// Node id of the synthetic sink joining every exit.
pub const SINK: usize = usize::MAX;

/// Control-flow graph over pcs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cfg {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    pub entry: usize,
    /// Nodes where execution halts.
    pub exits: BTreeSet<usize>,
}

impl Cfg {
    pub fn succs(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((n, 0)..=(n, usize::MAX)).map(|(_, t)| *t)
    }

    pub fn succ_map(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = self.nodes.iter().map(|n| (*n, Vec::new())).collect();
        for (a, b) in &self.edges {
            out.entry(*a).or_default().push(*b);
        }
        out
    }

    /// Successor lists with every exit wired to [`SINK`].
    pub fn with_sink(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out = self.succ_map();
        for e in &self.exits {
            out.entry(*e).or_default().push(SINK);
        }
        out.insert(SINK, Vec::new());
        out
    }

    /// Graphviz rendering; nodes are labelled with their instruction.
    pub fn to_dot(&self, program: &Program, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "'"));
        let _ = writeln!(out, "  node [shape=box, fontname=monospace];");
        for n in &self.nodes {
            let label = program.get(*n).map(|op| op.to_string()).unwrap_or_default();
            let shape = if self.exits.contains(n) { ", peripheries=2" } else { "" };
            let _ = writeln!(out, "  n{n} [label=\"{n}: {label}\"{shape}];");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}
