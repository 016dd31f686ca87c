//! Occurrence-level dependency graph: stack taint, memory and storage
//! read-after-write, and control dependency.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;
use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::Serialize;

use super::address::{address_range, ranges_intersect_sized, AddressRange, AddressStats, Base, Resolved};
use crate::cfg::control::ControlDeps;
use crate::evm::concrete::word_address;
use crate::evm::opcode::{Mnemonic, RuleGroup};
use crate::symbolic::enumerate::{Trace, TraceSet};
use crate::symbolic::value::SymbolicValue;
use crate::word::Word;

/// An instruction occurrence: position `pos` of trace `trace`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Occurrence {
    pub trace: usize,
    pub pos: usize,
}

impl Occurrence {
    pub fn new(trace: usize, pos: usize) -> Self {
        Occurrence { trace, pos }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Data,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepOptions {
    /// Treat an address that cannot be turned into a range as overlapping
    /// every other address.
    pub unresolvable_intersects: bool,
}

impl Default for DepOptions {
    fn default() -> Self {
        DepOptions {
            unresolvable_intersects: true,
        }
    }
}

/// One step of an explicit dependency path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub from: Occurrence,
    pub to: Occurrence,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PcEdge {
    pub from_pc: usize,
    pub to_pc: usize,
    pub kind: EdgeKind,
}

/// Edges point from an instruction to what it depends on. Storage writes
/// with the same pc and key share a hub node so cross-trace lookups stay
/// linear in the number of distinct writers.
#[derive(Debug, Clone)]
pub struct DependencyRelation {
    offsets: Vec<usize>,
    occurrences: usize,
    node_pc: Vec<usize>,
    assignment: FixedBitSet,
    adj: Vec<Vec<(u32, EdgeKind)>>,
    pub stats: AddressStats,
}

fn memory_interval(r: Resolved, size: &SymbolicValue) -> (Resolved, Option<Word>) {
    let size = size.as_concrete();
    match r {
        // Memory is word granular: widen constant accesses to whole words.
        Resolved::Range(AddressRange {
            base: Base::Constant,
            lo,
            hi,
        }) => {
            let lo_w = word_address(lo);
            let size = size.map(|n| {
                if n.is_zero() {
                    n
                } else {
                    let end = word_address(hi.saturating_add(n - Word::from(1u8))).saturating_add(Word::from(32u8));
                    end - word_address(hi)
                }
            });
            (
                Resolved::Range(AddressRange {
                    base: Base::Constant,
                    lo: lo_w,
                    hi: word_address(hi),
                }),
                size,
            )
        }
        other => (other, size),
    }
}

/// Where a stack value came from.
#[derive(Debug, Clone, Default)]
struct Prov {
    src: Option<usize>,
    swaps: Vec<usize>,
}

struct MemWriteInfo {
    pos: usize,
    range: Resolved,
    size: Option<Word>,
}

impl DependencyRelation {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    fn id(&self, o: Occurrence) -> usize {
        self.offsets[o.trace] + o.pos
    }

    fn occ(&self, id: usize) -> Option<Occurrence> {
        if id >= self.occurrences {
            return None;
        }
        let t = self.offsets.partition_point(|off| *off <= id) - 1;
        Some(Occurrence::new(t, id - self.offsets[t]))
    }

    pub fn pc_of(&self, o: Occurrence) -> usize {
        self.node_pc[self.id(o)]
    }

    pub fn trace_count(&self) -> usize {
        self.offsets.len()
    }

    fn expand(&self, id: usize, kinds: &[EdgeKind], out: &mut BTreeSet<Occurrence>) {
        for (t, k) in &self.adj[id] {
            if !kinds.contains(k) {
                continue;
            }
            match self.occ(*t as usize) {
                Some(o) => {
                    out.insert(o);
                }
                None => self.expand(*t as usize, kinds, out),
            }
        }
    }

    /// Direct dependencies of `o`.
    pub fn direct(&self, o: Occurrence, kind: EdgeKind) -> BTreeSet<Occurrence> {
        let mut out = BTreeSet::new();
        self.expand(self.id(o), &[kind], &mut out);
        out
    }

    fn reach(&self, start: usize, kinds: &[EdgeKind]) -> FixedBitSet {
        let mut seen = FixedBitSet::with_capacity(self.adj.len());
        let mut queue = VecDeque::new();
        for (t, k) in &self.adj[start] {
            if kinds.contains(k) && !seen.put(*t as usize) {
                queue.push_back(*t as usize);
            }
        }
        while let Some(n) = queue.pop_front() {
            for (t, k) in &self.adj[n] {
                if kinds.contains(k) && !seen.put(*t as usize) {
                    queue.push_back(*t as usize);
                }
            }
        }
        seen
    }

    fn to_occurrences(&self, bits: &FixedBitSet) -> BTreeSet<Occurrence> {
        bits.ones().filter_map(|i| self.occ(i)).collect()
    }

    /// Everything `o` transitively depends on through data and control edges.
    pub fn closure(&self, o: Occurrence) -> BTreeSet<Occurrence> {
        self.to_occurrences(&self.reach(self.id(o), &[EdgeKind::Data, EdgeKind::Control]))
    }

    /// Every occurrence `o` transitively depends on through data edges.
    pub fn data_closure(&self, o: Occurrence) -> BTreeSet<Occurrence> {
        self.to_occurrences(&self.reach(self.id(o), &[EdgeKind::Data]))
    }

    /// The assignment instructions (SWAP, MSTORE, MSTORE8, SSTORE) among
    /// the transitive data dependencies of `o`.
    pub fn data_deps(&self, o: Occurrence) -> BTreeSet<Occurrence> {
        let mut out = self.data_closure(o);
        out.retain(|x| self.assignment[self.id(*x)]);
        out
    }

    pub fn depends_on(&self, a: Occurrence, b: Occurrence) -> bool {
        self.reach(self.id(a), &[EdgeKind::Data, EdgeKind::Control])
            .contains(self.id(b))
    }

    /// A shortest explicit edge path from `from` to `to`, hubs elided.
    pub fn path(&self, from: Occurrence, to: Occurrence) -> Option<Vec<PathStep>> {
        let (s, goal) = (self.id(from), self.id(to));
        let mut parent: HashMap<usize, (usize, EdgeKind)> = HashMap::new();
        let mut queue = VecDeque::from([s]);
        let mut seen = FixedBitSet::with_capacity(self.adj.len());
        seen.insert(s);
        while let Some(n) = queue.pop_front() {
            if n == goal && n != s {
                break;
            }
            for (t, k) in &self.adj[n] {
                let t = *t as usize;
                if t == goal && !parent.contains_key(&t) {
                    parent.insert(t, (n, *k));
                }
                if !seen.put(t) {
                    parent.entry(t).or_insert((n, *k));
                    queue.push_back(t);
                }
            }
        }
        parent.get(&goal)?;
        let mut chain = Vec::new();
        let mut cur = goal;
        while cur != s || chain.is_empty() {
            let (p, k) = parent[&cur];
            chain.push((p, cur, k));
            cur = p;
            if cur == s {
                break;
            }
        }
        chain.reverse();
        // Collapse hub hops into one data edge.
        let mut out: Vec<PathStep> = Vec::new();
        let mut pending: Option<(usize, EdgeKind)> = None;
        for (a, b, k) in chain {
            let start = pending.take().map(|(x, _)| x).unwrap_or(a);
            match self.occ(b) {
                Some(to) => out.push(PathStep {
                    from: self.occ(start).expect("paths start at occurrences"),
                    to,
                    kind: k,
                }),
                None => pending = Some((start, k)),
            }
        }
        Some(out)
    }

    /// Pcs reached from any occurrence of `pc`.
    pub fn pc_closure(&self, pc: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for id in 0..self.occurrences {
            if self.node_pc[id] == pc {
                for r in self.reach(id, &[EdgeKind::Data, EdgeKind::Control]).ones() {
                    if r < self.occurrences {
                        out.insert(self.node_pc[r]);
                    }
                }
            }
        }
        out
    }

    /// Pcs of the assignment instructions among the transitive data
    /// dependencies of every occurrence of `pc`.
    pub fn pc_data_deps(&self, pc: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for id in 0..self.occurrences {
            if self.node_pc[id] == pc {
                for r in self.reach(id, &[EdgeKind::Data]).ones() {
                    if r < self.occurrences && self.assignment[r] {
                        out.insert(self.node_pc[r]);
                    }
                }
            }
        }
        out
    }

    /// Direct pc-level edges; a pair linked by both kinds is reported once
    /// per kind.
    pub fn pc_edges(&self) -> BTreeSet<(usize, usize, EdgeKind)> {
        let mut out = BTreeSet::new();
        for id in 0..self.occurrences {
            let mut targets = BTreeSet::new();
            for kind in [EdgeKind::Data, EdgeKind::Control] {
                targets.clear();
                self.expand(id, &[kind], &mut targets);
                for t in &targets {
                    out.insert((self.node_pc[id], self.pc_of(*t), kind));
                }
            }
        }
        out
    }

    /// Transitive closure at pc level, computed on the condensation of the
    /// pc graph. A closure edge is `data` when a data-only path exists.
    pub fn pc_closure_edges(&self) -> Vec<PcEdge> {
        let edges = self.pc_edges();
        let all = closure_of(edges.iter().map(|(a, b, _)| (*a, *b)));
        let data = closure_of(
            edges
                .iter()
                .filter(|(_, _, k)| *k == EdgeKind::Data)
                .map(|(a, b, _)| (*a, *b)),
        );
        all.into_iter()
            .map(|(a, b)| PcEdge {
                from_pc: a,
                to_pc: b,
                kind: if data.contains(&(a, b)) {
                    EdgeKind::Data
                } else {
                    EdgeKind::Control
                },
            })
            .collect()
    }
}

/// Transitive closure of a small edge set through SCC condensation.
pub fn closure_of(edges: impl IntoIterator<Item = (usize, usize)>) -> BTreeSet<(usize, usize)> {
    let mut g: DiGraphMap<usize, ()> = DiGraphMap::new();
    for (a, b) in edges {
        g.add_edge(a, b, ());
    }
    // tarjan_scc yields components in reverse topological order, so every
    // successor component is finished before its predecessors.
    let sccs = tarjan_scc(&g);
    let mut comp_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, c) in sccs.iter().enumerate() {
        for n in c {
            comp_of.insert(*n, i);
        }
    }
    let mut reach: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sccs.len()];
    for (i, c) in sccs.iter().enumerate() {
        let mut acc = BTreeSet::new();
        let cyclic = c.len() > 1 || g.contains_edge(c[0], c[0]);
        if cyclic {
            acc.extend(c.iter().copied());
        }
        for n in c {
            for s in g.neighbors(*n) {
                let j = comp_of[&s];
                if j != i {
                    acc.insert(s);
                    acc.extend(reach[j].iter().copied());
                }
            }
        }
        reach[i] = acc;
    }
    let mut out = BTreeSet::new();
    for n in g.nodes() {
        for r in &reach[comp_of[&n]] {
            out.insert((n, *r));
        }
    }
    out
}

/// Builds the dependency graph over every trace.
/// For every step of `trace`, the positions each popped operand (top first)
/// came from: its producer and the SWAPs that moved it. DUP and SWAP are
/// transparent and PUSH has no producer.
pub fn stack_operands(trace: &Trace) -> Vec<Vec<Vec<usize>>> {
    let mut stack: Vec<Prov> = Vec::new();
    let mut out = Vec::with_capacity(trace.steps.len());
    for (i, step) in trace.steps.iter().enumerate() {
        let m = step.op.mnemonic;
        let mut popped = Vec::new();
        match m.rule_group() {
            RuleGroup::Dup => {
                let Mnemonic::Dup(k) = m else { unreachable!() };
                let v = stack
                    .len()
                    .checked_sub(k as usize)
                    .map(|j| stack[j].clone())
                    .unwrap_or_default();
                stack.push(v);
            }
            RuleGroup::Swap => {
                let Mnemonic::Swap(k) = m else { unreachable!() };
                let n = stack.len();
                if n > k as usize {
                    stack.swap(n - 1, n - 1 - k as usize);
                    for j in [n - 1, n - 1 - k as usize] {
                        if !stack[j].swaps.contains(&i) {
                            stack[j].swaps.push(i);
                        }
                    }
                }
            }
            _ => {
                let effect = m.stack_effect();
                for _ in 0..effect.pops {
                    let p = stack.pop().unwrap_or_default();
                    popped.push(p.src.into_iter().chain(p.swaps).collect());
                }
                for _ in 0..effect.pushes {
                    stack.push(Prov {
                        src: (m != Mnemonic::Push).then_some(i),
                        swaps: Vec::new(),
                    });
                }
            }
        }
        out.push(popped);
    }
    out
}

pub fn full_dependency(traces: &TraceSet, cds: &[ControlDeps], opts: DepOptions) -> DependencyRelation {
    let mut offsets = Vec::with_capacity(traces.traces.len());
    let mut total = 0;
    for t in &traces.traces {
        offsets.push(total);
        total += t.steps.len();
    }
    let mut adj: Vec<Vec<(u32, EdgeKind)>> = vec![Vec::new(); total];
    let mut node_pc: Vec<usize> = Vec::with_capacity(total);
    let mut assignment = FixedBitSet::with_capacity(total);
    let mut stats = AddressStats::default();

    let mut hubs: HashMap<(usize, SymbolicValue), usize> = HashMap::new();
    let mut hub_keys: Vec<Resolved> = Vec::new();
    let mut hub_members: Vec<Vec<u32>> = Vec::new();
    let mut loads: Vec<(usize, Resolved)> = Vec::new();

    for (ti, trace) in traces.traces.iter().enumerate() {
        let base = offsets[ti];
        let operands = stack_operands(trace);
        let mut writes: Vec<MemWriteInfo> = Vec::new();
        for (i, step) in trace.steps.iter().enumerate() {
            let id = base + i;
            node_pc.push(step.pc);
            let m = step.op.mnemonic;
            if matches!(m.rule_group(), RuleGroup::Swap | RuleGroup::MStore | RuleGroup::SStore) {
                assignment.insert(id);
            }

            // Stack: depend on the producers of popped values and on the
            // SWAPs that moved them.
            for srcs in &operands[i] {
                for src in srcs {
                    adj[id].push(((base + src) as u32, EdgeKind::Data));
                }
            }

            // Memory reads.
            if let Some((addr, size)) = step.memory_read() {
                let r = address_range(&addr);
                if m == Mnemonic::MLoad {
                    stats.record(m, r.is_resolved());
                }
                let (range, len) = memory_interval(r, &size);
                let mut uncovered: Option<BTreeSet<Word>> = match (&range, len) {
                    (
                        Resolved::Range(AddressRange {
                            base: Base::Constant,
                            lo,
                            hi,
                        }),
                        Some(n),
                    ) if lo == hi && n <= Word::from(32 * 64u32) => {
                        let words = n.saturating_to::<usize>() / 32;
                        Some((0..words).map(|k| lo.saturating_add(Word::from(32 * k))).collect())
                    }
                    _ => None,
                };
                if len != Some(Word::ZERO) {
                    for w in writes.iter().rev() {
                        if !ranges_intersect_sized(
                            &range,
                            Some(len),
                            &w.range,
                            Some(w.size),
                            opts.unresolvable_intersects,
                        ) {
                            continue;
                        }
                        adj[id].push(((base + w.pos) as u32, EdgeKind::Data));
                        if let Some(un) = uncovered.as_mut() {
                            if let Resolved::Range(AddressRange {
                                base: Base::Constant,
                                lo,
                                hi,
                            }) = &w.range
                            {
                                if lo == hi
                                    && w.size == Some(Word::from(32u8))
                                    && trace.steps[w.pos].op.mnemonic == Mnemonic::MStore
                                {
                                    un.remove(lo);
                                }
                            }
                            if un.is_empty() {
                                break;
                            }
                        }
                    }
                }
            }

            // Memory writes.
            if let Some((addr, size)) = step.memory_write() {
                let r = address_range(&addr);
                if matches!(m, Mnemonic::MStore | Mnemonic::MStore8) {
                    stats.record(Mnemonic::MStore, r.is_resolved());
                }
                let (range, len) = memory_interval(r, &size);
                writes.push(MemWriteInfo {
                    pos: i,
                    range,
                    size: len,
                });
            }

            // Storage.
            if let Some(key) = step.storage_read() {
                let r = address_range(key);
                stats.record(Mnemonic::SLoad, r.is_resolved());
                loads.push((id, r));
            }
            if let Some(key) = step.storage_write() {
                let r = address_range(key);
                stats.record(Mnemonic::SStore, r.is_resolved());
                let h = *hubs.entry((step.pc, key.clone())).or_insert_with(|| {
                    hub_keys.push(r);
                    hub_members.push(Vec::new());
                    hub_keys.len() - 1
                });
                hub_members[h].push(id as u32);
            }

            // Control.
            if let Some(cd) = cds.get(ti) {
                if let Some(deps) = cd.deps.get(i) {
                    for d in deps {
                        adj[id].push(((base + d) as u32, EdgeKind::Control));
                    }
                }
            }
        }
    }

    let hub_base = adj.len();
    for members in &hub_members {
        adj.push(members.iter().map(|m| (*m, EdgeKind::Data)).collect());
        node_pc.push(usize::MAX);
    }
    for (id, r) in &loads {
        for (h, hr) in hub_keys.iter().enumerate() {
            if ranges_intersect_sized(r, None, hr, None, opts.unresolvable_intersects) {
                adj[*id].push(((hub_base + h) as u32, EdgeKind::Data));
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }

    DependencyRelation {
        offsets,
        occurrences: total,
        node_pc,
        assignment,
        adj,
        stats,
    }
}
