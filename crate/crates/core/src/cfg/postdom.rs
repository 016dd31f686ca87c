use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;

use super::graph::{Cfg, SINK};
use crate::error::{Error, Result};
use crate::symbolic::enumerate::TraceSet;

/// CFG made of the consecutive pc pairs of every trace. The last pc of each
/// trace is an exit.
pub fn build_cfg(traces: &TraceSet) -> Result<Cfg> {
    if traces.traces.is_empty() {
        return Err(Error::EmptyTraceSet);
    }
    let mut cfg = Cfg::default();
    for t in &traces.traces {
        let pcs = t.pcs();
        cfg.nodes.extend(pcs.iter().copied());
        for w in pcs.windows(2) {
            cfg.edges.insert((w[0], w[1]));
        }
        if let Some(last) = pcs.last() {
            cfg.exits.insert(*last);
        }
    }
    cfg.entry = traces.traces[0].steps.first().map(|s| s.pc).unwrap_or(0);
    Ok(cfg)
}

/// Post-dominator sets; the synthetic sink is not listed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostDomTree {
    pub pd: BTreeMap<usize, BTreeSet<usize>>,
    /// Rounds until the dataflow equations were stable.
    pub iterations: usize,
}

impl PostDomTree {
    /// Does `a` post-dominate `b`?
    pub fn post_dominates(&self, a: usize, b: usize) -> bool {
        self.pd.get(&b).is_some_and(|s| s.contains(&a))
    }
}

/// Iterative solution of `pd(n) = {n} ∪ ⋂ pd(s)` over successors, with every
/// exit wired to one sink.
pub fn post_dominators(cfg: &Cfg) -> PostDomTree {
    let succ = cfg.with_sink();
    let ids: Vec<usize> = succ.keys().copied().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let k = ids.len();
    let sink = index[&SINK];
    let succ_idx: Vec<Vec<usize>> = ids.iter().map(|n| succ[n].iter().map(|s| index[s]).collect()).collect();

    let mut full = FixedBitSet::with_capacity(k);
    full.insert_range(..);
    let mut pd: Vec<FixedBitSet> = vec![full; k];
    pd[sink] = FixedBitSet::with_capacity(k);
    pd[sink].insert(sink);

    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        // Reverse order visits successors first in most CFGs.
        for i in (0..k).rev() {
            if i == sink {
                continue;
            }
            let mut acc: Option<FixedBitSet> = None;
            for s in &succ_idx[i] {
                acc = Some(match acc {
                    None => pd[*s].clone(),
                    Some(mut a) => {
                        a.intersect_with(&pd[*s]);
                        a
                    }
                });
            }
            let mut new = acc.unwrap_or_else(|| FixedBitSet::with_capacity(k));
            new.insert(i);
            if new != pd[i] {
                pd[i] = new;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let pd = ids
        .iter()
        .enumerate()
        .filter(|(_, n)| **n != SINK)
        .map(|(i, n)| {
            let set = pd[i].ones().filter(|j| *j != sink).map(|j| ids[j]).collect();
            (*n, set)
        })
        .collect();
    PostDomTree { pd, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(edges: &[(usize, usize)], exits: &[usize]) -> Cfg {
        let mut c = Cfg::default();
        for (a, b) in edges {
            c.nodes.insert(*a);
            c.nodes.insert(*b);
            c.edges.insert((*a, *b));
        }
        c.exits = exits.iter().copied().collect();
        c
    }

    #[test]
    fn chain() {
        let p = post_dominators(&cfg(&[(0, 1), (1, 2)], &[2]));
        assert_eq!(p.pd[&0], [0, 1, 2].into_iter().collect());
    }

    #[test]
    fn diamond() {
        let p = post_dominators(&cfg(&[(0, 1), (0, 2), (1, 3), (2, 3)], &[3]));
        assert_eq!(p.pd[&0], [0, 3].into_iter().collect());
        assert!(!p.post_dominates(1, 0));
    }

    #[test]
    fn two_exits() {
        let p = post_dominators(&cfg(&[(0, 1), (0, 2)], &[1, 2]));
        assert_eq!(p.pd[&0], [0].into_iter().collect());
        assert_eq!(p.pd[&1], [1].into_iter().collect());
    }

    #[test]
    fn loop_head() {
        // 0 -> 1 -> 2 -> 1, 1 -> 3
        let p = post_dominators(&cfg(&[(0, 1), (1, 2), (2, 1), (1, 3)], &[3]));
        assert_eq!(p.pd[&2], [1, 2, 3].into_iter().collect());
    }
}
