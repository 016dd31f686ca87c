use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::bounds::LoopBounds;
use super::state::{step_symbolic, SymbolicState, TraceStep};
use crate::error::{Error, Result};
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;

/// A maximal symbolic trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub id: usize,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn pcs(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.pc).collect()
    }

    pub fn last_op(&self) -> Option<Mnemonic> {
        self.steps.last().map(|s| s.op.mnemonic)
    }

    pub fn is_maximal(&self) -> bool {
        self.last_op().is_some_and(|m| m.is_halt())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TraceSet {
    pub traces: Vec<Trace>,
    /// The loop cap was below a computed bound for some visited head.
    pub truncated: bool,
    /// Enumeration stopped at the deadline or trace limit.
    pub timed_out: bool,
    /// Paths dropped because a loop budget was exhausted.
    pub pruned: usize,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    pub timeout: Option<Duration>,
    /// Stop after this many traces (treated like a timeout).
    pub max_traces: usize,
    /// Longest single trace; longer paths are dropped.
    pub max_trace_len: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            timeout: None,
            max_traces: 50_000,
            max_trace_len: 200_000,
        }
    }
}

struct Frame {
    state: SymbolicState,
    depth: usize,
    iterations: BTreeMap<usize, u64>,
}

/// Depth-first enumeration of maximal traces under the loop budgets.
/// Returns `Timeout` when the deadline passes.
pub fn enumerate_traces(program: &Program, bounds: &LoopBounds, timeout: Option<Duration>) -> Result<TraceSet> {
    let opts = EnumerateOptions {
        timeout,
        ..Default::default()
    };
    let set = enumerate_partial(program, bounds, &opts)?;
    if set.timed_out {
        return Err(Error::Timeout(timeout.map(|t| t.as_millis() as u64).unwrap_or(0)));
    }
    Ok(set)
}

/// Like [`enumerate_traces`] but returns what was found so far when the
/// deadline passes, with `timed_out` set.
pub fn enumerate_partial(program: &Program, bounds: &LoopBounds, opts: &EnumerateOptions) -> Result<TraceSet> {
    let start = Instant::now();
    let deadline = opts.timeout.map(|t| start + t);
    let mut set = TraceSet::default();
    let mut visited_heads: BTreeSet<usize> = BTreeSet::new();
    let mut path: Vec<TraceStep> = Vec::new();
    let mut work = vec![Frame {
        state: SymbolicState::default(),
        depth: 0,
        iterations: BTreeMap::new(),
    }];
    let mut ticks: u64 = 0;

    'outer: while let Some(mut frame) = work.pop() {
        path.truncate(frame.depth);
        loop {
            ticks += 1;
            if ticks.is_multiple_of(256) {
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        set.timed_out = true;
                        break 'outer;
                    }
                }
            }
            if path.len() >= opts.max_trace_len {
                set.pruned += 1;
                continue 'outer;
            }
            let pc = frame.state.pc;
            if bounds.loop_heads.contains(&pc) {
                visited_heads.insert(pc);
            }
            let op = program.get(pc).ok_or(Error::InvalidJumpTarget {
                pc,
                target: pc.to_string(),
            })?;
            let step = step_symbolic(&frame.state, op, program.len())?;
            path.push(step.record);
            if step.halted || step.next.is_empty() {
                if !step.halted {
                    // Ran off the end of the code.
                }
                set.traces.push(Trace {
                    id: set.traces.len(),
                    steps: path.clone(),
                });
                if set.traces.len() >= opts.max_traces {
                    set.timed_out = true;
                    break 'outer;
                }
                continue 'outer;
            }
            let mut successors: Vec<Frame> = Vec::with_capacity(2);
            for s in step.next {
                let mut iterations = frame.iterations.clone();
                if bounds.back_edges.contains(&(pc, s.pc)) {
                    let it = iterations.entry(s.pc).or_insert(0);
                    *it += 1;
                    if *it > bounds.budget(s.pc) {
                        set.pruned += 1;
                        continue;
                    }
                }
                successors.push(Frame {
                    state: s,
                    depth: path.len(),
                    iterations,
                });
            }
            match successors.len() {
                0 => continue 'outer,
                1 => frame = successors.pop().expect("one"),
                _ => {
                    // Explore the first successor next.
                    while successors.len() > 1 {
                        work.push(successors.pop().expect("nonempty"));
                    }
                    frame = successors.pop().expect("one");
                }
            }
        }
    }

    set.truncated = visited_heads.iter().any(|h| bounds.cap < bounds.bound_of(*h));
    Ok(set)
}
