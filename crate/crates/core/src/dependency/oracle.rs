//! Perturbation oracle for data dependencies: change the value written by
//! one store and watch whether a reader's operands or results change while
//! the control path and the locations accessed up to it stay the same.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::evm::concrete::{run_concrete_with, ConcreteRun, ExecutionEnv, Perturbation, RunOptions};
use crate::evm::opcode::Mnemonic;
use crate::evm::program::Program;
use crate::word::Word;

/// A sequence of transactions run on shared, persistent storage. The
/// storage of the first environment is the initial state; later ones are
/// replaced by the previous final state.
pub type Scenario = Vec<ExecutionEnv>;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Maximum number of concrete executions.
    pub max_runs: usize,
    pub step_limit: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_runs: 20_000,
            step_limit: 20_000,
        }
    }
}

fn plus_one(w: Word) -> Word {
    w.wrapping_add(Word::from(1u8))
}
fn minus_one(w: Word) -> Word {
    w.wrapping_sub(Word::from(1u8))
}
fn invert(w: Word) -> Word {
    !w
}
fn zero(_: Word) -> Word {
    Word::ZERO
}
fn max(_: Word) -> Word {
    Word::MAX
}

const PERTURBATIONS: [fn(Word) -> Word; 5] = [plus_one, minus_one, invert, zero, max];

struct Runner<'a> {
    program: &'a Program,
    opts: OracleOptions,
    runs: usize,
}

impl Runner<'_> {
    fn run(&mut self, env: &ExecutionEnv, perturb: Option<Perturbation>) -> Result<ConcreteRun> {
        self.runs += 1;
        if self.runs > self.opts.max_runs {
            return Err(Error::OracleBudgetExceeded);
        }
        let ro = RunOptions {
            step_limit: self.opts.step_limit,
            perturb,
            ..RunOptions::default()
        };
        run_concrete_with(self.program, env, &ro)
    }

    /// Runs `txs[from..]` starting from `storage`, perturbing step `perturb`
    /// of the first one.
    fn run_suffix(
        &mut self,
        txs: &[ExecutionEnv],
        mut storage: crate::evm::concrete::Storage,
        perturb: Option<Perturbation>,
    ) -> Result<Vec<ConcreteRun>> {
        let mut out = Vec::with_capacity(txs.len());
        for (k, tx) in txs.iter().enumerate() {
            let mut env = tx.clone();
            env.storage = storage;
            let run = self.run(&env, if k == 0 { perturb } else { None })?;
            storage = run.final_storage().clone();
            out.push(run);
        }
        Ok(out)
    }
}

fn same_prefix(a: &ConcreteRun, b: &ConcreteRun, upto: usize) -> bool {
    a.records.len() > upto
        && b.records.len() > upto
        && a.records[..=upto]
            .iter()
            .zip(&b.records[..=upto])
            .all(|(x, y)| x.pc == y.pc && x.depth == y.depth)
}

fn same_path(a: &ConcreteRun, b: &ConcreteRun) -> bool {
    a.records.len() == b.records.len() && same_prefix(a, b, a.records.len().saturating_sub(1))
}

/// Address operands of a memory or storage access.
fn location<'a>(program: &Program, rec: &'a crate::evm::concrete::StepRecord) -> &'a [Word] {
    let n = match program.opcodes[rec.pc].mnemonic {
        Mnemonic::MLoad | Mnemonic::MStore | Mnemonic::MStore8 | Mnemonic::SLoad | Mnemonic::SStore => 1,
        Mnemonic::Sha3 => 2,
        _ => 0,
    };
    &rec.io.inputs[..n.min(rec.io.inputs.len())]
}

/// Same locations accessed by the first `upto` steps. A perturbation that
/// moves a store onto another slot creates aliasing the unperturbed run
/// never had; such runs say nothing about flows along the original path.
fn same_locations(program: &Program, a: &ConcreteRun, b: &ConcreteRun, upto: usize) -> bool {
    a.records[..upto]
        .iter()
        .zip(&b.records[..upto])
        .all(|(x, y)| location(program, x) == location(program, y))
}

/// Pcs of the stores whose perturbation observably changes some execution
/// of `reader_pc` along an unchanged path.
pub fn oracle_data_deps(
    program: &Program,
    scenarios: &[Scenario],
    reader_pc: usize,
    opts: OracleOptions,
) -> Result<BTreeSet<usize>> {
    let mut all = oracle_data_deps_many(program, scenarios, &BTreeSet::from([reader_pc]), opts)?;
    Ok(all.remove(&reader_pc).unwrap_or_default())
}

/// `oracle_data_deps` for several readers, sharing the perturbed runs.
pub fn oracle_data_deps_many(
    program: &Program,
    scenarios: &[Scenario],
    reader_pcs: &BTreeSet<usize>,
    opts: OracleOptions,
) -> Result<BTreeMap<usize, BTreeSet<usize>>> {
    let mut runner = Runner { program, opts, runs: 0 };
    let mut found: BTreeMap<usize, BTreeSet<usize>> = reader_pcs.iter().map(|pc| (*pc, BTreeSet::new())).collect();
    for sc in scenarios {
        if sc.is_empty() {
            continue;
        }
        let base = runner.run_suffix(sc, sc[0].storage.clone(), None)?;
        // Storage before each transaction.
        let mut pre = vec![sc[0].storage.clone()];
        for r in &base {
            pre.push(r.final_storage().clone());
        }
        // (transaction, step, pc) of every reader execution.
        let readers: Vec<(usize, usize, usize)> = base
            .iter()
            .enumerate()
            .flat_map(|(t, r)| {
                r.records
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| reader_pcs.contains(&s.pc))
                    .map(move |(i, s)| (t, i, s.pc))
            })
            .collect();
        if readers.is_empty() {
            continue;
        }
        for (wt, run) in base.iter().enumerate() {
            for (wi, rec) in run.records.iter().enumerate() {
                let m = program.opcodes[rec.pc].mnemonic;
                if !matches!(m, Mnemonic::MStore | Mnemonic::MStore8 | Mnemonic::SStore) {
                    continue;
                }
                let open = |found: &BTreeMap<usize, BTreeSet<usize>>| -> Vec<(usize, usize, usize)> {
                    readers
                        .iter()
                        .copied()
                        .filter(|(t, i, pc)| (*t, *i) > (wt, wi) && !found[pc].contains(&rec.pc))
                        .collect()
                };
                for f in PERTURBATIONS {
                    let pending = open(&found);
                    if pending.is_empty() {
                        break;
                    }
                    let p = Perturbation { step: wi, apply: f };
                    let alt = match runner.run_suffix(&sc[wt..], pre[wt].clone(), Some(p)) {
                        Ok(a) => a,
                        Err(Error::OracleBudgetExceeded) => return Err(Error::OracleBudgetExceeded),
                        Err(_) => continue,
                    };
                    // Earlier transactions must replay identically for a
                    // later reader to count.
                    let same_tx: Vec<bool> = (0..alt.len())
                        .map(|j| {
                            same_path(&base[wt + j], &alt[j])
                                && same_locations(program, &base[wt + j], &alt[j], alt[j].records.len())
                        })
                        .collect();
                    for (t, i, pc) in pending {
                        let k = t - wt;
                        if k >= alt.len() || !same_tx[..k].iter().all(|x| *x) {
                            continue;
                        }
                        if same_prefix(&base[t], &alt[k], i)
                            && same_locations(program, &base[t], &alt[k], i)
                            && base[t].records[i].io != alt[k].records[i].io
                        {
                            found.get_mut(&pc).unwrap().insert(rec.pc);
                        }
                    }
                }
            }
        }
    }
    Ok(found)
}
