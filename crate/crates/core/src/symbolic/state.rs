use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::value::{eval_symbolic, SymbolicValue};
use crate::error::{Error, Result};
use crate::evm::concrete::{word_address, word_range, STACK_LIMIT};
use crate::evm::opcode::{Mnemonic, Opcode, RuleGroup};
use crate::word::{format_word, to_usize, Word};

/// Address of the free-memory pointer.
pub const FREE_POINTER_SLOT: u64 = 0x40;
/// Initial free-memory pointer value.
pub const FREE_POINTER_START: u64 = 0x80;
/// Bytes reserved for a memory object whose size is only known at run time.
pub const DYNAMIC_ALLOCATION: u64 = 10 * 0x20;
/// Longest hashed region whose words are resolved individually.
const MAX_HASHED_WORDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemWrite {
    pub addr: SymbolicValue,
    pub size: SymbolicValue,
    pub value: SymbolicValue,
    pub pc: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreWrite {
    pub key: SymbolicValue,
    pub value: SymbolicValue,
    pub pc: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicState {
    pub pc: usize,
    /// Bottom first; the top is the last element.
    pub stack: Vec<SymbolicValue>,
    /// Memory writes in program order.
    pub memory: Arc<Vec<MemWrite>>,
    /// Storage writes in program order.
    pub storage: Arc<Vec<StoreWrite>>,
    pub free_pointer: Word,
    /// Executions of each call site so far.
    pub call_counts: BTreeMap<usize, usize>,
    /// Index of the next step in the trace.
    pub step: usize,
}

impl Default for SymbolicState {
    fn default() -> Self {
        SymbolicState {
            pc: 0,
            stack: Vec::new(),
            memory: Arc::new(Vec::new()),
            storage: Arc::new(Vec::new()),
            free_pointer: Word::from(FREE_POINTER_START),
            call_counts: BTreeMap::new(),
            step: 0,
        }
    }
}

impl SymbolicState {
    pub fn with_stack(top_first: Vec<SymbolicValue>) -> Self {
        SymbolicState {
            stack: top_first.into_iter().rev().collect(),
            ..Default::default()
        }
    }

    pub fn stack_top_first(&self) -> Vec<SymbolicValue> {
        self.stack.iter().rev().cloned().collect()
    }

    /// Value of the memory word at `addr` as far as the write log tells.
    pub fn resolve_word(&self, addr: Word) -> SymbolicValue {
        let lo = word_address(addr);
        let hi = lo.saturating_add(Word::from(32u8));
        for w in self.memory.iter().rev() {
            let (Some(a), Some(n)) = (w.addr.as_concrete(), w.size.as_concrete()) else {
                return SymbolicValue::node(Mnemonic::MLoad, vec![SymbolicValue::Concrete(lo)]);
            };
            if n.is_zero() {
                continue;
            }
            let end = a.saturating_add(n);
            if end <= lo || a >= hi {
                continue;
            }
            if a == lo && n == Word::from(32u8) {
                return w.value.clone();
            }
            return SymbolicValue::node(Mnemonic::MLoad, vec![SymbolicValue::Concrete(lo)]);
        }
        SymbolicValue::Concrete(Word::ZERO)
    }

    /// `SHA3(MLOAD(p, n, words...))`, with the hashed words when they can be
    /// resolved from the write log.
    pub fn sha3_value(&self, p: &SymbolicValue, n: &SymbolicValue) -> SymbolicValue {
        let mut summary = vec![p.clone(), n.clone()];
        if let (Some(pw), Some(nw)) = (p.as_concrete(), n.as_concrete()) {
            if to_usize(&nw) <= 32 * MAX_HASHED_WORDS {
                summary.extend(word_range(pw, nw).into_iter().map(|a| self.resolve_word(a)));
            }
        }
        SymbolicValue::node(Mnemonic::Sha3, vec![SymbolicValue::node(Mnemonic::MLoad, summary)])
    }

    fn pop(&mut self) -> SymbolicValue {
        self.stack.pop().expect("depth checked")
    }

    fn push_write(&mut self, addr: SymbolicValue, size: SymbolicValue, value: SymbolicValue, pc: usize) {
        let step = self.step;
        Arc::make_mut(&mut self.memory).push(MemWrite {
            addr,
            size,
            value,
            pc,
            step,
        });
    }
}

/// One executed instruction of a symbolic trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub pc: usize,
    #[serde(serialize_with = "ser_opcode")]
    pub op: Opcode,
    /// Popped operands, top of stack first.
    pub args: Vec<SymbolicValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SymbolicValue>,
}

fn ser_opcode<S: serde::Serializer>(op: &Opcode, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&op.to_string())
}

impl TraceStep {
    pub fn mnemonic(&self) -> Mnemonic {
        self.op.mnemonic
    }

    /// Memory region read by this instruction: `(address, size)`.
    pub fn memory_read(&self) -> Option<(SymbolicValue, SymbolicValue)> {
        use Mnemonic::*;
        let a = &self.args;
        match self.mnemonic() {
            MLoad => Some((a[0].clone(), SymbolicValue::concrete(Word::from(32u8)))),
            Sha3 | Return | Revert => Some((a[0].clone(), a[1].clone())),
            Log(_) => Some((a[0].clone(), a[1].clone())),
            Call | CallCode => Some((a[3].clone(), a[4].clone())),
            DelegateCall | StaticCall => Some((a[2].clone(), a[3].clone())),
            Create | Create2 => Some((a[1].clone(), a[2].clone())),
            _ => None,
        }
    }

    /// Memory region written by this instruction: `(address, size)`.
    pub fn memory_write(&self) -> Option<(SymbolicValue, SymbolicValue)> {
        use Mnemonic::*;
        let a = &self.args;
        match self.mnemonic() {
            MStore => Some((a[0].clone(), SymbolicValue::concrete(Word::from(32u8)))),
            MStore8 => Some((a[0].clone(), SymbolicValue::concrete(Word::from(1u8)))),
            Call | CallCode => Some((a[5].clone(), a[6].clone())),
            DelegateCall | StaticCall => Some((a[4].clone(), a[5].clone())),
            _ => None,
        }
    }

    pub fn storage_read(&self) -> Option<&SymbolicValue> {
        (self.mnemonic() == Mnemonic::SLoad).then(|| &self.args[0])
    }

    pub fn storage_write(&self) -> Option<&SymbolicValue> {
        (self.mnemonic() == Mnemonic::SStore).then(|| &self.args[0])
    }
}

/// Outcome of one symbolic step.
#[derive(Debug, Clone)]
pub struct SymStep {
    /// Successor states: none for a halt, two for a JUMPI on a symbolic condition.
    pub next: Vec<SymbolicState>,
    pub record: TraceStep,
    pub halted: bool,
}

fn jump_target(pc: usize, target: &SymbolicValue, code_len: usize) -> Result<usize> {
    let t = target.as_concrete().ok_or(Error::SymbolicJumpTarget { pc })?;
    if t >= Word::from(code_len) {
        return Err(Error::InvalidJumpTarget {
            pc,
            target: format_word(&t),
        });
    }
    Ok(to_usize(&t))
}

/// Executes one instruction over symbolic values.
pub fn step_symbolic(state: &SymbolicState, op: &Opcode, code_len: usize) -> Result<SymStep> {
    let pc = state.pc;
    let m = op.mnemonic;
    let effect = m.stack_effect();
    if state.stack.len() < effect.required {
        return Err(Error::StackUnderflow { pc });
    }
    let mut s = state.clone();
    let args: Vec<SymbolicValue> = (0..effect.pops).map(|_| s.pop()).collect();
    let mut result = None;
    let mut next_pcs = vec![pc + 1];
    let mut halted = false;

    match m.rule_group() {
        RuleGroup::Halt => halted = true,
        RuleGroup::Pop | RuleGroup::JumpDest | RuleGroup::Log => {}
        RuleGroup::Unary | RuleGroup::Binary => result = Some(eval_symbolic(m, &args)?),
        RuleGroup::Ternary => {
            result = Some(match m {
                Mnemonic::AddMod | Mnemonic::MulMod => eval_symbolic(m, &args)?,
                _ => SymbolicValue::Concrete(Word::ZERO),
            })
        }
        RuleGroup::MLoad => {
            let v = if args[0].as_concrete() == Some(Word::from(FREE_POINTER_SLOT)) {
                SymbolicValue::Concrete(s.free_pointer)
            } else {
                eval_symbolic(m, &args)?
            };
            result = Some(v);
        }
        RuleGroup::Sha3 => result = Some(s.sha3_value(&args[0], &args[1])),
        RuleGroup::MStore => {
            if m == Mnemonic::MStore && args[0].as_concrete() == Some(Word::from(FREE_POINTER_SLOT)) {
                s.free_pointer = match args[1].as_concrete() {
                    Some(v) => v,
                    None => s.free_pointer.wrapping_add(Word::from(DYNAMIC_ALLOCATION)),
                };
            }
            let size = if m == Mnemonic::MStore8 { 1u8 } else { 32u8 };
            s.push_write(
                args[0].clone(),
                SymbolicValue::concrete(Word::from(size)),
                args[1].clone(),
                pc,
            );
        }
        RuleGroup::SLoad => result = Some(eval_symbolic(m, &args)?),
        RuleGroup::SStore => {
            let step = s.step;
            Arc::make_mut(&mut s.storage).push(StoreWrite {
                key: args[0].clone(),
                value: args[1].clone(),
                pc,
                step,
            });
        }
        RuleGroup::Dup => {
            let Mnemonic::Dup(i) = m else { unreachable!() };
            let v = s.stack[s.stack.len() - i as usize].clone();
            s.stack.push(v);
        }
        RuleGroup::Swap => {
            let Mnemonic::Swap(i) = m else { unreachable!() };
            let n = s.stack.len();
            s.stack.swap(n - 1, n - 1 - i as usize);
        }
        RuleGroup::JumpI => match args[1].as_concrete() {
            Some(c) if c.is_zero() => {}
            Some(_) => next_pcs = vec![jump_target(pc, &args[0], code_len)?],
            None => next_pcs = vec![pc + 1, jump_target(pc, &args[0], code_len)?],
        },
        RuleGroup::Jump => next_pcs = vec![jump_target(pc, &args[0], code_len)?],
        RuleGroup::Call => {
            let occurrence = s.call_counts.entry(pc).or_insert(0);
            let res = SymbolicValue::node(
                m,
                vec![
                    SymbolicValue::concrete(Word::from(pc)),
                    SymbolicValue::concrete(Word::from(*occurrence)),
                ],
            );
            *occurrence += 1;
            let record = TraceStep {
                pc,
                op: *op,
                args: args.clone(),
                result: None,
            };
            if let Some((addr, size)) = record.memory_write() {
                s.push_write(addr, size, res.clone(), pc);
            }
            result = Some(res);
        }
        RuleGroup::Push => result = Some(SymbolicValue::Concrete(op.immediate.unwrap_or(Word::ZERO))),
        RuleGroup::Environment => {
            result = Some(match m {
                Mnemonic::Pc => SymbolicValue::concrete(Word::from(pc)),
                Mnemonic::CodeSize => SymbolicValue::concrete(Word::from(code_len)),
                _ => SymbolicValue::node(m, Vec::new()),
            })
        }
    }

    if let Some(v) = &result {
        s.stack.push(v.clone());
    }
    if s.stack.len() > STACK_LIMIT {
        return Err(Error::StackOverflow { pc });
    }
    s.step += 1;
    let record = TraceStep {
        pc,
        op: *op,
        args,
        result,
    };
    if halted {
        return Ok(SymStep {
            next: Vec::new(),
            record,
            halted: true,
        });
    }
    let next = next_pcs
        .into_iter()
        .map(|p| {
            let mut n = s.clone();
            n.pc = p;
            n
        })
        .collect();
    Ok(SymStep {
        next,
        record,
        halted: false,
    })
}
