use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::gas::GasTable;
use super::opcode::{Mnemonic, Opcode, RuleGroup};
use super::program::Program;
use crate::error::{Error, Result};
use crate::word::{self, from_bool, hash_words, to_usize, Word};

pub const STACK_LIMIT: usize = 1024;
pub const MAX_CALL_DEPTH: usize = 8;

pub type Storage = BTreeMap<Word, Word>;
pub type Memory = BTreeMap<Word, Word>;

/// Aligns a byte address down to its 32-byte word.
pub fn word_address(addr: Word) -> Word {
    addr & !Word::from(31u8)
}

/// Word addresses covered by the byte range `[p, p + n)`.
pub fn word_range(p: Word, n: Word) -> Vec<Word> {
    let n = to_usize(&n).min(32 * 4096);
    if n == 0 {
        return Vec::new();
    }
    let first = word_address(p);
    let last = word_address(p.wrapping_add(Word::from(n - 1)));
    let mut out = Vec::new();
    let mut a = first;
    loop {
        out.push(a);
        if a == last {
            break;
        }
        a = a.wrapping_add(Word::from(32u8));
    }
    out
}

/// Result of the side-effect-free opcodes; `args` are in pop order (top first).
pub fn eval_pure(m: Mnemonic, args: &[Word]) -> Option<Word> {
    use Mnemonic::*;
    let a = |i: usize| args[i];
    let v = match m {
        Not => !a(0),
        IsZero => from_bool(a(0).is_zero()),
        Add => a(0).wrapping_add(a(1)),
        Mul => a(0).wrapping_mul(a(1)),
        Sub => a(0).wrapping_sub(a(1)),
        Div => a(0).checked_div(a(1)).unwrap_or(Word::ZERO),
        SDiv => word::sdiv(a(0), a(1)),
        Mod => a(0).checked_rem(a(1)).unwrap_or(Word::ZERO),
        SMod => word::smod(a(0), a(1)),
        Exp => a(0).wrapping_pow(a(1)),
        SignExtend => word::signextend(a(0), a(1)),
        Lt => from_bool(a(0) < a(1)),
        Gt => from_bool(a(0) > a(1)),
        Slt => from_bool(word::slt(a(0), a(1))),
        Sgt => from_bool(word::slt(a(1), a(0))),
        Eq => from_bool(a(0) == a(1)),
        And => a(0) & a(1),
        Or => a(0) | a(1),
        Xor => a(0) ^ a(1),
        Byte => word::byte_at(a(0), a(1)),
        Shl => word::shl(a(0), a(1)),
        Shr => word::shr(a(0), a(1)),
        Sar => word::sar(a(0), a(1)),
        AddMod => {
            if a(2).is_zero() {
                Word::ZERO
            } else {
                a(0).add_mod(a(1), a(2))
            }
        }
        MulMod => {
            if a(2).is_zero() {
                Word::ZERO
            } else {
                a(0).mul_mod(a(1), a(2))
            }
        }
        _ => return None,
    };
    Some(v)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConcreteState {
    pub pc: usize,
    /// Bottom first; the top of the stack is the last element.
    pub stack: Vec<Word>,
    pub memory: Memory,
    pub storage: Storage,
}

impl ConcreteState {
    pub fn new(storage: Storage) -> Self {
        ConcreteState {
            storage,
            ..Default::default()
        }
    }

    /// Builds a state from a stack listed top first.
    pub fn with_stack(top_first: &[Word]) -> Self {
        ConcreteState {
            stack: top_first.iter().rev().copied().collect(),
            ..Default::default()
        }
    }

    pub fn stack_top_first(&self) -> Vec<Word> {
        self.stack.iter().rev().copied().collect()
    }

    pub fn mload(&self, addr: Word) -> Word {
        self.memory.get(&word_address(addr)).copied().unwrap_or(Word::ZERO)
    }

    pub fn sload(&self, key: Word) -> Word {
        self.storage.get(&key).copied().unwrap_or(Word::ZERO)
    }

    fn read_words(&self, p: Word, n: Word) -> Vec<Word> {
        word_range(p, n).into_iter().map(|a| self.mload(a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HaltKind {
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
}

impl HaltKind {
    pub fn is_success(self) -> bool {
        matches!(self, HaltKind::Stop | HaltKind::Return | HaltKind::SelfDestruct)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Halt {
    pub pc: usize,
    pub kind: HaltKind,
    pub output: Vec<Word>,
    pub state: ConcreteState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Next(ConcreteState),
    Halt(Halt),
}

/// Values an executed instruction consumed and produced, both top first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepIo {
    pub inputs: Vec<Word>,
    pub outputs: Vec<Word>,
}

/// Everything outside the contract an instruction can observe.
/// Status pushed by a call-group instruction and the word it returns, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallResult {
    pub status: Word,
    pub output: Option<Word>,
}

impl CallResult {
    pub fn status(status: Word) -> Self {
        CallResult { status, output: None }
    }
}

pub trait Host {
    fn calldata(&self) -> &[u8];
    fn environment(&self, m: Mnemonic, arg: Option<Word>) -> Word;
    /// Performs a call-group instruction and returns its result. A host may
    /// replace the storage when the callee re-enters the contract.
    fn call(&mut self, pc: usize, m: Mnemonic, args: &[Word], storage: &mut Storage) -> Result<CallResult>;
}

fn calldata_word(data: &[u8], offset: Word) -> Word {
    let mut buf = [0u8; 32];
    if offset < Word::from(data.len()) {
        let off = to_usize(&offset);
        for (i, b) in buf.iter_mut().enumerate() {
            if let Some(x) = data.get(off + i) {
                *b = *x;
            }
        }
    }
    Word::from_be_bytes(buf)
}

fn jump_target(pc: usize, target: Word, code_len: usize) -> Result<usize> {
    let t = to_usize(&target);
    if target >= Word::from(code_len) {
        return Err(Error::InvalidJumpTarget {
            pc,
            target: word::format_word(&target),
        });
    }
    Ok(t)
}

/// Executes one instruction under the concrete rules.
pub fn step_concrete(
    state: &ConcreteState,
    op: &Opcode,
    code_len: usize,
    host: &mut dyn Host,
) -> Result<(StepOutcome, StepIo)> {
    let pc = state.pc;
    let m = op.mnemonic;
    let effect = m.stack_effect();
    if state.stack.len() < effect.required {
        return Err(Error::StackUnderflow { pc });
    }
    let mut next = state.clone();
    let mut inputs = Vec::with_capacity(effect.pops);
    for _ in 0..effect.pops {
        inputs.push(next.stack.pop().expect("depth checked"));
    }
    let mut outputs = Vec::new();
    let mut new_pc = pc + 1;

    match m.rule_group() {
        RuleGroup::Halt => {
            let (kind, output) = match m {
                Mnemonic::Stop => (HaltKind::Stop, Vec::new()),
                Mnemonic::Invalid => (HaltKind::Invalid, Vec::new()),
                Mnemonic::Return => (HaltKind::Return, next.read_words(inputs[0], inputs[1])),
                Mnemonic::Revert => (HaltKind::Revert, next.read_words(inputs[0], inputs[1])),
                _ => (HaltKind::SelfDestruct, vec![inputs[0]]),
            };
            return Ok((
                StepOutcome::Halt(Halt {
                    pc,
                    kind,
                    output,
                    state: next,
                }),
                StepIo { inputs, outputs },
            ));
        }
        RuleGroup::Pop | RuleGroup::JumpDest | RuleGroup::Log => {}
        RuleGroup::Unary | RuleGroup::Binary | RuleGroup::Ternary => {
            let v = match m {
                Mnemonic::CallDataLoad => calldata_word(host.calldata(), inputs[0]),
                Mnemonic::ExtCodeSize | Mnemonic::BlockHash | Mnemonic::Balance | Mnemonic::ExtCodeHash => {
                    host.environment(m, Some(inputs[0]))
                }
                Mnemonic::CallDataCopy | Mnemonic::CodeCopy | Mnemonic::ReturnDataCopy => Word::ZERO,
                _ => eval_pure(m, &inputs).expect("pure opcode"),
            };
            outputs.push(v);
        }
        RuleGroup::MLoad => outputs.push(next.mload(inputs[0])),
        RuleGroup::Sha3 => outputs.push(hash_words(&next.read_words(inputs[0], inputs[1]))),
        RuleGroup::MStore => {
            let addr = word_address(inputs[0]);
            let v = if m == Mnemonic::MStore8 {
                let old = next.mload(addr);
                (old & !Word::from(0xffu8)) | (inputs[1] & Word::from(0xffu8))
            } else {
                inputs[1]
            };
            next.memory.insert(addr, v);
        }
        RuleGroup::SLoad => outputs.push(next.sload(inputs[0])),
        RuleGroup::SStore => {
            next.storage.insert(inputs[0], inputs[1]);
        }
        RuleGroup::Dup => {
            let i = match m {
                Mnemonic::Dup(i) => i as usize,
                _ => unreachable!(),
            };
            let v = next.stack[next.stack.len() - i];
            outputs.push(v);
        }
        RuleGroup::Swap => {
            let i = match m {
                Mnemonic::Swap(i) => i as usize,
                _ => unreachable!(),
            };
            let n = next.stack.len();
            next.stack.swap(n - 1, n - 1 - i);
        }
        RuleGroup::JumpI => {
            if !inputs[1].is_zero() {
                new_pc = jump_target(pc, inputs[0], code_len)?;
            }
        }
        RuleGroup::Jump => new_pc = jump_target(pc, inputs[0], code_len)?,
        RuleGroup::Call => {
            let res = host.call(pc, m, &inputs, &mut next.storage)?;
            // Output region: (offset, size) of CALL-style instructions.
            let out = match m {
                Mnemonic::Call | Mnemonic::CallCode => Some((inputs[5], inputs[6])),
                Mnemonic::DelegateCall | Mnemonic::StaticCall => Some((inputs[4], inputs[5])),
                _ => None,
            };
            if let (Some((off, size)), Some(v)) = (out, res.output) {
                if !size.is_zero() {
                    next.memory.insert(word_address(off), v);
                }
            }
            outputs.push(res.status);
        }
        RuleGroup::Push => outputs.push(op.immediate.unwrap_or(Word::ZERO)),
        RuleGroup::Environment => {
            let v = match m {
                Mnemonic::CallDataSize => Word::from(host.calldata().len()),
                Mnemonic::Pc => Word::from(pc),
                Mnemonic::CodeSize => Word::from(code_len),
                _ => host.environment(m, None),
            };
            outputs.push(v);
        }
    }

    for v in &outputs {
        next.stack.push(*v);
    }
    if next.stack.len() > STACK_LIMIT {
        return Err(Error::StackOverflow { pc });
    }
    next.pc = new_pc;
    if new_pc >= code_len {
        // Running off the end behaves like STOP.
        return Ok((
            StepOutcome::Halt(Halt {
                pc,
                kind: HaltKind::Stop,
                output: Vec::new(),
                state: next,
            }),
            StepIo { inputs, outputs },
        ));
    }
    Ok((StepOutcome::Next(next), StepIo { inputs, outputs }))
}

/// Result of a call-group instruction in a concrete run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CallStub {
    /// Callee returns this value without touching our storage.
    Value(#[serde(with = "crate::word::serde_hex")] Word),
    /// Successful call whose single return word lands in the output region.
    Returns {
        #[serde(with = "crate::word::serde_hex")]
        returns: Word,
    },
    /// Callee calls back into this contract with the given calldata.
    Reenter {
        #[serde(with = "crate::word::serde_bytes")]
        reenter: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionEnv {
    pub calldata: Vec<u8>,
    pub origin: Word,
    pub caller: Word,
    pub callvalue: Word,
    pub address: Word,
    pub timestamp: Word,
    pub number: Word,
    pub balance: Word,
    pub storage: Storage,
    pub call_results: Vec<CallStub>,
}

impl Default for ExecutionEnv {
    fn default() -> Self {
        ExecutionEnv {
            calldata: Vec::new(),
            origin: Word::from(0x1000u32),
            caller: Word::from(0x1000u32),
            callvalue: Word::ZERO,
            address: Word::from(0xc0de_u32),
            timestamp: Word::from(1_600_000_000u64),
            number: Word::from(10_000_000u64),
            balance: Word::from(10u64).pow(Word::from(20u8)),
            storage: Storage::new(),
            call_results: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub pc: usize,
    /// Nesting level; 0 for the outer transaction.
    pub depth: usize,
    pub io: StepIo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedCall {
    pub call_pc: usize,
    pub calldata: Vec<u8>,
    pub halt: HaltKind,
    pub halt_pc: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteRun {
    pub records: Vec<StepRecord>,
    pub halt: Halt,
    pub gas_used: u64,
    pub nested: Vec<NestedCall>,
}

impl ConcreteRun {
    pub fn final_storage(&self) -> &Storage {
        &self.halt.state.storage
    }

    /// Executed pcs of the outer transaction.
    pub fn pcs(&self) -> Vec<usize> {
        self.records.iter().filter(|r| r.depth == 0).map(|r| r.pc).collect()
    }
}

/// Rewrites the value operand of the store executed at a given step index.
#[derive(Clone, Copy)]
pub struct Perturbation {
    pub step: usize,
    pub apply: fn(Word) -> Word,
}

#[derive(Clone)]
pub struct RunOptions {
    pub step_limit: usize,
    pub gas: GasTable,
    pub perturb: Option<Perturbation>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_limit: 100_000,
            gas: GasTable::default(),
            perturb: None,
        }
    }
}

struct Machine<'a> {
    program: &'a Program,
    env: &'a ExecutionEnv,
    opts: &'a RunOptions,
    stubs: VecDeque<CallStub>,
    calldata: Vec<Vec<u8>>,
    records: Vec<StepRecord>,
    nested: Vec<NestedCall>,
    gas_used: u64,
}

impl Machine<'_> {
    fn execute(&mut self, storage: Storage) -> Result<Halt> {
        let depth = self.calldata.len() - 1;
        let mut state = ConcreteState::new(storage);
        loop {
            if self.records.len() >= self.opts.step_limit {
                return Err(Error::StepLimitExceeded(self.opts.step_limit));
            }
            let op = *self.program.get(state.pc).ok_or(Error::InvalidJumpTarget {
                pc: state.pc,
                target: state.pc.to_string(),
            })?;
            if let Some(p) = self.opts.perturb {
                if p.step == self.records.len()
                    && matches!(op.rule_group(), RuleGroup::MStore | RuleGroup::SStore)
                    && state.stack.len() >= 2
                {
                    let n = state.stack.len();
                    state.stack[n - 2] = (p.apply)(state.stack[n - 2]);
                }
            }
            self.gas_used += self.opts.gas.cost_of(&op);
            let pc = state.pc;
            let (outcome, io) = step_concrete(&state, &op, self.program.len(), self)?;
            self.records.push(StepRecord { pc, depth, io });
            match outcome {
                StepOutcome::Next(s) => state = s,
                StepOutcome::Halt(h) => return Ok(h),
            }
        }
    }
}

impl Host for Machine<'_> {
    fn calldata(&self) -> &[u8] {
        self.calldata.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn environment(&self, m: Mnemonic, _arg: Option<Word>) -> Word {
        let e = self.env;
        match m {
            Mnemonic::Origin => e.origin,
            Mnemonic::Caller => e.caller,
            Mnemonic::CallValue if self.calldata.len() == 1 => e.callvalue,
            Mnemonic::Address => e.address,
            Mnemonic::Timestamp => e.timestamp,
            Mnemonic::Number => e.number,
            Mnemonic::SelfBalance => e.balance,
            Mnemonic::Balance => e.balance,
            Mnemonic::GasLimit | Mnemonic::Gas => Word::from(30_000_000u64),
            Mnemonic::ChainId => Word::from(1u8),
            _ => Word::ZERO,
        }
    }

    fn call(&mut self, pc: usize, m: Mnemonic, _args: &[Word], storage: &mut Storage) -> Result<CallResult> {
        let stub = self.stubs.pop_front().unwrap_or(CallStub::Value(Word::from(1u8)));
        match stub {
            CallStub::Value(v) => Ok(CallResult::status(v)),
            CallStub::Returns { returns } => Ok(CallResult {
                status: Word::from(1u8),
                output: Some(returns),
            }),
            CallStub::Reenter { reenter } => {
                if self.calldata.len() > MAX_CALL_DEPTH || m == Mnemonic::StaticCall {
                    return Ok(CallResult::status(Word::ZERO));
                }
                self.calldata.push(reenter.clone());
                let halt = self.execute(storage.clone());
                self.calldata.pop();
                let halt = halt?;
                self.nested.push(NestedCall {
                    call_pc: pc,
                    calldata: reenter,
                    halt: halt.kind,
                    halt_pc: halt.pc,
                });
                if halt.kind.is_success() {
                    *storage = halt.state.storage;
                    Ok(CallResult::status(Word::from(1u8)))
                } else {
                    Ok(CallResult::status(Word::ZERO))
                }
            }
        }
    }
}

/// Runs one transaction from pc 0 with the environment's storage.
pub fn run_concrete(program: &Program, env: &ExecutionEnv, step_limit: usize) -> Result<ConcreteRun> {
    run_concrete_with(
        program,
        env,
        &RunOptions {
            step_limit,
            ..RunOptions::default()
        },
    )
}

pub fn run_concrete_with(program: &Program, env: &ExecutionEnv, opts: &RunOptions) -> Result<ConcreteRun> {
    let mut machine = Machine {
        program,
        env,
        opts,
        stubs: env.call_results.iter().cloned().collect(),
        calldata: vec![env.calldata.clone()],
        records: Vec::new(),
        nested: Vec::new(),
        gas_used: 0,
    };
    let halt = machine.execute(env.storage.clone())?;
    Ok(ConcreteRun {
        records: machine.records,
        halt,
        gas_used: machine.gas_used,
        nested: machine.nested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::program::decode_program;

    fn w(v: u64) -> Word {
        Word::from(v)
    }

    struct NullHost;
    impl Host for NullHost {
        fn calldata(&self) -> &[u8] {
            &[]
        }
        fn environment(&self, _: Mnemonic, _: Option<Word>) -> Word {
            Word::ZERO
        }
        fn call(&mut self, _: usize, _: Mnemonic, _: &[Word], _: &mut Storage) -> Result<CallResult> {
            Ok(CallResult::status(w(1)))
        }
    }

    fn step(stack: &[u64], m: Mnemonic) -> Result<StepOutcome> {
        let words: Vec<Word> = stack.iter().map(|v| w(*v)).collect();
        let s = ConcreteState::with_stack(&words);
        step_concrete(&s, &Opcode::new(m), 100, &mut NullHost).map(|(o, _)| o)
    }

    fn next_stack(stack: &[u64], m: Mnemonic) -> Vec<Word> {
        match step(stack, m).unwrap() {
            StepOutcome::Next(s) => s.stack_top_first(),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn add_and_pop() {
        assert_eq!(next_stack(&[6, 5], Mnemonic::Add), vec![w(11)]);
        assert_eq!(next_stack(&[9], Mnemonic::Pop), Vec::<Word>::new());
        assert_eq!(step(&[], Mnemonic::Add), Err(Error::StackUnderflow { pc: 0 }));
    }

    #[test]
    fn operand_order_is_top_first() {
        assert_eq!(next_stack(&[10, 3], Mnemonic::Sub), vec![w(7)]);
        assert_eq!(next_stack(&[10, 3], Mnemonic::Div), vec![w(3)]);
        assert_eq!(next_stack(&[1, 3], Mnemonic::Lt), vec![w(1)]);
        assert_eq!(next_stack(&[4, 1], Mnemonic::Shl), vec![w(16)]);
    }

    #[test]
    fn jumpi_branches() {
        match step(&[7, 0], Mnemonic::JumpI).unwrap() {
            StepOutcome::Next(s) => assert_eq!(s.pc, 1),
            _ => panic!(),
        }
        match step(&[7, 3], Mnemonic::JumpI).unwrap() {
            StepOutcome::Next(s) => assert_eq!(s.pc, 7),
            _ => panic!(),
        }
        assert!(matches!(
            step(&[700, 1], Mnemonic::JumpI),
            Err(Error::InvalidJumpTarget { .. })
        ));
    }

    #[test]
    fn dup_and_swap() {
        assert_eq!(next_stack(&[1, 2, 3], Mnemonic::Dup(3)), vec![w(3), w(1), w(2), w(3)]);
        assert_eq!(next_stack(&[1, 2, 3], Mnemonic::Swap(2)), vec![w(3), w(2), w(1)]);
        assert!(step(&[1, 2], Mnemonic::Swap(2)).is_err());
    }

    #[test]
    fn memory_is_word_granular() {
        let p =
            decode_program("PUSH 0x1234\nPUSH 0x20\nMSTORE\nPUSH 0xff01\nPUSH 0x25\nMSTORE8\nPUSH 0x21\nMLOAD\nSTOP")
                .unwrap();
        let run = run_concrete(&p, &ExecutionEnv::default(), 100).unwrap();
        assert_eq!(run.halt.state.stack_top_first(), vec![w(0x1201)]);
    }

    #[test]
    fn straight_line_run() {
        let p = decode_program("PUSH 0x05\nPUSH 0x06\nADD\nSTOP").unwrap();
        let run = run_concrete(&p, &ExecutionEnv::default(), 100).unwrap();
        assert_eq!(run.records.len(), 4);
        assert_eq!(run.halt.state.stack_top_first(), vec![w(11)]);
        assert_eq!(run.gas_used, 9);
    }

    #[test]
    fn step_limit() {
        let p = decode_program("@l: PUSH @l\nJUMP").unwrap();
        assert_eq!(
            run_concrete(&p, &ExecutionEnv::default(), 50).unwrap_err(),
            Error::StepLimitExceeded(50)
        );
    }

    #[test]
    fn calldata_and_sha3() {
        let p = decode_program("PUSH 0x04\nCALLDATALOAD\nPUSH 0x00\nMSTORE\nPUSH 0x20\nPUSH 0x00\nSHA3\nSTOP").unwrap();
        let mut env = ExecutionEnv {
            calldata: vec![0xaa, 0xbb, 0xcc, 0xdd],
            ..ExecutionEnv::default()
        };
        env.calldata.extend(w(42).to_be_bytes::<32>());
        let run = run_concrete(&p, &env, 100).unwrap();
        assert_eq!(run.halt.state.stack_top_first(), vec![hash_words(&[w(42)])]);
    }

    #[test]
    fn reentry_commits_or_rolls_back() {
        // Calldata word 0 selects: 0 -> store 1 at slot 0 and call out; else -> revert if slot 0 set.
        let src = "PUSH 0x00\nCALLDATALOAD\nPUSH @inner\nJUMPI\n\
                   PUSH 0x01\nPUSH 0x00\nSSTORE\n\
                   PUSH 0x00\nPUSH 0x00\nPUSH 0x00\nPUSH 0x00\nPUSH 0x00\nPUSH 0x00\nPUSH 0x00\nCALL\n\
                   PUSH 0x00\nSSTORE\nSTOP\n\
                   @inner: PUSH 0x00\nSLOAD\nPUSH @bad\nJUMPI\nPUSH 0x07\nPUSH 0x05\nSSTORE\nSTOP\n\
                   @bad: PUSH 0x00\nPUSH 0x00\nREVERT";
        let p = decode_program(src).unwrap();
        let mut inner = vec![0u8; 32];
        inner[31] = 1;
        let env = ExecutionEnv {
            calldata: vec![0u8; 32],
            call_results: vec![CallStub::Reenter { reenter: inner }],
            ..ExecutionEnv::default()
        };
        let run = run_concrete(&p, &env, 1000).unwrap();
        assert_eq!(run.nested.len(), 1);
        assert_eq!(run.nested[0].halt, HaltKind::Revert);
        // CALL result 0 was stored into slot 0.
        assert_eq!(run.final_storage().get(&w(0)), Some(&w(0)));
        assert_eq!(run.final_storage().get(&w(5)), None);
    }
}
