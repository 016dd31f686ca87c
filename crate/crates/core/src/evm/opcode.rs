use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::word::{format_word, Word};

/// Instruction names understood by the assembler.
///
/// The first block mirrors the opcode table of the semantic model; the
/// trailing variants (`Push`, `JumpDest`, the zero-operand environment reads
/// and `Log`) are needed to write runnable programs and get their own rule
/// groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mnemonic {
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
    Pop,
    Not,
    IsZero,
    CallDataLoad,
    ExtCodeSize,
    BlockHash,
    Balance,
    ExtCodeHash,
    Add,
    Mul,
    Sub,
    Div,
    SDiv,
    Mod,
    SMod,
    Exp,
    SignExtend,
    Lt,
    Gt,
    Slt,
    Sgt,
    Eq,
    And,
    Or,
    Xor,
    Byte,
    Shl,
    Shr,
    Sar,
    AddMod,
    MulMod,
    CallDataCopy,
    CodeCopy,
    ReturnDataCopy,
    MLoad,
    Sha3,
    MStore,
    MStore8,
    SLoad,
    SStore,
    Dup(u8),
    Swap(u8),
    JumpI,
    Jump,
    StaticCall,
    Call,
    CallCode,
    Create,
    Create2,
    DelegateCall,
    // Not part of the semantic table.
    Push,
    JumpDest,
    Address,
    Origin,
    Caller,
    CallValue,
    CallDataSize,
    CodeSize,
    GasPrice,
    ReturnDataSize,
    Coinbase,
    Timestamp,
    Number,
    Difficulty,
    GasLimit,
    ChainId,
    SelfBalance,
    Pc,
    MSize,
    Gas,
    Log(u8),
}

/// Semantic rule an opcode executes under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleGroup {
    Halt,
    Pop,
    Unary,
    Binary,
    Ternary,
    MLoad,
    Sha3,
    MStore,
    SLoad,
    SStore,
    Dup,
    Swap,
    JumpI,
    Jump,
    Call,
    Push,
    Environment,
    JumpDest,
    Log,
}

impl RuleGroup {
    /// Groups that come from the semantic rule table rather than from the
    /// assembler extensions.
    pub fn is_semantic_rule(self) -> bool {
        !matches!(
            self,
            RuleGroup::Push | RuleGroup::Environment | RuleGroup::JumpDest | RuleGroup::Log
        )
    }
}

const NAMED: &[(Mnemonic, &str)] = &[
    (Mnemonic::Stop, "STOP"),
    (Mnemonic::Return, "RETURN"),
    (Mnemonic::Revert, "REVERT"),
    (Mnemonic::Invalid, "INVALID"),
    (Mnemonic::SelfDestruct, "SELFDESTRUCT"),
    (Mnemonic::Pop, "POP"),
    (Mnemonic::Not, "NOT"),
    (Mnemonic::IsZero, "ISZERO"),
    (Mnemonic::CallDataLoad, "CALLDATALOAD"),
    (Mnemonic::ExtCodeSize, "EXTCODESIZE"),
    (Mnemonic::BlockHash, "BLOCKHASH"),
    (Mnemonic::Balance, "BALANCE"),
    (Mnemonic::ExtCodeHash, "EXTCODEHASH"),
    (Mnemonic::Add, "ADD"),
    (Mnemonic::Mul, "MUL"),
    (Mnemonic::Sub, "SUB"),
    (Mnemonic::Div, "DIV"),
    (Mnemonic::SDiv, "SDIV"),
    (Mnemonic::Mod, "MOD"),
    (Mnemonic::SMod, "SMOD"),
    (Mnemonic::Exp, "EXP"),
    (Mnemonic::SignExtend, "SIGNEXTEND"),
    (Mnemonic::Lt, "LT"),
    (Mnemonic::Gt, "GT"),
    (Mnemonic::Slt, "SLT"),
    (Mnemonic::Sgt, "SGT"),
    (Mnemonic::Eq, "EQ"),
    (Mnemonic::And, "AND"),
    (Mnemonic::Or, "OR"),
    (Mnemonic::Xor, "XOR"),
    (Mnemonic::Byte, "BYTE"),
    (Mnemonic::Shl, "SHL"),
    (Mnemonic::Shr, "SHR"),
    (Mnemonic::Sar, "SAR"),
    (Mnemonic::AddMod, "ADDMOD"),
    (Mnemonic::MulMod, "MULMOD"),
    (Mnemonic::CallDataCopy, "CALLDATACOPY"),
    (Mnemonic::CodeCopy, "CODECOPY"),
    (Mnemonic::ReturnDataCopy, "RETURNDATACOPY"),
    (Mnemonic::MLoad, "MLOAD"),
    (Mnemonic::Sha3, "SHA3"),
    (Mnemonic::MStore, "MSTORE"),
    (Mnemonic::MStore8, "MSTORE8"),
    (Mnemonic::SLoad, "SLOAD"),
    (Mnemonic::SStore, "SSTORE"),
    (Mnemonic::JumpI, "JUMPI"),
    (Mnemonic::Jump, "JUMP"),
    (Mnemonic::StaticCall, "STATICCALL"),
    (Mnemonic::Call, "CALL"),
    (Mnemonic::CallCode, "CALLCODE"),
    (Mnemonic::Create, "CREATE"),
    (Mnemonic::Create2, "CREATE2"),
    (Mnemonic::DelegateCall, "DELEGATECALL"),
    (Mnemonic::Push, "PUSH"),
    (Mnemonic::JumpDest, "JUMPDEST"),
    (Mnemonic::Address, "ADDRESS"),
    (Mnemonic::Origin, "ORIGIN"),
    (Mnemonic::Caller, "CALLER"),
    (Mnemonic::CallValue, "CALLVALUE"),
    (Mnemonic::CallDataSize, "CALLDATASIZE"),
    (Mnemonic::CodeSize, "CODESIZE"),
    (Mnemonic::GasPrice, "GASPRICE"),
    (Mnemonic::ReturnDataSize, "RETURNDATASIZE"),
    (Mnemonic::Coinbase, "COINBASE"),
    (Mnemonic::Timestamp, "TIMESTAMP"),
    (Mnemonic::Number, "NUMBER"),
    (Mnemonic::Difficulty, "DIFFICULTY"),
    (Mnemonic::GasLimit, "GASLIMIT"),
    (Mnemonic::ChainId, "CHAINID"),
    (Mnemonic::SelfBalance, "SELFBALANCE"),
    (Mnemonic::Pc, "PC"),
    (Mnemonic::MSize, "MSIZE"),
    (Mnemonic::Gas, "GAS"),
];

/// How many words an opcode pops and pushes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackEffect {
    /// Minimum stack depth required before executing.
    pub required: usize,
    pub pops: usize,
    pub pushes: usize,
}

impl StackEffect {
    const fn new(pops: usize, pushes: usize) -> Self {
        StackEffect {
            required: pops,
            pops,
            pushes,
        }
    }

    pub fn delta(&self) -> isize {
        self.pushes as isize - self.pops as isize
    }
}

impl Mnemonic {
    /// Every mnemonic listed in the semantic opcode table.
    pub fn semantic_table() -> Vec<Mnemonic> {
        let mut out: Vec<Mnemonic> = NAMED
            .iter()
            .map(|(m, _)| *m)
            .filter(|m| m.rule_group().is_semantic_rule())
            .collect();
        out.extend((1..=16).map(Mnemonic::Dup));
        out.extend((1..=16).map(Mnemonic::Swap));
        out.sort();
        out
    }

    /// Every mnemonic the assembler accepts.
    pub fn all() -> Vec<Mnemonic> {
        let mut out: Vec<Mnemonic> = NAMED.iter().map(|(m, _)| *m).collect();
        out.extend((1..=16).map(Mnemonic::Dup));
        out.extend((1..=16).map(Mnemonic::Swap));
        out.extend((0..=4).map(Mnemonic::Log));
        out.sort();
        out
    }

    pub fn rule_group(self) -> RuleGroup {
        use Mnemonic::*;
        match self {
            Stop | Return | Revert | Invalid | SelfDestruct => RuleGroup::Halt,
            Pop => RuleGroup::Pop,
            Not | IsZero | CallDataLoad | ExtCodeSize | BlockHash | Balance | ExtCodeHash => RuleGroup::Unary,
            Add | Mul | Sub | Div | SDiv | Mod | SMod | Exp | SignExtend | Lt | Gt | Slt | Sgt | Eq | And | Or
            | Xor | Byte | Shl | Shr | Sar => RuleGroup::Binary,
            AddMod | MulMod | CallDataCopy | CodeCopy | ReturnDataCopy => RuleGroup::Ternary,
            MLoad => RuleGroup::MLoad,
            Sha3 => RuleGroup::Sha3,
            MStore | MStore8 => RuleGroup::MStore,
            SLoad => RuleGroup::SLoad,
            SStore => RuleGroup::SStore,
            Dup(_) => RuleGroup::Dup,
            Swap(_) => RuleGroup::Swap,
            JumpI => RuleGroup::JumpI,
            Jump => RuleGroup::Jump,
            StaticCall | Call | CallCode | Create | Create2 | DelegateCall => RuleGroup::Call,
            Push => RuleGroup::Push,
            JumpDest => RuleGroup::JumpDest,
            Address | Origin | Caller | CallValue | CallDataSize | CodeSize | GasPrice | ReturnDataSize | Coinbase
            | Timestamp | Number | Difficulty | GasLimit | ChainId | SelfBalance | Pc | MSize | Gas => {
                RuleGroup::Environment
            }
            Log(_) => RuleGroup::Log,
        }
    }

    pub fn stack_effect(self) -> StackEffect {
        use Mnemonic::*;
        match self {
            Stop | Invalid => StackEffect::new(0, 0),
            Return | Revert => StackEffect::new(2, 0),
            SelfDestruct => StackEffect::new(1, 0),
            Dup(i) => StackEffect {
                required: i as usize,
                pops: 0,
                pushes: 1,
            },
            Swap(i) => StackEffect {
                required: i as usize + 1,
                pops: 0,
                pushes: 0,
            },
            Call | CallCode => StackEffect::new(7, 1),
            DelegateCall | StaticCall => StackEffect::new(6, 1),
            Create => StackEffect::new(3, 1),
            Create2 => StackEffect::new(4, 1),
            Log(n) => StackEffect::new(2 + n as usize, 0),
            _ => match self.rule_group() {
                RuleGroup::Pop => StackEffect::new(1, 0),
                RuleGroup::Unary | RuleGroup::MLoad | RuleGroup::SLoad => StackEffect::new(1, 1),
                RuleGroup::Binary | RuleGroup::Sha3 => StackEffect::new(2, 1),
                RuleGroup::Ternary => StackEffect::new(3, 1),
                RuleGroup::MStore | RuleGroup::SStore | RuleGroup::JumpI => StackEffect::new(2, 0),
                RuleGroup::Jump => StackEffect::new(1, 0),
                RuleGroup::Push | RuleGroup::Environment => StackEffect::new(0, 1),
                RuleGroup::JumpDest => StackEffect::new(0, 0),
                _ => unreachable!("covered above: {self:?}"),
            },
        }
    }

    /// Terminates a trace.
    pub fn is_halt(self) -> bool {
        self.rule_group() == RuleGroup::Halt
    }

    /// External-call opcodes that may hand control to another contract
    /// (`STATICCALL` cannot modify state and is excluded).
    pub fn is_critical(self) -> bool {
        use Mnemonic::*;
        matches!(self, Call | CallCode | DelegateCall | SelfDestruct | Create | Create2)
    }

    /// Opcodes that write a variable: `SWAPi`, `MSTORE`/`MSTORE8`, `SSTORE`.
    pub fn is_assignment(self) -> bool {
        matches!(
            self,
            Mnemonic::Swap(_) | Mnemonic::MStore | Mnemonic::MStore8 | Mnemonic::SStore
        )
    }

    /// Arithmetic whose wrap-around can reach an external call.
    pub fn is_overflow_arithmetic(self) -> bool {
        matches!(self, Mnemonic::Add | Mnemonic::Sub | Mnemonic::Mul | Mnemonic::Div)
    }

    /// Opcodes whose result depends on state or the environment; they are never
    /// constant-folded.
    pub fn is_opaque(self) -> bool {
        use Mnemonic::*;
        matches!(
            self.rule_group(),
            RuleGroup::MLoad | RuleGroup::SLoad | RuleGroup::Sha3 | RuleGroup::Call
        ) || matches!(
            self,
            CallDataLoad | ExtCodeSize | BlockHash | Balance | ExtCodeHash | CallDataCopy | CodeCopy | ReturnDataCopy
        ) || self.rule_group() == RuleGroup::Environment
    }

    pub fn name(self) -> String {
        match self {
            Mnemonic::Dup(i) => format!("DUP{i}"),
            Mnemonic::Swap(i) => format!("SWAP{i}"),
            Mnemonic::Log(i) => format!("LOG{i}"),
            other => NAMED
                .iter()
                .find(|(m, _)| *m == other)
                .map(|(_, n)| (*n).to_string())
                .expect("every plain mnemonic has a name"),
        }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Mnemonic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        if let Some((m, _)) = NAMED.iter().find(|(_, n)| *n == upper) {
            return Ok(*m);
        }
        let indexed = |prefix: &str, lo: u8, hi: u8| -> Option<u8> {
            let n: u8 = upper.strip_prefix(prefix)?.parse().ok()?;
            (lo..=hi).contains(&n).then_some(n)
        };
        if let Some(i) = indexed("DUP", 1, 16) {
            return Ok(Mnemonic::Dup(i));
        }
        if let Some(i) = indexed("SWAP", 1, 16) {
            return Ok(Mnemonic::Swap(i));
        }
        if let Some(i) = indexed("LOG", 0, 4) {
            return Ok(Mnemonic::Log(i));
        }
        if indexed("PUSH", 1, 32).is_some() {
            return Ok(Mnemonic::Push);
        }
        if upper == "KECCAK256" {
            return Ok(Mnemonic::Sha3);
        }
        Err(s.to_string())
    }
}

impl Serialize for Mnemonic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Mnemonic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("unknown opcode {s}")))
    }
}

/// A decoded instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Opcode {
    pub mnemonic: Mnemonic,
    /// Constant pushed by `PUSH`.
    pub immediate: Option<Word>,
}

impl Opcode {
    pub fn new(mnemonic: Mnemonic) -> Self {
        Opcode {
            mnemonic,
            immediate: None,
        }
    }

    pub fn push(value: Word) -> Self {
        Opcode {
            mnemonic: Mnemonic::Push,
            immediate: Some(value),
        }
    }

    pub fn rule_group(&self) -> RuleGroup {
        self.mnemonic.rule_group()
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.immediate {
            Some(v) => write!(f, "{} {}", self.mnemonic, format_word(v)),
            None => write!(f, "{}", self.mnemonic),
        }
    }
}
