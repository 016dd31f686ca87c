use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evm::concrete::eval_pure;
use crate::evm::opcode::{Mnemonic, RuleGroup};
use crate::word::{format_word, Word};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymNode {
    pub op: Mnemonic,
    pub operands: Vec<SymbolicValue>,
}

/// A concrete word or an expression tree `op(operand_0, ..., operand_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolicValue {
    Concrete(Word),
    Node(Arc<SymNode>),
}

impl SymbolicValue {
    pub fn concrete(v: impl Into<Word>) -> Self {
        SymbolicValue::Concrete(v.into())
    }

    /// Builds a node without folding.
    pub fn node(op: Mnemonic, operands: Vec<SymbolicValue>) -> Self {
        SymbolicValue::Node(Arc::new(SymNode { op, operands }))
    }

    pub fn as_concrete(&self) -> Option<Word> {
        match self {
            SymbolicValue::Concrete(w) => Some(*w),
            SymbolicValue::Node(_) => None,
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self, SymbolicValue::Concrete(_))
    }

    pub fn op(&self) -> Option<Mnemonic> {
        match self {
            SymbolicValue::Node(n) => Some(n.op),
            SymbolicValue::Concrete(_) => None,
        }
    }

    pub fn operands(&self) -> &[SymbolicValue] {
        match self {
            SymbolicValue::Node(n) => &n.operands,
            SymbolicValue::Concrete(_) => &[],
        }
    }

    /// True if any subterm is a node with operator `op`.
    pub fn contains_op(&self, op: Mnemonic) -> bool {
        match self {
            SymbolicValue::Concrete(_) => false,
            SymbolicValue::Node(n) => n.op == op || n.operands.iter().any(|o| o.contains_op(op)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SymbolicValue::Concrete(_) => 1,
            SymbolicValue::Node(n) => 1 + n.operands.iter().map(|o| o.size()).sum::<usize>(),
        }
    }
}

impl From<Word> for SymbolicValue {
    fn from(w: Word) -> Self {
        SymbolicValue::Concrete(w)
    }
}

impl fmt::Display for SymbolicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicValue::Concrete(w) => f.write_str(&format_word(w)),
            SymbolicValue::Node(n) => {
                if n.operands.is_empty() {
                    return write!(f, "{}", n.op);
                }
                // A hashed region prints as MLOAD(p,n); its resolved words are
                // kept for comparison only.
                let shown = if n.op == Mnemonic::MLoad && n.operands.len() > 2 {
                    &n.operands[..2]
                } else {
                    &n.operands[..]
                };
                write!(f, "{}(", n.op)?;
                for (i, o) in shown.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{o}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Serialize for SymbolicValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Applies `op` to symbolic operands (top of stack first). Folds to a
/// concrete word when every operand is concrete and `op` is not a load or an
/// environment read.
pub fn eval_symbolic(op: Mnemonic, operands: &[SymbolicValue]) -> Result<SymbolicValue> {
    let expected = match op.rule_group() {
        RuleGroup::Sha3 => 1,
        _ => op.stack_effect().pops,
    };
    if op.rule_group() == RuleGroup::Sha3 {
        // SHA3 takes its memory summary, or the raw (p, n) pair.
        if operands.len() == 2 {
            let summary = SymbolicValue::node(Mnemonic::MLoad, operands.to_vec());
            return Ok(SymbolicValue::node(op, vec![summary]));
        }
    }
    if operands.len() != expected {
        return Err(Error::ArityMismatch {
            op: op.name(),
            expected,
            got: operands.len(),
        });
    }
    if !op.is_opaque() {
        let words: Option<Vec<Word>> = operands.iter().map(|o| o.as_concrete()).collect();
        if let Some(words) = words {
            if let Some(v) = eval_pure(op, &words) {
                return Ok(SymbolicValue::Concrete(v));
            }
        }
    }
    Ok(SymbolicValue::node(op, operands.to_vec()))
}
