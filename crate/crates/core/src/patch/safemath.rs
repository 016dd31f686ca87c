//! Checked-arithmetic helper templates and a word-width-generic mirror of
//! their behavior.

use serde::{Deserialize, Serialize};

use crate::evm::opcode::Mnemonic;
use crate::word::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SafeOp {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
}

impl SafeOp {
    pub const ALL: [SafeOp; 5] = [SafeOp::Add, SafeOp::Sub, SafeOp::Mul, SafeOp::Div, SafeOp::Exp];

    pub fn from_mnemonic(m: Mnemonic) -> Option<SafeOp> {
        Some(match m {
            Mnemonic::Add => SafeOp::Add,
            Mnemonic::Sub => SafeOp::Sub,
            Mnemonic::Mul => SafeOp::Mul,
            Mnemonic::Div => SafeOp::Div,
            Mnemonic::Exp => SafeOp::Exp,
            _ => return None,
        })
    }

    /// Source operator, plain and compound.
    pub fn symbol(self) -> &'static str {
        match self {
            SafeOp::Add => "+",
            SafeOp::Sub => "-",
            SafeOp::Mul => "*",
            SafeOp::Div => "/",
            SafeOp::Exp => "**",
        }
    }

    pub fn function_name(self) -> &'static str {
        match self {
            SafeOp::Add => "add_uint256",
            SafeOp::Sub => "sub_uint256",
            SafeOp::Mul => "mul_uint256",
            SafeOp::Div => "div_uint256",
            SafeOp::Exp => "exp_uint256",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SafeMathTemplate {
    pub op: SafeOp,
    pub function_name: &'static str,
    pub body: &'static str,
}

const ADD: &str = "    function add_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        uint256 c = a + b;
        assert(c >= a);
        return c;
    }
";

const SUB: &str = "    function sub_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        assert(b <= a);
        return a - b;
    }
";

const MUL: &str = "    function mul_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        if (a == 0) {
            return 0;
        }
        uint256 c = a * b;
        assert(c / a == b);
        return c;
    }
";

const DIV: &str = "    function div_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        assert(b > 0);
        return a / b;
    }
";

const EXP: &str = "    function exp_uint256(uint256 a, uint256 b) internal pure returns (uint256) {
        uint256 c = 1;
        for (uint256 i = 0; i < b; i++) {
            c = mul_uint256(c, a);
        }
        return c;
    }
";

/// Lock slot and modifier inserted for reentrancy fixes.
pub const NON_REENTRANT: &str = "    bool private locked_;

    modifier nonReentrant() {
        require(!locked_);
        locked_ = true;
        _;
        locked_ = false;
    }
";

pub fn template(op: SafeOp) -> SafeMathTemplate {
    let body = match op {
        SafeOp::Add => ADD,
        SafeOp::Sub => SUB,
        SafeOp::Mul => MUL,
        SafeOp::Div => DIV,
        SafeOp::Exp => EXP,
    };
    SafeMathTemplate {
        op,
        function_name: op.function_name(),
        body,
    }
}

/// Helpers a template calls.
pub fn requires(op: SafeOp) -> &'static [SafeOp] {
    match op {
        SafeOp::Exp => &[SafeOp::Mul],
        _ => &[],
    }
}

fn mask(bits: u32) -> Word {
    if bits >= 256 {
        Word::MAX
    } else {
        (Word::from(1u8) << bits as usize) - Word::from(1u8)
    }
}

/// Result of the template on `bits`-wide words; `None` when it reverts.
/// Follows the template statements with wrapping arithmetic, so 8-bit runs
/// exercise the same checks as 256-bit ones.
pub fn eval(op: SafeOp, a: Word, b: Word, bits: u32) -> Option<Word> {
    let m = mask(bits);
    let (a, b) = (a & m, b & m);
    let add = |x: Word, y: Word| x.wrapping_add(y) & m;
    let mul = |x: Word, y: Word| -> Option<Word> {
        if x.is_zero() {
            return Some(Word::ZERO);
        }
        let c = x.wrapping_mul(y) & m;
        (c / x == y).then_some(c)
    };
    match op {
        SafeOp::Add => {
            let c = add(a, b);
            (c >= a).then_some(c)
        }
        SafeOp::Sub => (b <= a).then(|| a.wrapping_sub(b) & m),
        SafeOp::Mul => mul(a, b),
        SafeOp::Div => (b > Word::ZERO).then(|| a / b),
        SafeOp::Exp => {
            let mut c = Word::from(1u8);
            let mut i = Word::ZERO;
            while i < b {
                c = mul(c, a)?;
                i = add(i, Word::from(1u8));
                // A base of 0 or 1 stays fixed; the rest of the loop cannot fail.
                if a <= Word::from(1u8) {
                    break;
                }
            }
            Some(c)
        }
    }
}
