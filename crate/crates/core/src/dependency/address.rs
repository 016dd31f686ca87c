//! Symbolic addresses as ranges of concrete offsets from a base.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::evm::opcode::Mnemonic;
use crate::symbolic::value::SymbolicValue;
use crate::word::Word;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Base {
    /// Offsets are absolute addresses.
    Constant,
    /// A hashed memory region, `SHA3(MLOAD(p, n, words...))`.
    Sha3(SymbolicValue),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AddressRange {
    pub base: Base,
    pub lo: Word,
    pub hi: Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Resolved {
    Range(AddressRange),
    Unresolvable,
}

impl Resolved {
    pub fn is_resolved(&self) -> bool {
        matches!(self, Resolved::Range(_))
    }
}

/// `Concrete(c)` is `(constant, c, c)`, a `SHA3` node is its own base at
/// offset 0, `ADD(x, k)` shifts the range of `x` by a constant `k`.
pub fn address_range(addr: &SymbolicValue) -> Resolved {
    match addr {
        SymbolicValue::Concrete(c) => Resolved::Range(AddressRange {
            base: Base::Constant,
            lo: *c,
            hi: *c,
        }),
        SymbolicValue::Node(n) => match n.op {
            Mnemonic::Sha3 => Resolved::Range(AddressRange {
                base: Base::Sha3(addr.clone()),
                lo: Word::ZERO,
                hi: Word::ZERO,
            }),
            Mnemonic::Add => {
                let (a, b) = (&n.operands[0], &n.operands[1]);
                let (inner, k) = match (a.as_concrete(), b.as_concrete()) {
                    (Some(k), None) => (b, k),
                    (None, Some(k)) => (a, k),
                    _ => return Resolved::Unresolvable,
                };
                match address_range(inner) {
                    Resolved::Range(r) => Resolved::Range(AddressRange {
                        base: r.base,
                        lo: r.lo.wrapping_add(k),
                        hi: r.hi.wrapping_add(k),
                    }),
                    Resolved::Unresolvable => Resolved::Unresolvable,
                }
            }
            _ => Resolved::Unresolvable,
        },
    }
}

fn may_equal(a: &SymbolicValue, b: &SymbolicValue) -> bool {
    match (a.as_concrete(), b.as_concrete()) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Whether two hashed regions may hash the same words. Distinct concrete
/// words never collide; anything symbolic may.
pub fn sha3_may_alias(a: &SymbolicValue, b: &SymbolicValue) -> bool {
    if a == b {
        return true;
    }
    let (sa, sb) = (&a.operands()[0], &b.operands()[0]);
    let (wa, wb) = (sa.operands(), sb.operands());
    if wa.len() < 2 || wb.len() < 2 {
        return true;
    }
    // Hashed lengths must match when both are known.
    if !may_equal(&wa[1], &wb[1]) {
        return false;
    }
    let (ca, cb) = (&wa[2..], &wb[2..]);
    if ca.is_empty() || cb.is_empty() || ca.len() != cb.len() {
        return true;
    }
    ca.iter().zip(cb).all(|(x, y)| may_equal(x, y))
}

fn bases_may_alias(a: &Base, b: &Base) -> bool {
    match (a, b) {
        (Base::Constant, Base::Constant) => true,
        (Base::Sha3(x), Base::Sha3(y)) => sha3_may_alias(x, y),
        _ => false,
    }
}

/// Overlap of two resolved addresses; Unresolvable intersects everything.
pub fn ranges_intersect(a: &Resolved, b: &Resolved) -> bool {
    ranges_intersect_sized(a, None, b, None, true)
}

/// Overlap of `[a, a + size_a)` and `[b, b + size_b)`. A size of `None`
/// means one unit (a storage slot), otherwise a byte count; unknown sizes
/// intersect conservatively.
pub fn ranges_intersect_sized(
    a: &Resolved,
    size_a: Option<Option<Word>>,
    b: &Resolved,
    size_b: Option<Option<Word>>,
    unresolvable_intersects: bool,
) -> bool {
    let (Resolved::Range(ra), Resolved::Range(rb)) = (a, b) else {
        return unresolvable_intersects;
    };
    if !bases_may_alias(&ra.base, &rb.base) {
        return false;
    }
    let len = |s: Option<Option<Word>>| -> Option<Word> {
        match s {
            None => Some(Word::from(1u8)),
            Some(v) => v,
        }
    };
    let (Some(la), Some(lb)) = (len(size_a), len(size_b)) else {
        return true;
    };
    if la.is_zero() || lb.is_zero() {
        return false;
    }
    let end_a = ra.hi.saturating_add(la);
    let end_b = rb.hi.saturating_add(lb);
    ra.lo < end_b && rb.lo < end_a
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TransformCount {
    pub success: usize,
    pub failure: usize,
}

/// Address transformation outcomes per opcode class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AddressStats {
    pub by_opcode: BTreeMap<String, TransformCount>,
}

impl AddressStats {
    pub fn record(&mut self, op: Mnemonic, resolved: bool) {
        let e = self.by_opcode.entry(op.name()).or_default();
        if resolved {
            e.success += 1;
        } else {
            e.failure += 1;
        }
    }

    pub fn get(&self, op: Mnemonic) -> TransformCount {
        self.by_opcode.get(&op.name()).copied().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: u64) -> SymbolicValue {
        SymbolicValue::concrete(Word::from(v))
    }

    fn sha(words: Vec<SymbolicValue>) -> SymbolicValue {
        let mut summary = vec![c(0), c(32 * words.len() as u64)];
        summary.extend(words);
        SymbolicValue::node(Mnemonic::Sha3, vec![SymbolicValue::node(Mnemonic::MLoad, summary)])
    }

    #[test]
    fn transforms() {
        assert_eq!(
            address_range(&c(0x40)),
            Resolved::Range(AddressRange {
                base: Base::Constant,
                lo: Word::from(0x40u8),
                hi: Word::from(0x40u8)
            })
        );
        let h = sha(vec![SymbolicValue::node(Mnemonic::Caller, vec![]), c(0)]);
        let r = address_range(&SymbolicValue::node(Mnemonic::Add, vec![h.clone(), c(1)]));
        assert_eq!(
            r,
            Resolved::Range(AddressRange {
                base: Base::Sha3(h),
                lo: Word::from(1u8),
                hi: Word::from(1u8)
            })
        );
        let x = SymbolicValue::node(Mnemonic::Caller, vec![]);
        let m = SymbolicValue::node(Mnemonic::Mul, vec![x.clone(), x]);
        assert_eq!(address_range(&m), Resolved::Unresolvable);
    }

    #[test]
    fn intersections() {
        assert!(!ranges_intersect(&address_range(&c(0)), &address_range(&c(0x20))));
        let h = sha(vec![SymbolicValue::node(Mnemonic::Caller, vec![]), c(0)]);
        assert!(ranges_intersect(&address_range(&h), &address_range(&h)));
        assert!(ranges_intersect(&address_range(&c(5)), &Resolved::Unresolvable));
        assert!(!ranges_intersect_sized(
            &address_range(&c(5)),
            None,
            &Resolved::Unresolvable,
            None,
            false
        ));
    }

    #[test]
    fn hashed_slots_alias_by_content() {
        let caller = SymbolicValue::node(Mnemonic::Caller, vec![]);
        let arg = SymbolicValue::node(Mnemonic::CallDataLoad, vec![c(4)]);
        let bal_a = sha(vec![caller.clone(), c(0)]);
        let bal_b = sha(vec![arg.clone(), c(0)]);
        let nonce = sha(vec![caller, c(1)]);
        assert!(ranges_intersect(&address_range(&bal_a), &address_range(&bal_b)));
        assert!(!ranges_intersect(&address_range(&bal_a), &address_range(&nonce)));
        assert!(!ranges_intersect(&address_range(&bal_a), &address_range(&c(0))));
    }

    #[test]
    fn memory_sizes() {
        let a = address_range(&c(0));
        let b = address_range(&c(0x20));
        let w = Some(Some(Word::from(32u8)));
        assert!(!ranges_intersect_sized(&a, w, &b, w, true));
        assert!(ranges_intersect_sized(&a, Some(Some(Word::from(0x40u8))), &b, w, true));
        assert!(ranges_intersect_sized(&a, Some(None), &b, w, true));
        assert!(!ranges_intersect_sized(&a, Some(Some(Word::ZERO)), &a, w, true));
    }
}
