//! 256-bit machine words and the pure arithmetic shared by the concrete
//! interpreter and the symbolic constant folder.

use ruint::aliases::U256;
use sha2::{Digest, Sha256};

pub type Word = U256;

/// Parses `0x`-prefixed hex or plain decimal.
pub fn parse_word(text: &str) -> Option<Word> {
    let text = text.trim();
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        Word::from_str_radix(hex, 16).ok()
    } else {
        Word::from_str_radix(text, 10).ok()
    }
}

/// Lower-case hex with a `0x` prefix and at least two digits (`0x06`, `0x40`).
pub fn format_word(w: &Word) -> String {
    let hex = format!("{w:x}");
    if hex.len() < 2 {
        format!("0x0{hex}")
    } else {
        format!("0x{hex}")
    }
}

pub fn from_bool(b: bool) -> Word {
    if b {
        Word::from(1u8)
    } else {
        Word::ZERO
    }
}

/// Saturating conversion used for memory offsets and sizes.
pub fn to_usize(w: &Word) -> usize {
    w.saturating_to::<usize>()
}

pub fn is_negative(w: &Word) -> bool {
    w.bit(255)
}

fn abs(w: Word) -> Word {
    if is_negative(&w) {
        w.wrapping_neg()
    } else {
        w
    }
}

pub fn slt(a: Word, b: Word) -> bool {
    match (is_negative(&a), is_negative(&b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

pub fn sdiv(a: Word, b: Word) -> Word {
    if b.is_zero() {
        return Word::ZERO;
    }
    let q = abs(a) / abs(b);
    if is_negative(&a) != is_negative(&b) {
        q.wrapping_neg()
    } else {
        q
    }
}

pub fn smod(a: Word, b: Word) -> Word {
    if b.is_zero() {
        return Word::ZERO;
    }
    let r = abs(a) % abs(b);
    if is_negative(&a) {
        r.wrapping_neg()
    } else {
        r
    }
}

pub fn signextend(byte_index: Word, value: Word) -> Word {
    if byte_index >= Word::from(31u8) {
        return value;
    }
    let bit = to_usize(&byte_index) * 8 + 7;
    let mask = (Word::from(1u8) << bit) - Word::from(1u8);
    if value.bit(bit) {
        value | !mask
    } else {
        value & mask
    }
}

/// EVM `BYTE`: index 0 is the most significant byte.
pub fn byte_at(index: Word, value: Word) -> Word {
    if index >= Word::from(32u8) {
        return Word::ZERO;
    }
    let bytes = value.to_be_bytes::<32>();
    Word::from(bytes[to_usize(&index)])
}

pub fn shl(shift: Word, value: Word) -> Word {
    if shift >= Word::from(256u16) {
        Word::ZERO
    } else {
        value << to_usize(&shift)
    }
}

pub fn shr(shift: Word, value: Word) -> Word {
    if shift >= Word::from(256u16) {
        Word::ZERO
    } else {
        value >> to_usize(&shift)
    }
}

pub fn sar(shift: Word, value: Word) -> Word {
    if shift >= Word::from(256u16) {
        if is_negative(&value) {
            Word::MAX
        } else {
            Word::ZERO
        }
    } else {
        value.arithmetic_shr(to_usize(&shift))
    }
}

/// Fixed 256-bit hash over a sequence of words (big-endian encoding).
/// Any fixed hash works for the analysis; only equality of digests matters.
pub fn hash_words(words: &[Word]) -> Word {
    let mut hasher = Sha256::new();
    for w in words {
        hasher.update(w.to_be_bytes::<32>());
    }
    let digest = hasher.finalize();
    Word::from_be_slice(&digest)
}

/// Storage slot of `mapping[key]` for a mapping declared at `slot`, using the
/// same hash as the `SHA3` opcode over the memory words `[key, slot]`.
pub fn mapping_slot(key: Word, slot: Word) -> Word {
    hash_words(&[key, slot])
}

/// Serde helpers for words written as hex strings.
pub mod serde_hex {
    use super::{format_word, parse_word, Word};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &Word, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_word(w))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Word, D::Error> {
        let s = String::deserialize(d)?;
        parse_word(&s).ok_or_else(|| serde::de::Error::custom(format!("bad word {s}")))
    }
}

/// Serde helpers for byte strings written as `0x`-prefixed hex.
pub mod serde_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(bytes: &[u8]) -> String {
        let mut out = String::from("0x");
        for b in bytes {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn decode(text: &str) -> Option<Vec<u8>> {
        let hex = text.trim().strip_prefix("0x").unwrap_or(text.trim());
        if !hex.len().is_multiple_of(2) {
            return None;
        }
        (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
            .collect()
    }

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        decode(&s).ok_or_else(|| serde::de::Error::custom(format!("bad hex {s}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: u64) -> Word {
        Word::from(v)
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_word("0x06"), Some(w(6)));
        assert_eq!(parse_word("42"), Some(w(42)));
        assert_eq!(parse_word("0x"), None);
        assert_eq!(parse_word("zz"), None);
        assert_eq!(format_word(&w(6)), "0x06");
        assert_eq!(format_word(&w(0x40)), "0x40");
        assert_eq!(format_word(&w(0x140)), "0x140");
    }

    #[test]
    fn signed_ops() {
        let minus_one = Word::MAX;
        let minus_two = Word::MAX - w(1);
        assert!(slt(minus_one, w(0)));
        assert!(!slt(w(0), minus_one));
        assert_eq!(sdiv(minus_two, w(2)), minus_one);
        assert_eq!(smod(minus_two.wrapping_sub(w(1)), w(2)), minus_one);
        assert_eq!(sar(w(1), minus_two), minus_one);
        assert_eq!(sar(w(300), minus_two), Word::MAX);
        assert_eq!(signextend(w(0), w(0xff)), Word::MAX);
        assert_eq!(signextend(w(0), w(0x7f)), w(0x7f));
    }

    #[test]
    fn byte_and_shifts() {
        assert_eq!(byte_at(w(31), w(0xab)), w(0xab));
        assert_eq!(byte_at(w(30), w(0xab)), w(0));
        assert_eq!(byte_at(w(32), w(0xab)), w(0));
        assert_eq!(shl(w(4), w(1)), w(16));
        assert_eq!(shr(w(4), w(16)), w(1));
        assert_eq!(shr(w(256), Word::MAX), w(0));
    }

    #[test]
    fn hashing_is_deterministic() {
        assert_eq!(hash_words(&[w(1), w(2)]), hash_words(&[w(1), w(2)]));
        assert_ne!(hash_words(&[w(1), w(2)]), hash_words(&[w(2), w(1)]));
        assert_eq!(mapping_slot(w(7), w(0)), hash_words(&[w(7), w(0)]));
    }
}
