//! Splitting of source spans around the operator a pc maps to.

type Range = (usize, usize);

/// Offsets of `sym` at parenthesis depth 0 that are the whole operator, not
/// part of `++`, `**`, `+=` and the like.
fn top_level(text: &str, sym: &str) -> Vec<usize> {
    let b = text.as_bytes();
    let mut depth = 0i32;
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            _ => {}
        }
        if depth == 0 && text[i..].starts_with(sym) {
            let end = i + sym.len();
            let before = if i > 0 { b[i - 1] } else { b' ' };
            let after = b.get(end).copied().unwrap_or(b' ');
            let first = sym.as_bytes()[0];
            let glued =
                before == first || after == first || after == b'=' || (sym == "*" && (before == b'*' || after == b'*'));
            if !glued {
                out.push(i);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn trimmed(text: &str, start: usize, end: usize) -> Option<Range> {
    let s = &text[start..end];
    let lead = s.len() - s.trim_start().len();
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    Some((start + lead, start + lead + t.len()))
}

/// `L sym R` into the ranges of `L` and `R`. The split is at the last
/// top-level occurrence, or the first for the right-associative `**`.
pub fn split_binary(text: &str, sym: &str) -> Option<(Range, Range)> {
    let at = top_level(text, sym);
    let i = if sym == "**" { *at.first()? } else { *at.last()? };
    Some((trimmed(text, 0, i)?, trimmed(text, i + sym.len(), text.len())?))
}

/// `T sym= V` into the ranges of `T` and `V`.
pub fn split_compound(text: &str, sym: &str) -> Option<(Range, Range)> {
    let needle = format!("{sym}=");
    let b = text.as_bytes();
    let mut depth = 0i32;
    for i in 0..b.len() {
        match b[i] {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            _ => {}
        }
        if depth == 0 && text[i..].starts_with(&needle) {
            return Some((trimmed(text, 0, i)?, trimmed(text, i + needle.len(), text.len())?));
        }
    }
    None
}

/// `x++`, `++x`, `x--` or `--x` into the range of `x`.
pub fn split_unary(text: &str) -> Option<Range> {
    let t = text.trim();
    let lead = text.len() - text.trim_start().len();
    for op in ["++", "--"] {
        if let Some(rest) = t.strip_prefix(op) {
            return trimmed(text, lead + op.len(), lead + op.len() + rest.len());
        }
        if let Some(rest) = t.strip_suffix(op) {
            return trimmed(text, lead, lead + rest.len());
        }
    }
    None
}
