//! Source-level repair: reports become a plan of text edits, the plan is
//! applied back to front, and the compiled result is re-analyzed.

mod expr;
pub mod safemath;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bundle::ContractBundle;
use crate::detect::{Detection, Span, VulnerabilityKind, VulnerabilityReport};
use crate::error::{Error, Result};
use crate::evm::program::{Program, FALLBACK};
use crate::pipeline::{analyze_bundle, AnalysisConfig};

pub use expr::{split_binary, split_compound, split_unary};
pub use safemath::{eval as safe_eval, template, SafeMathTemplate, SafeOp, NON_REENTRANT};

pub const MODIFIER: &str = "nonReentrant";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditKind {
    InsertModifier,
    ReplaceCall,
    ReplaceIdentifier,
    InjectHelper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    pub span: Span,
    pub replacement: String,
    pub reason: String,
}

impl Edit {
    fn end(&self) -> usize {
        self.span.start + self.span.length
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub edits: Vec<Edit>,
}

impl PatchPlan {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn count(&self, kind: EditKind) -> usize {
        self.edits.iter().filter(|e| e.kind == kind).count()
    }

    /// Checks the plan invariants: edits are in bounds and pairwise
    /// non-overlapping, one modifier insertion per function position and one
    /// injection per helper.
    pub fn validate(&self, source_len: usize) -> Result<()> {
        for e in &self.edits {
            if e.end() > source_len {
                return Err(Error::SpanOutOfBounds {
                    start: e.span.start,
                    length: e.span.length,
                    source_len,
                });
            }
        }
        for (i, a) in self.edits.iter().enumerate() {
            for b in &self.edits[i + 1..] {
                if overlaps(a, b) {
                    return Err(Error::SpanConflict(a.span.start, a.end(), b.span.start, b.end()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edits {
            let key = match e.kind {
                EditKind::InsertModifier => (e.kind, e.span.start.to_string()),
                EditKind::InjectHelper => (e.kind, e.replacement.clone()),
                _ => continue,
            };
            if !seen.insert(key) {
                return Err(Error::SpanConflict(e.span.start, e.end(), e.span.start, e.end()));
            }
        }
        Ok(())
    }
}

/// Two replacements overlap when their ranges intersect; an insertion
/// conflicts only when it falls strictly inside a replaced range.
fn overlaps(a: &Edit, b: &Edit) -> bool {
    match (a.span.length, b.span.length) {
        (0, 0) => false,
        (0, _) => a.span.start > b.span.start && a.span.start < b.end(),
        (_, 0) => b.span.start > a.span.start && b.span.start < a.end(),
        _ => a.span.start < b.end() && b.span.start < a.end(),
    }
}

/// Span of the parameter list's closing parenthesis of `function name(`.
fn parameter_list_end(source: &str, name: &str) -> Option<usize> {
    let needle = format!("function {name}(");
    let start = source.find(&needle)? + needle.len();
    let mut depth = 1usize;
    for (i, ch) in source[start..].char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Whether the header of `function name` already lists the modifier.
fn has_modifier(source: &str, header_end: usize) -> bool {
    let rest = &source[header_end..];
    let body = rest.find('{').unwrap_or(rest.len());
    rest[..body]
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .any(|w| w == MODIFIER)
}

/// Offset of the contract's closing brace: the last `}` of the source.
fn contract_end(source: &str) -> Option<usize> {
    source.rfind('}')
}

/// An arithmetic or identifier rewrite before nesting is resolved.
#[derive(Debug, Clone)]
struct Site {
    start: usize,
    end: usize,
    rewrite: Rewrite,
    reason: String,
}

#[derive(Debug, Clone)]
enum Rewrite {
    /// `f(left, right)` over two source ranges.
    Call {
        op: SafeOp,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// `target = f(target, value)` for compound assignments and increments;
    /// `value` of `None` is the literal 1.
    Assign {
        op: SafeOp,
        target: (usize, usize),
        value: Option<(usize, usize)>,
    },
    Text(&'static str),
}

/// Builds the edit plan for a detection result over `bundle`.
pub fn plan_fixes(detection: &Detection, bundle: &ContractBundle) -> Result<PatchPlan> {
    plan_reports(&detection.reports, bundle)
}

pub fn plan_reports(reports: &[VulnerabilityReport], bundle: &ContractBundle) -> Result<PatchPlan> {
    let program = bundle.program()?;
    let source = bundle.source.as_str();
    let mut guard_functions: BTreeMap<String, String> = BTreeMap::new();
    let mut sites: BTreeMap<(usize, usize), Site> = BTreeMap::new();
    let mut helpers: BTreeSet<SafeOp> = BTreeSet::new();

    for r in reports {
        match r.kind {
            VulnerabilityKind::IntraReentrancy => {
                let f = program.function_of(r.critical_pc).to_string();
                guard_functions.entry(f).or_insert_with(|| reason(r));
            }
            VulnerabilityKind::CrossReentrancy => {
                for c in &r.culprits {
                    let f = program.function_of(*c).to_string();
                    guard_functions.entry(f).or_insert_with(|| reason(r));
                }
                let f = program.function_of(r.critical_pc).to_string();
                guard_functions.entry(f).or_insert_with(|| reason(r));
            }
            VulnerabilityKind::TxOrigin => {
                for c in &r.culprits {
                    let e = bundle.source_entry(*c).ok_or(Error::UnmappedReport(*c))?;
                    if bundle.span_text(e) != Some("tx.origin") {
                        return Err(Error::UnmappedReport(*c));
                    }
                    sites.entry((e.start, e.start + e.length)).or_insert(Site {
                        start: e.start,
                        end: e.start + e.length,
                        rewrite: Rewrite::Text("msg.sender"),
                        reason: reason(r),
                    });
                }
            }
            VulnerabilityKind::Arithmetic => {
                for c in r.culprits.iter().chain(&r.related) {
                    let site = arithmetic_site(&program, bundle, *c, r)?;
                    collect_ops(&site.rewrite, &mut helpers);
                    sites.entry((site.start, site.end)).or_insert(site);
                }
            }
        }
    }

    let mut edits = Vec::new();
    for (f, why) in &guard_functions {
        if f == FALLBACK {
            continue;
        }
        let end = parameter_list_end(source, f).ok_or_else(|| Error::Bundle(format!("no declaration of {f}")))?;
        if has_modifier(source, end) {
            continue;
        }
        edits.push(Edit {
            kind: EditKind::InsertModifier,
            span: Span { start: end, length: 0 },
            replacement: format!(" {MODIFIER}"),
            reason: why.clone(),
        });
    }

    let sites: Vec<Site> = sites.into_values().collect();
    for (i, s) in sites.iter().enumerate() {
        let inside_other = sites
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && o.start <= s.start && s.end <= o.end && (o.end - o.start) > (s.end - s.start));
        if inside_other {
            continue;
        }
        for o in &sites {
            let partial = o.start < s.end && s.start < o.end && !(o.start >= s.start && o.end <= s.end);
            let contains = o.start <= s.start && s.end <= o.end;
            if partial && !contains {
                return Err(Error::SpanConflict(s.start, s.end, o.start, o.end));
            }
        }
        let kind = match s.rewrite {
            Rewrite::Text(_) => EditKind::ReplaceIdentifier,
            _ => EditKind::ReplaceCall,
        };
        let mut why = vec![s.reason.clone()];
        for o in &sites {
            if o.start >= s.start
                && o.end <= s.end
                && !(o.start == s.start && o.end == s.end)
                && !why.contains(&o.reason)
            {
                why.push(o.reason.clone());
            }
        }
        edits.push(Edit {
            kind,
            span: Span {
                start: s.start,
                length: s.end - s.start,
            },
            replacement: render_site(source, s, &sites),
            reason: why.join("; "),
        });
    }

    let needs_modifier = edits.iter().any(|e| e.kind == EditKind::InsertModifier);
    let mut injections = Vec::new();
    if needs_modifier && !source.contains(&format!("modifier {MODIFIER}")) {
        injections.push(NON_REENTRANT.to_string());
    }
    let mut all_helpers = helpers.clone();
    for op in &helpers {
        all_helpers.extend(safemath::requires(*op).iter().copied());
    }
    for op in SafeOp::ALL {
        if all_helpers.contains(&op) && !source.contains(&format!("function {}(", op.function_name())) {
            injections.push(template(op).body.to_string());
        }
    }
    if !injections.is_empty() {
        let at = contract_end(source).ok_or_else(|| Error::Bundle("source has no closing brace".into()))?;
        for text in injections {
            edits.push(Edit {
                kind: EditKind::InjectHelper,
                span: Span { start: at, length: 0 },
                replacement: format!("\n{text}"),
                reason: "helper".into(),
            });
        }
    }

    let plan = PatchPlan { edits };
    plan.validate(source.len())?;
    Ok(plan)
}

fn reason(r: &VulnerabilityReport) -> String {
    format!("{:?} at pc {} in {}", r.kind, r.critical_pc, r.function)
}

fn collect_ops(rw: &Rewrite, out: &mut BTreeSet<SafeOp>) {
    match rw {
        Rewrite::Call { op, .. } | Rewrite::Assign { op, .. } => {
            out.insert(*op);
        }
        Rewrite::Text(_) => {}
    }
}

fn arithmetic_site(program: &Program, bundle: &ContractBundle, pc: usize, r: &VulnerabilityReport) -> Result<Site> {
    let e = bundle.source_entry(pc).ok_or(Error::UnmappedReport(pc))?;
    let op = program
        .get(pc)
        .and_then(|o| SafeOp::from_mnemonic(o.mnemonic))
        .ok_or(Error::UnmappedReport(pc))?;
    let text = bundle.span_text(e).ok_or(Error::UnmappedReport(pc))?;
    let (start, end) = (e.start, e.start + e.length);
    let rewrite = match e.node.as_str() {
        "BinaryOperation" => {
            let (l, r) = split_binary(text, op.symbol()).ok_or(Error::UnmappedReport(pc))?;
            Rewrite::Call {
                op,
                left: (start + l.0, start + l.1),
                right: (start + r.0, start + r.1),
            }
        }
        "Assignment" => {
            let (t, v) = split_compound(text, op.symbol()).ok_or(Error::UnmappedReport(pc))?;
            Rewrite::Assign {
                op,
                target: (start + t.0, start + t.1),
                value: Some((start + v.0, start + v.1)),
            }
        }
        "UnaryOperation" => {
            let t = split_unary(text).ok_or(Error::UnmappedReport(pc))?;
            Rewrite::Assign {
                op,
                target: (start + t.0, start + t.1),
                value: None,
            }
        }
        _ => return Err(Error::UnmappedReport(pc)),
    };
    Ok(Site {
        start,
        end,
        rewrite,
        reason: reason(r),
    })
}

/// Source text of `[start, end)` with every maximal site inside it rewritten.
fn render_range(source: &str, start: usize, end: usize, sites: &[Site]) -> String {
    let mut inner: Vec<&Site> = sites.iter().filter(|s| s.start >= start && s.end <= end).collect();
    inner.sort_by_key(|s| (s.start, std::cmp::Reverse(s.end)));
    let mut out = String::new();
    let mut at = start;
    for s in inner {
        if s.start < at {
            continue;
        }
        out.push_str(&source[at..s.start]);
        out.push_str(&render_site(source, s, sites));
        at = s.end;
    }
    out.push_str(&source[at..end]);
    out
}

fn render_site(source: &str, s: &Site, sites: &[Site]) -> String {
    let part = |r: (usize, usize)| render_range(source, r.0, r.1, sites);
    match &s.rewrite {
        Rewrite::Text(t) => (*t).to_string(),
        Rewrite::Call { op, left, right } => format!("{}({}, {})", op.function_name(), part(*left), part(*right)),
        Rewrite::Assign { op, target, value } => {
            let t = part(*target);
            let v = value.map(part).unwrap_or_else(|| "1".to_string());
            format!("{t} = {}({t}, {v})", op.function_name())
        }
    }
}

/// Applies the plan from the last edit to the first so earlier offsets stay
/// valid, then runs the lexical sanity check.
pub fn apply_patches(source: &str, plan: &PatchPlan) -> Result<String> {
    plan.validate(source.len())?;
    let mut order: Vec<(usize, &Edit)> = plan.edits.iter().enumerate().collect();
    // Descending start; insertions at one offset keep plan order.
    order.sort_by(|(i, a), (j, b)| b.span.start.cmp(&a.span.start).then(j.cmp(i)));
    let mut out = source.to_string();
    for (_, e) in order {
        out.replace_range(e.span.start..e.end(), &e.replacement);
    }
    sanity_check(&out)?;
    Ok(out)
}

/// Ranges of the patched text produced by each edit, in output offsets.
pub fn edited_regions(plan: &PatchPlan) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, &Edit)> = plan.edits.iter().enumerate().collect();
    order.sort_by_key(|(i, e)| (e.span.start, *i));
    let mut shift: isize = 0;
    let mut out = Vec::new();
    for (_, e) in order {
        let start = (e.span.start as isize + shift) as usize;
        out.push((start, start + e.replacement.len()));
        shift += e.replacement.len() as isize - e.span.length as isize;
    }
    out
}

/// Balanced delimiters and a definition for every referenced helper.
pub fn sanity_check(source: &str) -> Result<()> {
    let mut stack = Vec::new();
    let mut in_string = false;
    for (i, ch) in source.char_indices() {
        if ch == '"' {
            in_string = !in_string;
            continue;
        }
        if in_string {
            continue;
        }
        match ch {
            '(' | '[' | '{' => stack.push(ch),
            ')' | ']' | '}' => {
                let want = match ch {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if stack.pop() != Some(want) {
                    return Err(Error::SanityCheckFailed(format!("unbalanced {ch} at {i}")));
                }
            }
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(Error::SanityCheckFailed(format!("unclosed {open}")));
    }
    for op in SafeOp::ALL {
        let name = op.function_name();
        let uses = source.matches(&format!("{name}(")).count();
        let defined = source.contains(&format!("function {name}("));
        if uses > 0 && !defined {
            return Err(Error::SanityCheckFailed(format!("{name} used but not defined")));
        }
    }
    if has_modifier_use(source) && !source.contains(&format!("modifier {MODIFIER}")) {
        return Err(Error::SanityCheckFailed(format!("{MODIFIER} used but not defined")));
    }
    Ok(())
}

fn has_modifier_use(source: &str) -> bool {
    source.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with("function ")
            && l.split(|c: char| !c.is_alphanumeric() && c != '_')
                .any(|w| w == MODIFIER)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum VerificationResult {
    Clean,
    NotClean(Detection),
}

impl VerificationResult {
    pub fn is_clean(&self) -> bool {
        matches!(self, VerificationResult::Clean)
    }
}

/// Re-runs the full analysis on a fixed bundle.
pub fn verify_fixed(bundle: &ContractBundle, config: &AnalysisConfig) -> Result<VerificationResult> {
    let a = analyze_bundle(bundle, config)?;
    if a.detection.is_vulnerable() {
        Ok(VerificationResult::NotClean(a.detection))
    } else {
        Ok(VerificationResult::Clean)
    }
}
