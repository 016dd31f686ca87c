//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use evmrepair::cfg::{post_dominators, static_control_deps, Cfg};
use evmrepair::dependency::{oracle_data_deps, oracle_data_deps_many, stack_operands, OracleOptions};
use evmrepair::detect::VulnerabilityKind;
use evmrepair::evm::concrete::{
    run_concrete, step_concrete, CallResult, ConcreteState, ExecutionEnv, Host, StepOutcome, Storage,
};
use evmrepair::evm::gas::GasTable;
use evmrepair::evm::opcode::{Mnemonic, Opcode, RuleGroup};
use evmrepair::evm::program::{decode_program, Program};
use evmrepair::patch::{safe_eval, verify_fixed, SafeOp, VerificationResult};
use evmrepair::pipeline::{analyze_bundle, analyze_program, AnalysisConfig};
use evmrepair::replay::replay;
use evmrepair::symbolic::state::{step_symbolic, SymbolicState};
use evmrepair::{Error, Word};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn w(v: u64) -> Word {
    Word::from(v)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {t:?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- 1

/// Rule table transcribed by hand: rule name and its opcodes.
const RULES: &[(&str, &[&str])] = &[
    ("STOP", &["SELFDESTRUCT", "REVERT", "INVALID", "RETURN", "STOP"]),
    ("POP", &["POP"]),
    (
        "UNARY",
        &[
            "NOT",
            "ISZERO",
            "CALLDATALOAD",
            "EXTCODESIZE",
            "BLOCKHASH",
            "BALANCE",
            "EXTCODEHASH",
        ],
    ),
    (
        "BINARY",
        &[
            "ADD",
            "MUL",
            "SUB",
            "DIV",
            "SDIV",
            "MOD",
            "SMOD",
            "EXP",
            "SIGNEXTEND",
            "LT",
            "GT",
            "SLT",
            "SGT",
            "EQ",
            "AND",
            "OR",
            "XOR",
            "BYTE",
            "SHL",
            "SHR",
            "SAR",
        ],
    ),
    (
        "TERNARY",
        &["ADDMOD", "MULMOD", "CALLDATACOPY", "CODECOPY", "RETURNDATACOPY"],
    ),
    ("MLOAD", &["MLOAD"]),
    ("SHA3", &["SHA3"]),
    ("MSTORE", &["MSTORE", "MSTORE8"]),
    ("SLOAD", &["SLOAD"]),
    ("SSTORE", &["SSTORE"]),
    ("JUMPI", &["JUMPI"]),
    ("JUMP", &["JUMP"]),
    (
        "CALL",
        &["STATICCALL", "CALL", "CALLCODE", "CREATE", "CREATE2", "DELEGATECALL"],
    ),
];

fn rule_of(name: &str) -> Option<&'static str> {
    if name.starts_with("DUP") {
        return Some("DUP");
    }
    if name.starts_with("SWAP") {
        return Some("SWAP");
    }
    RULES.iter().find(|(_, ops)| ops.contains(&name)).map(|(r, _)| *r)
}

struct TestHost;

impl Host for TestHost {
    fn calldata(&self) -> &[u8] {
        &[0xff; 64]
    }
    fn environment(&self, _: Mnemonic, _: Option<Word>) -> Word {
        w(0xe0)
    }
    fn call(&mut self, _: usize, _: Mnemonic, _: &[Word], _: &mut Storage) -> evmrepair::Result<CallResult> {
        Ok(CallResult::status(w(1)))
    }
}

const TARGET: u64 = 42;

fn start_state(cond: u64) -> ConcreteState {
    // Top first: jump target / address, condition / value, then filler.
    let mut top: Vec<Word> = vec![w(TARGET), w(cond)];
    top.extend((0..18).map(|i| w(100 + i)));
    let mut s = ConcreteState::with_stack(&top);
    s.pc = 5;
    s.memory.insert(w(32), w(0xabc));
    s.storage.insert(w(TARGET), w(0xdef));
    s
}

/// Checks one opcode's step against the behavior its rule prescribes.
fn check_rule(op: Mnemonic, rule: &str) -> Result<(), String> {
    let name = op.name();
    let exec = |cond: u64| -> Result<(ConcreteState, StepOutcome), String> {
        let s = start_state(cond);
        step_concrete(&s, &Opcode::new(op), 100, &mut TestHost)
            .map(|(o, _)| (s, o))
            .map_err(|e| format!("{name}: {e}"))
    };
    let (before, out) = exec(1)?;
    let b = before.stack_top_first();
    let next = match (&out, rule) {
        (StepOutcome::Halt(_), "STOP") => return Ok(()),
        (StepOutcome::Halt(_), _) => return Err(format!("{name} halted under {rule}")),
        (StepOutcome::Next(_), "STOP") => return Err(format!("{name} did not halt")),
        (StepOutcome::Next(s), _) => s.clone(),
    };
    let a = next.stack_top_first();
    let popped_pushed = |pops: usize, pushes: usize| -> Result<(), String> {
        ensure(a.len() + pops == b.len() + pushes && a[pushes..] == b[pops..], || {
            format!("{name}: expected pop {pops} push {pushes}")
        })
    };
    let same_mem = next.memory == before.memory && next.storage == before.storage;
    let falls_through = next.pc == before.pc + 1;
    match rule {
        "POP" => popped_pushed(1, 0).and(ensure(same_mem && falls_through, || name.to_string())),
        "UNARY" => {
            popped_pushed(1, 1)?;
            let expect = match op {
                Mnemonic::Not => Some(!w(TARGET)),
                Mnemonic::IsZero => Some(Word::ZERO),
                // 22 bytes of 0xff remain past offset 42, then zero padding.
                Mnemonic::CallDataLoad => Some(Word::MAX << 80),
                _ => None,
            };
            ensure(expect.is_none_or(|e| a[0] == e) && same_mem && falls_through, || {
                format!("{name} value")
            })
        }
        "BINARY" => {
            popped_pushed(2, 1)?;
            let expect = match op {
                Mnemonic::Add => Some(w(TARGET + 1)),
                Mnemonic::Sub => Some(w(TARGET - 1)),
                Mnemonic::Mul => Some(w(TARGET)),
                Mnemonic::Lt => Some(w(0)),
                Mnemonic::Gt => Some(w(1)),
                Mnemonic::Eq => Some(w(0)),
                Mnemonic::Xor => Some(w(TARGET ^ 1)),
                _ => None,
            };
            ensure(expect.is_none_or(|e| a[0] == e) && same_mem && falls_through, || {
                format!("{name} value")
            })
        }
        "TERNARY" => {
            // The rule pops three and pushes op(x, y, m) for every member;
            // copies have no memory effect in this model and yield 0.
            popped_pushed(3, 1)?;
            let expect = match op {
                Mnemonic::AddMod => w((TARGET + 1) % 100),
                Mnemonic::MulMod => w(TARGET % 100),
                _ => Word::ZERO,
            };
            ensure(a[0] == expect && same_mem && falls_through, || {
                format!("{name} value {}", a[0])
            })
        }
        "MLOAD" => {
            popped_pushed(1, 1)?;
            ensure(a[0] == w(0xabc), || format!("{name} read {}", a[0]))
        }
        "SHA3" => popped_pushed(2, 1).and(ensure(same_mem, || name.to_string())),
        "MSTORE" => {
            popped_pushed(2, 0)?;
            ensure(next.memory != before.memory && next.storage == before.storage, || {
                format!("{name} did not write memory")
            })
        }
        "SLOAD" => {
            popped_pushed(1, 1)?;
            ensure(a[0] == w(0xdef), || format!("{name} read {}", a[0]))
        }
        "SSTORE" => {
            popped_pushed(2, 0)?;
            ensure(next.storage.get(&w(TARGET)) == Some(&w(1)), || {
                format!("{name} did not write")
            })
        }
        "DUP" => {
            let i = match op {
                Mnemonic::Dup(i) => i as usize,
                _ => unreachable!(),
            };
            ensure(a.len() == b.len() + 1 && a[0] == b[i - 1] && a[1..] == b[..], || {
                name.to_string()
            })
        }
        "SWAP" => {
            let i = match op {
                Mnemonic::Swap(i) => i as usize,
                _ => unreachable!(),
            };
            let mut expect = b.clone();
            expect.swap(0, i);
            ensure(a == expect, || name.to_string())
        }
        "JUMPI" => {
            popped_pushed(2, 0)?;
            ensure(next.pc == TARGET as usize, || format!("{name}-T went to {}", next.pc))?;
            let (before_f, out_f) = exec(0)?;
            match out_f {
                StepOutcome::Next(s) => ensure(s.pc == before_f.pc + 1, || format!("{name}-F went to {}", s.pc)),
                _ => Err(format!("{name}-F halted")),
            }
        }
        "JUMP" => {
            popped_pushed(1, 0)?;
            ensure(next.pc == TARGET as usize, || format!("{name} went to {}", next.pc))
        }
        "CALL" => {
            let pops = b.len() + 1 - a.len();
            ensure(
                pops >= 3 && a[0] == w(1) && a[1..] == b[pops..] && falls_through,
                || format!("{name} call shape"),
            )
        }
        _ => Err(format!("{name}: unknown rule {rule}")),
    }
}

fn group_name(g: RuleGroup) -> &'static str {
    match g {
        RuleGroup::Halt => "STOP",
        RuleGroup::Pop => "POP",
        RuleGroup::Unary => "UNARY",
        RuleGroup::Binary => "BINARY",
        RuleGroup::Ternary => "TERNARY",
        RuleGroup::MLoad => "MLOAD",
        RuleGroup::Sha3 => "SHA3",
        RuleGroup::MStore => "MSTORE",
        RuleGroup::SLoad => "SLOAD",
        RuleGroup::SStore => "SSTORE",
        RuleGroup::Dup => "DUP",
        RuleGroup::Swap => "SWAP",
        RuleGroup::JumpI => "JUMPI",
        RuleGroup::Jump => "JUMP",
        RuleGroup::Call => "CALL",
        _ => "EXTENSION",
    }
}

fn semantics_partition() -> Outcome {
    let start = Instant::now();
    let table = Mnemonic::semantic_table();
    let listed: BTreeSet<String> = RULES
        .iter()
        .flat_map(|(_, ops)| ops.iter().map(|s| s.to_string()))
        .chain((1..=16).map(|i| format!("DUP{i}")))
        .chain((1..=16).map(|i| format!("SWAP{i}")))
        .collect();
    let names: BTreeSet<String> = table.iter().map(|m| m.name()).collect();
    ensure(names == listed, || {
        format!(
            "table mismatch: missing {:?}, extra {:?}",
            listed.difference(&names).collect::<Vec<_>>(),
            names.difference(&listed).collect::<Vec<_>>()
        )
    })?;
    for m in &table {
        let rule = rule_of(&m.name()).ok_or_else(|| format!("{} has no rule", m.name()))?;
        ensure(group_name(m.rule_group()) == rule, || {
            format!("{} assigned {:?}, expected {rule}", m.name(), m.rule_group())
        })?;
        check_rule(*m, rule)?;
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("{} mnemonics", table.len()))
}

// ---------------------------------------------------------------- 2

fn straight_line_op() -> impl Strategy<Value = (u8, u64, bool)> {
    (0u8..=255, any::<u64>(), any::<bool>())
}

const PURE: &[Mnemonic] = &[
    Mnemonic::Add,
    Mnemonic::Mul,
    Mnemonic::Sub,
    Mnemonic::Div,
    Mnemonic::SDiv,
    Mnemonic::Mod,
    Mnemonic::SMod,
    Mnemonic::Exp,
    Mnemonic::SignExtend,
    Mnemonic::Lt,
    Mnemonic::Gt,
    Mnemonic::Slt,
    Mnemonic::Sgt,
    Mnemonic::Eq,
    Mnemonic::And,
    Mnemonic::Or,
    Mnemonic::Xor,
    Mnemonic::Byte,
    Mnemonic::Shl,
    Mnemonic::Shr,
    Mnemonic::Sar,
    Mnemonic::Not,
    Mnemonic::IsZero,
    Mnemonic::AddMod,
    Mnemonic::MulMod,
    Mnemonic::Pop,
    Mnemonic::MStore,
    Mnemonic::MStore8,
];

/// Builds a program that never underflows from random choices.
fn build_program(choices: &[(u8, u64, bool)]) -> Vec<Opcode> {
    let mut ops = Vec::new();
    let mut depth = 0usize;
    for &(sel, v, wide) in choices {
        let pick = sel as usize % (PURE.len() + 3);
        let op = if pick < PURE.len() {
            Opcode::new(PURE[pick])
        } else if pick == PURE.len() {
            Opcode::new(Mnemonic::Dup(1 + (v % 16) as u8))
        } else if pick == PURE.len() + 1 {
            Opcode::new(Mnemonic::Swap(1 + (v % 16) as u8))
        } else {
            let value = if wide { Word::MAX - w(v) } else { w(v % 300) };
            Opcode::push(value)
        };
        let eff = op.mnemonic.stack_effect();
        let op = if depth < eff.required {
            Opcode::push(if wide { Word::MAX - w(v) } else { w(v % 300) })
        } else {
            op
        };
        let eff = op.mnemonic.stack_effect();
        depth = depth - eff.pops + eff.pushes;
        ops.push(op);
    }
    ops.push(Opcode::new(Mnemonic::Stop));
    ops
}

fn symbolic_final_stack(program: &Program) -> Result<Vec<Word>, String> {
    let mut s = SymbolicState::default();
    loop {
        let op = program.get(s.pc).ok_or("ran off the program")?;
        let st = step_symbolic(&s, op, program.len()).map_err(|e| e.to_string())?;
        if st.halted {
            return s
                .stack_top_first()
                .iter()
                .map(|v| v.as_concrete().ok_or_else(|| format!("symbolic value {v:?}")))
                .collect();
        }
        s = st.next.into_iter().next().ok_or("no successor")?;
    }
}

fn symbolic_concrete_agreement() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = prop::collection::vec(straight_line_op(), 1..60);
    runner
        .run(&strategy, |choices| {
            let program = Program::from_opcodes(build_program(&choices));
            let concrete = run_concrete(&program, &ExecutionEnv::default(), 10_000)
                .map_err(|e| TestCaseError::fail(e.to_string()))?
                .halt
                .state
                .stack_top_first();
            let symbolic = symbolic_final_stack(&program).map_err(TestCaseError::fail)?;
            prop_assert_eq!(concrete, symbolic, "{}", program.to_assembly());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(10))?;
    Ok("1000 programs".into())
}

// ---------------------------------------------------------------- 3

/// Nodes lying on a cycle: reachable from one of their own successors.
fn cyclic_nodes(cfg: &Cfg) -> BTreeSet<usize> {
    let succ = cfg.succ_map();
    let reach = |from: usize| -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for s in succ.get(&n).into_iter().flatten() {
                if seen.insert(*s) {
                    stack.push(*s);
                }
            }
        }
        seen
    };
    cfg.nodes.iter().copied().filter(|n| reach(*n).contains(n)).collect()
}

fn loop_bounds() -> Outcome {
    let start = Instant::now();
    let mut seen = Vec::new();
    for (name, expected) in [("bounded_loop", 5u64), ("single_assignment_loop", 1)] {
        let a = analyze_bundle(&common::load(name), &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        let heads: Vec<u64> = a.bounds.loop_heads.iter().map(|h| a.bounds.bound_of(*h)).collect();
        ensure(heads == vec![expected], || {
            format!("{name}: head bounds {heads:?}, expected [{expected}]")
        })?;
        let static_cfg = evmrepair::symbolic::discover_cfg(&a.program).map_err(|e| e.to_string())?;
        let cyclic = cyclic_nodes(&static_cfg.cfg);
        for n in &static_cfg.cfg.nodes {
            if !cyclic.contains(n) {
                ensure(a.bounds.bound_of(*n) == 1, || {
                    format!("{name}: non-loop node {n} has bound {}", a.bounds.bound_of(*n))
                })?;
            }
        }
        seen.push(format!("{name}={expected}"));
    }
    within(start, Duration::from_secs(1))?;
    Ok(seen.join(", "))
}

// ---------------------------------------------------------------- 4

const HALTS: &[&str] = &["STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"];

fn trace_budgets() -> Outcome {
    let start = Instant::now();
    let mut traces = 0;
    for name in common::corpus() {
        let a = analyze_bundle(&common::load(&name), &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        for t in &a.traces.traces {
            traces += 1;
            let last = t.steps.last().map(|s| s.op.mnemonic.name()).unwrap_or_default();
            ensure(HALTS.contains(&last.as_str()), || {
                format!("{name}: trace {} ends in {last}", t.id)
            })?;
            let pcs = t.pcs();
            for h in &a.bounds.loop_heads {
                let budget = a.bounds.bound_of(*h).min(a.bounds.cap);
                // Entries through a back edge; the head is also visited
                // once more for the final exit test.
                let entries = pcs.windows(2).filter(|p| p[1] == *h && p[0] > *h).count() as u64;
                let visits = pcs.iter().filter(|p| *p == h).count() as u64;
                ensure(entries <= budget.max(1) && visits <= budget.max(1) + 1, || {
                    format!("{name}: head {h} entered {entries} times, visited {visits}, budget {budget}")
                })?;
            }
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{traces} traces"))
}

// ---------------------------------------------------------------- 5

const SINK: usize = usize::MAX;

fn succ_with_sink(cfg: &Cfg) -> BTreeMap<usize, Vec<usize>> {
    let mut succ: BTreeMap<usize, Vec<usize>> = cfg.nodes.iter().map(|n| (*n, Vec::new())).collect();
    for (a, b) in &cfg.edges {
        succ.get_mut(a).unwrap().push(*b);
    }
    for e in &cfg.exits {
        succ.get_mut(e).unwrap().push(SINK);
    }
    succ
}

/// Every simple path from `from` to the sink, or None past `budget` paths.
fn all_paths(succ: &BTreeMap<usize, Vec<usize>>, from: usize, budget: usize) -> Option<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut path = vec![from];
    let mut on_path: BTreeSet<usize> = [from].into();
    fn go(
        succ: &BTreeMap<usize, Vec<usize>>,
        path: &mut Vec<usize>,
        on_path: &mut BTreeSet<usize>,
        out: &mut Vec<Vec<usize>>,
        budget: usize,
    ) -> bool {
        let n = *path.last().unwrap();
        if n == SINK {
            out.push(path.clone());
            return out.len() <= budget;
        }
        for s in succ.get(&n).into_iter().flatten() {
            if on_path.insert(*s) {
                path.push(*s);
                let ok = go(succ, path, on_path, out, budget);
                path.pop();
                on_path.remove(s);
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    go(succ, &mut path, &mut on_path, &mut out, budget).then_some(out)
}

/// Control dependencies straight from the definition, by enumerating
/// paths: `j` depends on `i` if some path from `i` reaches `j` with `j`
/// post-dominating every node after `i`, and `j` does not post-dominate `i`.
fn brute_force_control(cfg: &Cfg, budget: usize) -> Option<BTreeMap<usize, BTreeSet<usize>>> {
    let succ = succ_with_sink(cfg);
    let mut paths: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    for n in &cfg.nodes {
        paths.insert(*n, all_paths(&succ, *n, budget)?);
    }
    let pdom = |j: usize, n: usize| -> bool { j == n || paths[&n].iter().all(|p| p.contains(&j)) };
    let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &i in &cfg.nodes {
        for &j in &cfg.nodes {
            if i == j || pdom(j, i) {
                continue;
            }
            // A path i -> ... -> j exists through nodes j post-dominates
            // iff j is reachable from i when only such nodes are entered.
            let mut seen = BTreeSet::new();
            let mut stack = vec![i];
            while let Some(n) = stack.pop() {
                for s in &succ[&n] {
                    if *s != SINK && pdom(j, *s) && seen.insert(*s) {
                        stack.push(*s);
                    }
                }
            }
            if seen.contains(&j) {
                out.entry(j).or_default().insert(i);
            }
        }
    }
    Some(out)
}

const MICRO: &[&str] = &[
    // diamond with one store on one side
    "CALLVALUE\nPUSH @a\nJUMPI\nPUSH 0x01\nPUSH 0x00\nSSTORE\n@a: JUMPDEST\nSTOP",
    // two exits
    "CALLVALUE\nPUSH @a\nJUMPI\nSTOP\n@a: JUMPDEST\nCALLER\nPUSH 0x00\nSSTORE\nSTOP",
    // nested branches
    "CALLVALUE\nPUSH @x\nJUMPI\nCALLER\nPUSH @x\nJUMPI\nPUSH 0x01\nPUSH 0x00\nSSTORE\n@x: JUMPDEST\nSTOP",
    // loop over a storage counter
    "@h: JUMPDEST\nPUSH 0x00\nSLOAD\nISZERO\nPUSH @x\nJUMPI\nPUSH 0x00\nPUSH 0x00\nSSTORE\nPUSH @h\nJUMP\n@x: STOP",
];

fn control_dependency_oracle() -> Outcome {
    let start = Instant::now();
    let mut checked = Vec::new();
    let mut programs: Vec<(String, Program)> = MICRO
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("micro{i}"), decode_program(s).expect("micro program")))
        .collect();
    for name in common::corpus() {
        programs.push((name.clone(), common::load(&name).program().map_err(|e| e.to_string())?));
    }
    let mut small = 0;
    for (name, program) in programs {
        let a = analyze_program(program, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        let n = a.cfg.nodes.len();
        // Path enumeration is exponential; small graphs must always be
        // checked, larger ones when their paths fit the budget.
        let Some(expected) = brute_force_control(&a.cfg, 2_000) else {
            ensure(n > 12, || format!("{name}: {n} nodes but paths exceed the budget"))?;
            continue;
        };
        if n <= 12 {
            small += 1;
        }
        let pdt = post_dominators(&a.cfg);
        let got: BTreeMap<usize, BTreeSet<usize>> = static_control_deps(&a.cfg, &pdt)
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .collect();
        ensure(got == expected, || {
            format!("{name}: got {got:?}, expected {expected:?}")
        })?;
        checked.push(name);
    }
    ensure(small >= MICRO.len(), || {
        format!("only {small} graphs with at most 12 nodes")
    })?;

    // Under the definition each balance store depends directly on the
    // innermost branch only; the outer two reach it through the branches
    // nested inside them. Transitively both stores depend on all three
    // branches and on the GT and ISZERO instructions deciding them.
    let bundle = common::load("transfer");
    let a = analyze_bundle(&bundle, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let pdt = post_dominators(&a.cfg);
    let deps = static_control_deps(&a.cfg, &pdt);
    let transfer = bundle
        .functions
        .iter()
        .find(|f| f.name == "transfer")
        .ok_or("no transfer")?;
    let in_fn = |pc: usize| pc >= transfer.pc_start && pc <= transfer.pc_end;
    let pcs_of = |m: Mnemonic| -> Vec<usize> {
        (transfer.pc_start..=transfer.pc_end)
            .filter(|pc| a.program.get(*pc).map(|o| o.mnemonic) == Some(m))
            .collect()
    };
    let jumpis: BTreeSet<usize> = pcs_of(Mnemonic::JumpI).into_iter().collect();
    let stores = pcs_of(Mnemonic::SStore);
    ensure(jumpis.len() == 3 && stores.len() == 2, || {
        format!("transfer shape: {jumpis:?} {stores:?}")
    })?;
    let innermost = *jumpis.iter().max().unwrap();
    let full = a.traces.traces.iter().max_by_key(|t| t.len()).ok_or("no traces")?;
    let ops = stack_operands(full);
    let mut deciders = BTreeSet::new();
    for (i, st) in full.steps.iter().enumerate() {
        if jumpis.contains(&st.pc) {
            for p in &ops[i][1] {
                let cond = &full.steps[*p];
                deciders.insert(cond.pc);
                if cond.op.mnemonic == Mnemonic::IsZero {
                    deciders.extend(ops[*p][0].iter().map(|q| full.steps[*q].pc));
                }
            }
        }
    }
    let names: BTreeSet<String> = deciders
        .iter()
        .map(|pc| a.program.opcodes[*pc].mnemonic.name())
        .collect();
    ensure(
        names == ["GT", "ISZERO"].into_iter().map(String::from).collect(),
        || format!("transfer branch conditions {names:?}"),
    )?;
    for s in &stores {
        let direct: BTreeSet<usize> = deps.get(s).cloned().unwrap_or_default();
        ensure(direct == [innermost].into(), || {
            format!("transfer: SSTORE {s} directly depends on {direct:?}")
        })?;
        let mut closure = BTreeSet::new();
        let mut work = vec![*s];
        while let Some(n) = work.pop() {
            for d in deps.get(&n).into_iter().flatten() {
                if closure.insert(*d) {
                    work.push(*d);
                }
            }
        }
        closure.retain(|p| in_fn(*p));
        ensure(closure == jumpis, || {
            format!("transfer: SSTORE {s} transitively depends on {closure:?}")
        })?;
        let graph = a.dp.pc_closure(*s);
        ensure(deciders.is_subset(&graph) && jumpis.is_subset(&graph), || {
            format!(
                "transfer: dependency graph of SSTORE {s} lacks {:?}",
                deciders.difference(&graph).collect::<Vec<_>>()
            )
        })?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "{} graphs ({small} with <= 12 nodes) + transfer",
        checked.len()
    ))
}

// ---------------------------------------------------------------- 6

/// Instructions whose operands come from memory, storage or a branch
/// condition; stack-only flows are exact by construction.
fn is_reader(m: Mnemonic) -> bool {
    matches!(
        m,
        Mnemonic::SLoad
            | Mnemonic::MLoad
            | Mnemonic::Sha3
            | Mnemonic::SStore
            | Mnemonic::JumpI
            | Mnemonic::Call
            | Mnemonic::StaticCall
            | Mnemonic::Return
            | Mnemonic::Log(_)
    )
}

fn data_dependency_soundness() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut found_total = 0;
    for name in common::corpus() {
        let bundle = common::load(&name);
        let a = analyze_bundle(&bundle, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        let sc = common::scenario(&bundle);
        if sc.is_empty() {
            continue;
        }
        let readers: BTreeSet<usize> = a
            .traces
            .traces
            .iter()
            .flat_map(|t| t.steps.iter())
            .filter(|s| is_reader(s.op.mnemonic))
            .map(|s| s.pc)
            .collect();
        let observed = oracle_data_deps_many(
            &a.program,
            std::slice::from_ref(&sc),
            &readers,
            OracleOptions::default(),
        )
        .map_err(|e| format!("{name}: oracle: {e}"))?;
        for (r, oracle) in observed {
            let analysis = a.dp.pc_data_deps(r);
            let missing: Vec<usize> = oracle.difference(&analysis).copied().collect();
            ensure(missing.is_empty(), || {
                format!("{name}: reader {r} misses writers {missing:?}")
            })?;
            checked += 1;
            found_total += oracle.len();
        }
    }

    // Cross-trace storage edges: the second and third balance checks read
    // slots written by both balance stores in other transactions. Observing
    // that concretely needs senders and recipients to alternate.
    let bundle = common::load("transfer");
    let a = analyze_bundle(&bundle, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let transfer = bundle
        .functions
        .iter()
        .find(|f| f.name == "transfer")
        .ok_or("no transfer")?;
    let pcs_of = |m: Mnemonic| -> Vec<usize> {
        (transfer.pc_start..=transfer.pc_end)
            .filter(|pc| a.program.get(*pc).map(|o| o.mnemonic) == Some(m))
            .collect()
    };
    let stores: BTreeSet<usize> = pcs_of(Mnemonic::SStore).into_iter().collect();
    let jumpis = pcs_of(Mnemonic::JumpI);
    let base = common::scenario(&bundle).remove(0);
    let (alice, bob) = (base.caller, w(0x2000));
    let selector = base.calldata[..4].to_vec();
    let tx = |from: Word, to: Word, value: u64| {
        let mut env = base.clone();
        env.caller = from;
        env.origin = from;
        env.calldata = selector.clone();
        env.calldata.extend_from_slice(&to.to_be_bytes::<32>());
        env.calldata.extend_from_slice(&w(value).to_be_bytes::<32>());
        env
    };
    let alternating = vec![tx(alice, bob, 10), tx(bob, alice, 5), tx(bob, alice, 1)];
    for j in &jumpis[1..] {
        let d = a.dp.pc_data_deps(*j);
        ensure(stores.is_subset(&d), || {
            format!("transfer: branch {j} data deps {d:?} lack {stores:?}")
        })?;
        let oracle = oracle_data_deps(
            &a.program,
            std::slice::from_ref(&alternating),
            *j,
            OracleOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure(stores.is_subset(&oracle), || {
            format!("transfer: oracle at {j} found only {oracle:?}")
        })?;
        ensure(oracle.is_subset(&d), || {
            format!("transfer: oracle at {j} found {oracle:?} outside {d:?}")
        })?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("{checked} readers, {found_total} observed flows, 0 violations"))
}

// ---------------------------------------------------------------- 7

fn detector_fidelity() -> Outcome {
    let start = Instant::now();
    use VulnerabilityKind::*;
    let expected: &[(&str, &[VulnerabilityKind])] = &[
        ("transfer_proxy", &[Arithmetic]),
        ("masburn", &[IntraReentrancy, Arithmetic]),
        ("bank", &[IntraReentrancy, CrossReentrancy]),
        ("wallet", &[TxOrigin]),
    ];
    for (name, kinds) in expected {
        let a = analyze_bundle(&common::load(name), &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        let got = a.detection.kinds();
        for k in *kinds {
            ensure(got.contains(k), || format!("{name}: no {k:?} report, got {got:?}"))?;
        }
    }
    for name in ["withdraw", "bank_static", "wallet_static", "const_arith"] {
        let a = analyze_bundle(&common::load(name), &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        ensure(a.detection.reports.is_empty(), || {
            format!("{name}: {} reports", a.detection.reports.len())
        })?;
    }
    within(start, Duration::from_secs(30))?;
    Ok("4 positive, 4 negative".into())
}

// ---------------------------------------------------------------- 8

fn fixed_bundles_are_clean() -> Outcome {
    let start = Instant::now();
    let config = AnalysisConfig::default();
    for name in common::POSITIVE {
        let original = analyze_bundle(&common::load(name), &config).map_err(|e| e.to_string())?;
        ensure(original.detection.is_vulnerable(), || {
            format!("{name}: original is clean")
        })?;
        let v = verify_fixed(&common::load_fixed(name), &config).map_err(|e| e.to_string())?;
        ensure(v == VerificationResult::Clean, || {
            format!("{name}: fixed bundle not clean: {v:?}")
        })?;
    }
    for name in common::MUTANTS {
        let v = verify_fixed(&common::load(name), &config).map_err(|e| e.to_string())?;
        ensure(!v.is_clean(), || format!("{name}: mutant analyzed clean"))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{} fixed clean, {} mutants not clean",
        common::POSITIVE.len(),
        common::MUTANTS.len()
    ))
}

// ---------------------------------------------------------------- 9

fn preciseness() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut triggered = 0;
    for name in common::corpus() {
        let original = common::load(&name);
        let fixed = common::load_fixed(&name);
        let a = analyze_bundle(&original, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        match replay(&original, &fixed, &a.detection, &GasTable::default()) {
            Ok(stats) => {
                for t in &stats.transactions {
                    if t.triggered {
                        triggered += 1;
                    } else {
                        compared += 1;
                    }
                }
            }
            Err(Error::DivergentRun(i)) => return Err(format!("{name}: transaction {i} diverged")),
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{compared} identical runs, {triggered} stopped by checks"))
}

// ---------------------------------------------------------------- 10

/// Exact result of the unchecked operation, or None when it leaves
/// `[0, 2^bits)` or divides by zero.
fn reference(op: SafeOp, a: u128, b: u128, bits: u32) -> Option<u128> {
    let limit = 1u128 << bits;
    let r = match op {
        SafeOp::Add => Some(a + b),
        SafeOp::Sub => a.checked_sub(b),
        SafeOp::Mul => Some(a * b),
        SafeOp::Div => a.checked_div(b),
        SafeOp::Exp => {
            let mut acc = 1u128;
            for _ in 0..b {
                acc *= a;
                if acc >= limit {
                    return None;
                }
            }
            Some(acc)
        }
    }?;
    (r < limit).then_some(r)
}

fn reference_256(op: SafeOp, a: Word, b: Word) -> Option<Word> {
    match op {
        SafeOp::Add => a.checked_add(b),
        SafeOp::Sub => a.checked_sub(b),
        SafeOp::Mul => a.checked_mul(b),
        SafeOp::Div => a.checked_div(b),
        SafeOp::Exp => a.checked_pow(b),
    }
}

fn calldata(selector: [u8; 4], a: Word, b: Word) -> Vec<u8> {
    let mut out = selector.to_vec();
    out.extend_from_slice(&a.to_be_bytes::<32>());
    out.extend_from_slice(&b.to_be_bytes::<32>());
    out
}

fn safe_math() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    for op in SafeOp::ALL {
        for a in 0u128..256 {
            for b in 0u128..256 {
                let got = safe_eval(op, w(a as u64), w(b as u64), 8).map(|v| v.to::<u128>());
                let want = reference(op, a, b, 8);
                ensure(got == want, || {
                    format!("{op:?}({a}, {b}) at 8 bits: {got:?}, expected {want:?}")
                })?;
                cases += 1;
            }
        }
    }
    // The compiled templates on the boundary words.
    let bundle = common::load("safemath");
    let program = bundle.program().map_err(|e| e.to_string())?;
    let boundary = [Word::ZERO, w(1), Word::MAX - w(1), Word::MAX];
    for op in SafeOp::ALL {
        let name = match op {
            SafeOp::Add => "add",
            SafeOp::Sub => "sub",
            SafeOp::Mul => "mul",
            SafeOp::Div => "div",
            SafeOp::Exp => "exp",
        };
        let f = bundle
            .functions
            .iter()
            .find(|f| f.name == name)
            .ok_or(format!("no {name}"))?;
        let hex = f.selector.as_deref().ok_or(format!("{name} has no selector"))?;
        let sel = u32::from_str_radix(hex.trim_start_matches("0x"), 16)
            .map_err(|e| e.to_string())?
            .to_be_bytes();
        for a in boundary {
            for b in boundary {
                let want = reference_256(op, a, b);
                if op == SafeOp::Exp && b > w(300) && a <= w(1) {
                    // The template multiplies b times; with a base of 0 or 1
                    // it never overflows and the loop cannot finish.
                    ensure(safe_eval(op, a, b, 256) == want, || format!("exp({a}, {b}) mirror"))?;
                    cases += 1;
                    continue;
                }
                let env = ExecutionEnv {
                    calldata: calldata(sel, a, b),
                    ..ExecutionEnv::default()
                };
                let run = run_concrete(&program, &env, 2_000_000).map_err(|e| format!("{name}({a}, {b}): {e}"))?;
                let got = run
                    .halt
                    .kind
                    .is_success()
                    .then(|| run.halt.output.first().copied().unwrap_or_default());
                ensure(got == want, || format!("{name}({a}, {b}): {got:?}, expected {want:?}"))?;
                ensure(safe_eval(op, a, b, 256) == want, || {
                    format!("{name}({a}, {b}) mirror disagrees")
                })?;
                cases += 1;
            }
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("{cases} cases"))
}

// ---------------------------------------------------------------- 11

fn targeted_vs_blanket() -> Outcome {
    let original = common::load("payout_targeted");
    let fixed = common::load_fixed("payout_targeted");
    let a = analyze_bundle(&original, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let stats = replay(&original, &fixed, &a.detection, &GasTable::default()).map_err(|e| e.to_string())?;
    let (j, k) = (stats.checks.targeted, stats.checks.blanket);
    ensure(j == 2 && k == 5 && j < k, || {
        format!("targeted {j}, blanket {k}; expected 2 and 5")
    })?;
    Ok(format!("targeted {j}, blanket {k}"))
}

// ---------------------------------------------------------------- 12

fn overhead_accounting() -> Outcome {
    let start = Instant::now();
    // Cost per instruction from the documented defaults.
    let (stack_op, jumpi, jumpdest) = (3u64, 10u64, 1u64);
    let table = GasTable::default();
    ensure(
        table.cost_of(&Opcode::new(Mnemonic::Add)) == stack_op
            && table.cost_of(&Opcode::new(Mnemonic::JumpI)) == jumpi
            && table.cost_of(&Opcode::new(Mnemonic::JumpDest)) == jumpdest,
        || "gas table defaults changed".into(),
    )?;
    // `a + 1` becomes `add_uint256(a, 1)`: the inlined body executes these
    // instructions beyond the original PUSH/DUP/ADD.
    let extra: &[(&str, u64)] = &[
        ("PUSH 0x0 (return slot)", stack_op),
        ("PUSH @ok", stack_op),
        ("DUP1", stack_op),
        ("DUP3", stack_op),
        ("DUP3", stack_op),
        ("DUP2", stack_op),
        ("DUP1", stack_op),
        ("LT", stack_op),
        ("ISZERO", stack_op),
        ("JUMPI", jumpi),
        ("JUMPDEST", jumpdest),
        ("SWAP4", stack_op),
        ("POP", stack_op),
        ("POP", stack_op),
        ("POP", stack_op),
        ("POP", stack_op),
    ];
    let extra_gas: u64 = extra.iter().map(|(_, c)| c).sum();
    ensure(extra_gas == 53, || format!("hand sum {extra_gas}"))?;

    let original = common::load("one_check");
    let fixed = common::load_fixed("one_check");
    let a = analyze_bundle(&original, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let stats = replay(&original, &fixed, &a.detection, &table).map_err(|e| e.to_string())?;
    let t = stats.transactions.first().ok_or("no transactions")?;
    ensure(!t.triggered, || "check fired".into())?;
    ensure(t.gas_fixed - t.gas_original == extra_gas, || {
        format!("gas {} -> {}, expected +{extra_gas}", t.gas_original, t.gas_fixed)
    })?;
    let ppm = (extra_gas * 1_000_000 / t.gas_original) as i64;
    ensure(t.gas_overhead_ppm == ppm, || {
        format!("ppm {} vs hand {ppm}", t.gas_overhead_ppm)
    })?;
    let pct = extra_gas as f64 * 100.0 / t.gas_original as f64;
    ensure(t.gas_overhead_pct == pct, || {
        format!("pct {} vs hand {pct}", t.gas_overhead_pct)
    })?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("+{extra_gas} gas on {} ({ppm} ppm)", t.gas_original))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("semantics partition", semantics_partition),
        ("symbolic/concrete agreement", symbolic_concrete_agreement),
        ("loop bounds", loop_bounds),
        ("trace budgets", trace_budgets),
        ("control-dependency oracle", control_dependency_oracle),
        ("data-dependency soundness", data_dependency_soundness),
        ("detector fidelity", detector_fidelity),
        ("fixed bundles re-analyze clean", fixed_bundles_are_clean),
        ("preciseness", preciseness),
        ("safe-math correctness", safe_math),
        ("targeted vs blanket checks", targeted_vs_blanket),
        ("overhead accounting", overhead_accounting),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_millis();
        match r {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({detail}) [{ms} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{ms} ms]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
