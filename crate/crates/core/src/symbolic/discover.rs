//! Static CFG recovery by abstract interpretation over stacks of known
//! constants. Loop bounds are needed before any trace exists, so the loop
//! structure comes from here rather than from the enumerated traces.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::cfg::graph::Cfg;
use crate::error::{Error, Result};
use crate::evm::concrete::eval_pure;
use crate::evm::opcode::{Mnemonic, RuleGroup};
use crate::evm::program::Program;
use crate::word::{to_usize, Word};

type AbsStack = Vec<Option<Word>>;

/// Distinct abstract stacks of one height kept per pc before they are joined.
const STACKS_PER_PC: usize = 16;

#[derive(Debug, Clone, Default)]
pub struct StaticCfg {
    pub cfg: Cfg,
    /// For `SWAPi` the value moved down, for `MSTORE` the stored value:
    /// true when it is a known constant on every path reaching the pc.
    pub constant_operand: BTreeMap<usize, bool>,
}

fn subsumes(general: &AbsStack, s: &AbsStack) -> bool {
    general.len() == s.len() && general.iter().zip(s).all(|(g, v)| g.is_none() || g == v)
}

fn join(a: &AbsStack, b: &AbsStack) -> AbsStack {
    a.iter().zip(b).map(|(x, y)| if x == y { *x } else { None }).collect()
}

fn target(pc: usize, t: Option<Word>, len: usize) -> Result<usize> {
    let t = t.ok_or(Error::SymbolicJumpTarget { pc })?;
    if t >= Word::from(len) {
        return Err(Error::InvalidJumpTarget {
            pc,
            target: crate::word::format_word(&t),
        });
    }
    Ok(to_usize(&t))
}

fn enqueue(pc: usize, st: AbsStack, seen: &mut HashMap<usize, Vec<AbsStack>>, work: &mut VecDeque<(usize, AbsStack)>) {
    let list = seen.entry(pc).or_default();
    if list.iter().any(|g| subsumes(g, &st)) {
        return;
    }
    let same: Vec<usize> = (0..list.len()).filter(|i| list[*i].len() == st.len()).collect();
    let st = if same.len() >= STACKS_PER_PC {
        let mut j = st;
        for i in same.iter().rev() {
            j = join(&j, &list.remove(*i));
        }
        j
    } else {
        st
    };
    list.retain(|g| !subsumes(&st, g));
    list.push(st.clone());
    work.push_back((pc, st));
}

pub fn discover_cfg(program: &Program) -> Result<StaticCfg> {
    let len = program.len();
    let mut out = StaticCfg::default();
    out.cfg.entry = 0;
    if len == 0 {
        return Ok(out);
    }
    let mut seen: HashMap<usize, Vec<AbsStack>> = HashMap::new();
    let mut work: VecDeque<(usize, AbsStack)> = VecDeque::new();
    enqueue(0, Vec::new(), &mut seen, &mut work);

    while let Some((pc, mut st)) = work.pop_front() {
        out.cfg.nodes.insert(pc);
        let op = program.opcodes[pc];
        let m = op.mnemonic;
        let effect = m.stack_effect();
        if st.len() < effect.required {
            return Err(Error::StackUnderflow { pc });
        }
        let n = st.len();
        match m.rule_group() {
            RuleGroup::Swap => {
                let known = st[n - 1].is_some();
                let e = out.constant_operand.entry(pc).or_insert(true);
                *e &= known;
            }
            RuleGroup::MStore => {
                let known = st[n - 2].is_some();
                let e = out.constant_operand.entry(pc).or_insert(true);
                *e &= known;
            }
            _ => {}
        }
        let args: Vec<Option<Word>> = (0..effect.pops).map(|_| st.pop().expect("checked")).collect();
        let mut succs = vec![pc + 1];
        match m.rule_group() {
            RuleGroup::Halt => {
                out.cfg.exits.insert(pc);
                continue;
            }
            RuleGroup::Dup => {
                let Mnemonic::Dup(i) = m else { unreachable!() };
                st.push(st[st.len() - i as usize]);
            }
            RuleGroup::Swap => {
                let Mnemonic::Swap(i) = m else { unreachable!() };
                let k = st.len();
                st.swap(k - 1, k - 1 - i as usize);
            }
            RuleGroup::Push => st.push(op.immediate),
            RuleGroup::JumpI => {
                succs = match args[1] {
                    Some(c) if c.is_zero() => vec![pc + 1],
                    Some(_) => vec![target(pc, args[0], len)?],
                    None => vec![pc + 1, target(pc, args[0], len)?],
                };
            }
            RuleGroup::Jump => succs = vec![target(pc, args[0], len)?],
            _ => {
                for _ in 0..effect.pushes {
                    let folded = if !m.is_opaque() {
                        args.iter()
                            .copied()
                            .collect::<Option<Vec<Word>>>()
                            .and_then(|words| eval_pure(m, &words))
                    } else if m == Mnemonic::Pc {
                        Some(Word::from(pc))
                    } else {
                        None
                    };
                    st.push(folded);
                }
            }
        }
        for s in succs {
            if s >= len {
                // Falling off the end halts.
                out.cfg.exits.insert(pc);
                continue;
            }
            out.cfg.edges.insert((pc, s));
            enqueue(s, st.clone(), &mut seen, &mut work);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::program::decode_program;

    #[test]
    fn diamond() {
        let p =
            decode_program("CALLER\nPUSH @t\nJUMPI\nPUSH 0x01\nPUSH @end\nJUMP\n@t: PUSH 0x02\n@end: STOP").unwrap();
        let s = discover_cfg(&p).unwrap();
        assert!(s.cfg.edges.contains(&(2, 3)));
        assert!(s.cfg.edges.contains(&(2, 6)));
        assert!(s.cfg.edges.contains(&(5, 7)));
        assert_eq!(s.cfg.exits.iter().copied().collect::<Vec<_>>(), vec![7]);
    }

    #[test]
    fn concrete_branch_is_followed_one_way() {
        let p = decode_program("PUSH 0x00\nPUSH @t\nJUMPI\nSTOP\n@t: INVALID").unwrap();
        let s = discover_cfg(&p).unwrap();
        assert!(!s.cfg.nodes.contains(&4));
    }

    #[test]
    fn return_addresses_survive_calls_from_two_sites() {
        let src = "PUSH @r1\nPUSH @f\nJUMP\n@r1: PUSH @r2\nPUSH @f\nJUMP\n@r2: STOP\n@f: JUMP";
        let p = decode_program(src).unwrap();
        let s = discover_cfg(&p).unwrap();
        assert!(s.cfg.edges.contains(&(7, 3)));
        assert!(s.cfg.edges.contains(&(7, 6)));
    }

    #[test]
    fn counter_loop_terminates() {
        let src = "PUSH 0x00\n@h: DUP1\nCALLER\nGT\nISZERO\nPUSH @x\nJUMPI\nPUSH 0x01\nADD\nPUSH @h\nJUMP\n@x: STOP";
        let p = decode_program(src).unwrap();
        let s = discover_cfg(&p).unwrap();
        assert!(s.cfg.edges.contains(&(10, 1)));
    }

    #[test]
    fn unknown_jump_target() {
        let p = decode_program("CALLER\nJUMP").unwrap();
        assert_eq!(discover_cfg(&p).unwrap_err(), Error::SymbolicJumpTarget { pc: 1 });
    }
}
