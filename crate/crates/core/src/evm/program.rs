use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::opcode::{Mnemonic, Opcode};
use crate::error::{Error, Result};
use crate::word::{parse_word, Word};

/// Function boundaries taken from the bundle; `pc_end` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    pub pc_start: usize,
    pub pc_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
}

pub const FALLBACK: &str = "fallback";

/// Decoded program. The pc of an instruction is its index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub opcodes: Vec<Opcode>,
    pub labels: BTreeMap<String, usize>,
    pub functions: Vec<FunctionInfo>,
    /// Source node kind of each mapped pc.
    pub node_kinds: BTreeMap<usize, String>,
}

impl Program {
    pub fn from_opcodes(opcodes: Vec<Opcode>) -> Self {
        Program {
            opcodes,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.opcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opcodes.is_empty()
    }

    pub fn entry(&self) -> usize {
        0
    }

    pub fn get(&self, pc: usize) -> Option<&Opcode> {
        self.opcodes.get(pc)
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.labels.get(name).copied()
    }

    /// Name of the innermost function whose range contains `pc`.
    pub fn function_of(&self, pc: usize) -> &str {
        self.functions
            .iter()
            .filter(|f| f.pc_start <= pc && pc <= f.pc_end)
            .min_by_key(|f| f.pc_end - f.pc_start)
            .map(|f| f.name.as_str())
            .unwrap_or(FALLBACK)
    }

    /// Assembly text that decodes back to this program (labels become numeric).
    pub fn to_assembly(&self) -> String {
        let mut out = String::new();
        for op in &self.opcodes {
            out.push_str(&op.to_string());
            out.push('\n');
        }
        out
    }
}

enum Immediate {
    Value(Word),
    Label(String, usize),
}

/// Decodes the line-oriented assembly: one instruction per line,
/// `MNEMONIC [immediate]`, `#` comments, `@name:` label definitions and
/// `@name` label references as immediates.
pub fn decode_program(text: &str) -> Result<Program> {
    let mut raw: Vec<(Mnemonic, Option<Immediate>)> = Vec::new();
    let mut labels = BTreeMap::new();
    let mut pending: Vec<(String, usize)> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut rest = line.split('#').next().unwrap_or("").trim();
        while let Some(stripped) = rest.strip_prefix('@') {
            let Some(colon) = stripped.find(':') else {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("label reference outside an instruction: {rest}"),
                });
            };
            let name = stripped[..colon].trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: line_no,
                    reason: "bad label name".into(),
                });
            }
            if labels.insert(name.to_string(), raw.len()).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("duplicate label {name}"),
                });
            }
            pending.push((name.to_string(), line_no));
            rest = stripped[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let mut parts = rest.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let mnemonic: Mnemonic = name.parse().map_err(|_| Error::UnknownOpcode(name.to_string()))?;
        let imm = match parts.next() {
            None => None,
            Some(tok) => {
                if let Some(label) = tok.strip_prefix('@') {
                    Some(Immediate::Label(label.to_string(), line_no))
                } else {
                    Some(Immediate::Value(parse_word(tok).ok_or_else(|| Error::Parse {
                        line: line_no,
                        reason: format!("bad immediate {tok}"),
                    })?))
                }
            }
        };
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                reason: "trailing tokens".into(),
            });
        }
        match (mnemonic == Mnemonic::Push, imm.is_some()) {
            (true, false) => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: "PUSH needs an immediate".into(),
                })
            }
            (false, true) => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("{name} takes no immediate"),
                })
            }
            _ => {}
        }
        pending.clear();
        raw.push((mnemonic, imm));
    }

    if let Some((name, line)) = pending.first() {
        return Err(Error::Parse {
            line: *line,
            reason: format!("label {name} does not precede an instruction"),
        });
    }
    if raw.is_empty() {
        return Err(Error::Parse {
            line: 0,
            reason: "empty program".into(),
        });
    }

    let mut opcodes = Vec::with_capacity(raw.len());
    for (mnemonic, imm) in raw {
        let immediate = match imm {
            None => None,
            Some(Immediate::Value(v)) => Some(v),
            Some(Immediate::Label(name, line)) => {
                let pc = labels.get(&name).ok_or_else(|| Error::Parse {
                    line,
                    reason: format!("undefined label {name}"),
                })?;
                Some(Word::from(*pc))
            }
        };
        opcodes.push(Opcode { mnemonic, immediate });
    }
    Ok(Program {
        opcodes,
        labels,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_simple_program() {
        let p = decode_program("PUSH 0x05\nPUSH 0x06\nADD\nSTOP").unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.opcodes[2], Opcode::new(Mnemonic::Add));
        assert_eq!(p.opcodes[1].immediate, Some(Word::from(6u8)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode_program(""), Err(Error::Parse { .. })));
        assert!(matches!(decode_program("# only\n\n"), Err(Error::Parse { .. })));
        assert_eq!(decode_program("FOO"), Err(Error::UnknownOpcode("FOO".into())));
        assert!(matches!(decode_program("PUSH"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(decode_program("ADD 0x01"), Err(Error::Parse { .. })));
        assert!(matches!(
            decode_program("PUSH @nowhere\nSTOP"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(decode_program("STOP\n@end:"), Err(Error::Parse { .. })));
    }

    #[test]
    fn resolves_labels() {
        let p = decode_program("PUSH @end # jump\nJUMP\nINVALID\n@end:\nSTOP").unwrap();
        assert_eq!(p.label("end"), Some(3));
        assert_eq!(p.opcodes[0].immediate, Some(Word::from(3u8)));
        let q = decode_program("@a: @b: STOP").unwrap();
        assert_eq!(q.label("a"), Some(0));
        assert_eq!(q.label("b"), Some(0));
    }

    #[test]
    fn assembly_round_trip() {
        let p = decode_program("PUSH @x\nJUMP\n@x: DUP2\nSTOP").unwrap();
        let q = decode_program(&p.to_assembly()).unwrap();
        assert_eq!(p.opcodes, q.opcodes);
    }

    #[test]
    fn function_lookup() {
        let mut p = decode_program("STOP\nSTOP\nSTOP\nSTOP").unwrap();
        p.functions = vec![FunctionInfo {
            name: "f".into(),
            pc_start: 1,
            pc_end: 2,
            selector: None,
        }];
        assert_eq!(p.function_of(0), FALLBACK);
        assert_eq!(p.function_of(2), "f");
        assert_eq!(p.function_of(3), FALLBACK);
    }
}
