//! Contract bundle: assembly, source text, source map and function table in
//! one JSON document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evm::concrete::{CallStub, ExecutionEnv, Storage};
use crate::evm::program::{decode_program, FunctionInfo, Program};
use crate::word::{parse_word, serde_bytes, Word};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMapEntry {
    pub pc: usize,
    pub start: usize,
    pub length: usize,
    pub node: String,
}

/// Node kind of pcs belonging to checks inserted by the patcher.
pub const INJECTED_CHECK: &str = "InjectedCheck";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    #[serde(default)]
    pub calldata: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caller: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callvalue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_results: Vec<CallStub>,
}

impl Transaction {
    /// Environment for this transaction on top of `storage`.
    pub fn env(&self, storage: &Storage) -> Result<ExecutionEnv> {
        let word = |field: &Option<String>, default: Word| -> Result<Word> {
            match field {
                None => Ok(default),
                Some(s) => parse_word(s).ok_or_else(|| Error::Bundle(format!("bad word {s}"))),
            }
        };
        let base = ExecutionEnv::default();
        Ok(ExecutionEnv {
            calldata: serde_bytes::decode(&self.calldata)
                .ok_or_else(|| Error::Bundle(format!("bad calldata {}", self.calldata)))?,
            origin: word(&self.origin, base.origin)?,
            caller: word(&self.caller, base.caller)?,
            callvalue: word(&self.callvalue, base.callvalue)?,
            timestamp: word(&self.timestamp, base.timestamp)?,
            storage: storage.clone(),
            call_results: self.call_results.clone(),
            ..base
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractBundle {
    pub name: String,
    pub assembly: String,
    pub source: String,
    pub sourcemap: Vec<SourceMapEntry>,
    pub functions: Vec<FunctionInfo>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub storage: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transactions: Vec<Transaction>,
}

impl ContractBundle {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn program(&self) -> Result<Program> {
        let mut program = decode_program(&self.assembly)?;
        for f in &self.functions {
            if f.pc_start > f.pc_end || f.pc_end >= program.len() {
                return Err(Error::Bundle(format!("function {} has a bad pc range", f.name)));
            }
        }
        program.functions = self.functions.clone();
        program.node_kinds = self.sourcemap.iter().map(|e| (e.pc, e.node.clone())).collect();
        Ok(program)
    }

    pub fn initial_storage(&self) -> Result<Storage> {
        self.storage
            .iter()
            .map(|(k, v)| match (parse_word(k), parse_word(v)) {
                (Some(k), Some(v)) => Ok((k, v)),
                _ => Err(Error::Bundle(format!("bad storage entry {k}: {v}"))),
            })
            .collect()
    }

    pub fn source_entry(&self, pc: usize) -> Option<&SourceMapEntry> {
        self.sourcemap.iter().find(|e| e.pc == pc)
    }

    pub fn span_text(&self, entry: &SourceMapEntry) -> Option<&str> {
        self.source.get(entry.start..entry.start + entry.length)
    }

    /// 1-based source line of a byte offset.
    pub fn line_of(&self, offset: usize) -> usize {
        self.source[..offset.min(self.source.len())]
            .bytes()
            .filter(|b| *b == b'\n')
            .count()
            + 1
    }

    /// Path of the paired fixed bundle: `<stem>.fixed.json`.
    pub fn fixed_path(path: &Path) -> PathBuf {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        path.with_file_name(format!("{stem}.fixed.json"))
    }
}
