#![allow(dead_code)]

use std::path::{Path, PathBuf};

use evmrepair::bundle::ContractBundle;
use evmrepair::evm::concrete::ExecutionEnv;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load(name: &str) -> ContractBundle {
    let path = fixtures_dir().join(format!("{name}.json"));
    ContractBundle::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn load_fixed(name: &str) -> ContractBundle {
    load(&format!("{name}.fixed"))
}

/// Names of the original fixtures: no `.fixed` pairs, no mutants.
pub fn corpus() -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(fixtures_dir())
        .expect("fixtures directory")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && !n.ends_with(".fixed.json") && !n.contains("mutant"))
        .map(|n| n.trim_end_matches(".json").to_string())
        .collect();
    out.sort();
    out
}

pub const POSITIVE: &[&str] = &[
    "transfer_proxy",
    "masburn",
    "bank",
    "bank_guarded",
    "wallet",
    "payout_targeted",
    "one_check",
];

pub const NEGATIVE: &[&str] = &[
    "transfer",
    "withdraw",
    "bank_static",
    "wallet_static",
    "const_arith",
    "origin_emit",
    "bounded_loop",
    "single_assignment_loop",
    "safemath",
];

pub const MUTANTS: &[&str] = &["bank_mutant", "masburn_mutant"];

/// The bundle's transactions as one scenario on persistent storage.
pub fn scenario(bundle: &ContractBundle) -> Vec<ExecutionEnv> {
    let storage = bundle.initial_storage().expect("storage");
    bundle
        .transactions
        .iter()
        .map(|t| t.env(&storage).expect("transaction env"))
        .collect()
}
