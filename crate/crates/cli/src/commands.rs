use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use evmrepair::bundle::ContractBundle;
use evmrepair::dependency::AddressStats;
use evmrepair::detect::{Detection, VulnerabilityReport};
use evmrepair::evm::gas::GasTable;
use evmrepair::patch::{apply_patches, plan_fixes, verify_fixed, PatchPlan};
use evmrepair::pipeline::{analyze_bundle, Analysis, AnalysisConfig, Timings};
use evmrepair::replay::replay;
use evmrepair::Error;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Fix,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dump {
    Traces,
    Cfg,
    Deps,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub timeout: Duration,
    pub loop_cap: u64,
    pub dump: Option<Dump>,
    pub emit_plan: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Suppress the per-bundle summary line.
    pub quiet: bool,
}

impl RunConfig {
    fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            timeout: Some(self.timeout),
            loop_cap: self.loop_cap,
            ..AnalysisConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Clean,
    Vulnerable,
    Timeout,
    Error,
}

/// What one bundle produced, for the exit code and the batch summary.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub bundle: String,
    pub status: Status,
    pub message: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self.status {
            Status::Clean => 0,
            Status::Vulnerable => 2,
            Status::Timeout | Status::Error => 1,
        }
    }

    fn error(path: &Path, e: impl std::fmt::Display) -> Self {
        Outcome {
            bundle: path.display().to_string(),
            status: Status::Error,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub contract: &'a str,
    pub vulnerable: bool,
    pub timeout: bool,
    pub truncated: bool,
    pub traces: usize,
    pub pruned: usize,
    pub reports: &'a [VulnerabilityReport],
    pub mitigated: &'a [VulnerabilityReport],
    pub address_stats: &'a AddressStats,
    pub timings: Timings,
}

pub fn report<'a>(bundle: &'a ContractBundle, a: &'a Analysis) -> Report<'a> {
    Report {
        contract: &bundle.name,
        vulnerable: a.detection.is_vulnerable(),
        timeout: a.timed_out(),
        truncated: a.traces.truncated,
        traces: a.traces.len(),
        pruned: a.traces.pruned,
        reports: &a.detection.reports,
        mitigated: &a.detection.mitigated,
        address_stats: &a.dp.stats,
        timings: a.timings,
    }
}

#[derive(Serialize)]
struct TraceDump {
    id: usize,
    ops: Vec<String>,
}

fn dump_text(bundle: &ContractBundle, a: &Analysis, dump: Dump) -> String {
    match dump {
        Dump::Cfg => a.cfg.to_dot(&a.program, &bundle.name),
        Dump::Traces => {
            let traces: Vec<TraceDump> = a
                .traces
                .traces
                .iter()
                .map(|t| TraceDump {
                    id: t.id,
                    ops: t.steps.iter().map(|s| format!("{}: {}", s.pc, s.op)).collect(),
                })
                .collect();
            json(&traces)
        }
        Dump::Deps => json(&a.dp.pc_closure_edges()),
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Writes `text` to `out`, or to standard output when there is none.
fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(detection: &Detection) -> String {
    let kinds: Vec<String> = detection.kinds().iter().map(|k| format!("{k:?}")).collect();
    if kinds.is_empty() {
        "clean".to_string()
    } else {
        format!("{} report(s): {}", detection.reports.len(), kinds.join(", "))
    }
}

pub fn run_one(path: &Path, config: &RunConfig) -> Outcome {
    match try_run(path, config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Outcome::error(path, e)
        }
    }
}

fn try_run(path: &Path, config: &RunConfig) -> Result<Outcome, Error> {
    let bundle = ContractBundle::load(path)?;
    let a = analyze_bundle(&bundle, &config.analysis())?;
    let name = path.display().to_string();
    if a.timed_out() {
        if config.command == Command::Analyze {
            emit(config.out.as_deref(), &json(&report(&bundle, &a)))?;
        }
        let secs = config.timeout.as_secs();
        eprintln!("{name}: timeout after {secs}s, partial report");
        return Ok(Outcome {
            bundle: name,
            status: Status::Timeout,
            message: Error::Timeout(secs * 1000).to_string(),
        });
    }
    let status = if a.detection.is_vulnerable() {
        Status::Vulnerable
    } else {
        Status::Clean
    };
    let message = match config.command {
        Command::Analyze => analyze(&bundle, &a, config)?,
        Command::Fix => fix(path, &bundle, &a, config)?,
        Command::Replay => {
            let fixed = ContractBundle::load(&ContractBundle::fixed_path(path))?;
            let stats = replay(&bundle, &fixed, &a.detection, &GasTable::default())?;
            emit(config.out.as_deref(), &json(&stats))?;
            format!(
                "gas overhead {:.3}%, time overhead {:.3}%, checks targeted {} blanket {}",
                stats.mean_gas_overhead_pct, stats.mean_time_overhead_pct, stats.checks.targeted, stats.checks.blanket
            )
        }
    };
    if !config.quiet && (config.out.is_some() || config.command != Command::Analyze) {
        println!("{name}: {message}");
    }
    Ok(Outcome {
        bundle: name,
        status,
        message,
    })
}

fn analyze(bundle: &ContractBundle, a: &Analysis, config: &RunConfig) -> Result<String, Error> {
    match config.dump {
        Some(d) => {
            print!("{}", dump_text(bundle, a, d));
            if let Some(out) = &config.out {
                fs::write(out, json(&report(bundle, a)))?;
            }
        }
        None => emit(config.out.as_deref(), &json(&report(bundle, a)))?,
    }
    Ok(summary(&a.detection))
}

fn fix(path: &Path, bundle: &ContractBundle, a: &Analysis, config: &RunConfig) -> Result<String, Error> {
    let plan = if a.detection.is_vulnerable() {
        plan_fixes(&a.detection, bundle)?
    } else {
        PatchPlan::default()
    };
    let patched = apply_patches(&bundle.source, &plan)?;
    let out = config.out.clone().unwrap_or_else(|| default_fixed_source(path));
    fs::write(&out, &patched)?;
    if let Some(p) = &config.emit_plan {
        fs::write(p, json(&plan))?;
    }
    let mut msg = format!(
        "{}; {} edit(s) written to {}",
        summary(&a.detection),
        plan.edits.len(),
        out.display()
    );
    // A paired bundle compiled from exactly this text can be re-checked.
    if let Ok(fixed) = ContractBundle::load(&ContractBundle::fixed_path(path)) {
        if fixed.source == patched && !plan.is_empty() {
            let v = verify_fixed(&fixed, &config.analysis())?;
            msg.push_str(if v.is_clean() {
                "; fixed bundle verifies clean"
            } else {
                "; fixed bundle NOT clean"
            });
        }
    }
    Ok(msg)
}

/// `<dir>/<stem>.fixed.sol` next to the bundle.
pub fn default_fixed_source(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.fixed.sol"))
}
