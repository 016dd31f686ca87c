//! The analysis pipeline: loop bounds, trace enumeration, trace CFG,
//! control and data dependency, detectors.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bundle::ContractBundle;
use crate::cfg::{build_cfg, post_dominators, project, static_control_deps, Cfg, ControlDeps, PostDomTree};
use crate::dependency::{full_dependency, DepOptions, DependencyRelation};
use crate::detect::{detect_all, Detection};
use crate::error::Result;
use crate::evm::program::Program;
use crate::symbolic::bounds::DEFAULT_LOOP_CAP;
use crate::symbolic::{compute_loop_bounds, discover_cfg, enumerate_partial, EnumerateOptions, LoopBounds, TraceSet};

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub timeout: Option<Duration>,
    pub loop_cap: u64,
    pub dep: DepOptions,
    pub max_traces: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            timeout: None,
            loop_cap: DEFAULT_LOOP_CAP,
            dep: DepOptions::default(),
            max_traces: EnumerateOptions::default().max_traces,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub program: Program,
    pub bounds: LoopBounds,
    pub traces: TraceSet,
    pub cfg: Cfg,
    pub pdt: PostDomTree,
    pub control: Vec<ControlDeps>,
    pub dp: DependencyRelation,
    pub detection: Detection,
    pub timings: Timings,
}

/// Wall-clock time per stage, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Timings {
    pub traces_us: u64,
    pub dependency_us: u64,
    pub detection_us: u64,
}

impl Analysis {
    pub fn timed_out(&self) -> bool {
        self.traces.timed_out
    }
}

fn micros(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}

pub fn analyze_program(program: Program, config: &AnalysisConfig) -> Result<Analysis> {
    let start = Instant::now();
    let scfg = discover_cfg(&program)?;
    let bounds = compute_loop_bounds(&program, &scfg).with_cap(config.loop_cap);
    let opts = EnumerateOptions {
        timeout: config.timeout,
        max_traces: config.max_traces,
        ..EnumerateOptions::default()
    };
    let traces = enumerate_partial(&program, &bounds, &opts)?;
    let traces_us = micros(start);

    let start = Instant::now();
    let cfg = build_cfg(&traces)?;
    let pdt = post_dominators(&cfg);
    let by_pc = static_control_deps(&cfg, &pdt);
    let control: Vec<ControlDeps> = traces.traces.iter().map(|t| project(t, &by_pc)).collect();
    let dp = full_dependency(&traces, &control, config.dep);
    let dependency_us = micros(start);

    let start = Instant::now();
    let detection = detect_all(&program, &traces, &dp);
    let detection_us = micros(start);

    Ok(Analysis {
        program,
        bounds,
        traces,
        cfg,
        pdt,
        control,
        dp,
        detection,
        timings: Timings {
            traces_us,
            dependency_us,
            detection_us,
        },
    })
}

/// Analyzes a bundle; reports carry source spans.
pub fn analyze_bundle(bundle: &ContractBundle, config: &AnalysisConfig) -> Result<Analysis> {
    let mut a = analyze_program(bundle.program()?, config)?;
    a.detection = std::mem::take(&mut a.detection).with_sources(bundle);
    Ok(a)
}
