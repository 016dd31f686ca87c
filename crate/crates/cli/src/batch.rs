use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::commands::{run_one, Command, Outcome, RunConfig};

/// Bundles in `dir`, excluding paired `*.fixed.json` files.
pub fn bundles(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".fixed.json")
        })
        .collect();
    out.sort();
    Ok(out)
}

fn output_name(path: &Path, command: Command) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match command {
        Command::Analyze => format!("{stem}.report.json"),
        Command::Fix => format!("{stem}.fixed.sol"),
        Command::Replay => format!("{stem}.stats.json"),
    }
}

/// Runs the command on every bundle with `jobs` workers. Prints one JSON
/// summary array; the exit code is 1 if any bundle failed, else 2 if any
/// was vulnerable, else 0.
pub fn run(dir: &Path, config: &RunConfig, jobs: usize) -> u8 {
    let paths = match bundles(dir) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return 1;
        }
    };
    for d in [&config.out, &config.emit_plan].into_iter().flatten() {
        if let Err(e) = fs::create_dir_all(d) {
            eprintln!("error: {}: {e}", d.display());
            return 1;
        }
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| {
        paths
            .par_iter()
            .map(|p| {
                let mut c = config.clone();
                c.dump = None;
                c.quiet = true;
                c.out = Some(match &config.out {
                    Some(d) => d.join(output_name(p, c.command)),
                    None => p.with_file_name(output_name(p, c.command)),
                });
                c.emit_plan = config.emit_plan.as_ref().map(|d| {
                    let stem = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    d.join(format!("{stem}.plan.json"))
                });
                run_one(p, &c)
            })
            .collect()
    });
    println!("{}", serde_json::to_string_pretty(&outcomes).expect("serializable"));
    outcomes.iter().map(|o| o.exit_code()).fold(0, |acc, c| match (acc, c) {
        (1, _) | (_, 1) => 1,
        (2, _) | (_, 2) => 2,
        _ => 0,
    })
}
