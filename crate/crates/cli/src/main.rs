use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};

mod batch;
mod commands;

use commands::{Command, Dump, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "evmrepair", version, about = "Analyze, fix and replay EVM contract bundles")]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// Contract bundle (JSON). Omit with --batch.
    bundle: Option<PathBuf>,
    /// Analysis timeout in seconds.
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    timeout: u64,
    /// Ceiling on per-loop iteration budgets.
    #[arg(long = "loop-cap", default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    loop_cap: u64,
    /// Print the symbolic traces as JSON instead of the report.
    #[arg(long = "dump-traces", group = "dump")]
    dump_traces: bool,
    /// Print the trace CFG in DOT format instead of the report.
    #[arg(long = "dump-cfg", group = "dump")]
    dump_cfg: bool,
    /// Print the pc-level dependency closure as JSON instead of the report.
    #[arg(long = "dump-deps", group = "dump")]
    dump_deps: bool,
    /// Write the patch plan (fix) as JSON.
    #[arg(long = "emit-plan")]
    emit_plan: Option<PathBuf>,
    /// Output file; a directory in batch mode.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run over every bundle in a directory.
    #[arg(long, conflicts_with = "bundle")]
    batch: Option<PathBuf>,
    /// Worker threads for --batch.
    #[arg(long, default_value_t = 1, requires = "batch", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CommandArg {
    Analyze,
    Fix,
    Replay,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        CommandArg::Analyze => Command::Analyze,
        CommandArg::Fix => Command::Fix,
        CommandArg::Replay => Command::Replay,
    };
    let dump = if args.dump_traces {
        Some(Dump::Traces)
    } else if args.dump_cfg {
        Some(Dump::Cfg)
    } else if args.dump_deps {
        Some(Dump::Deps)
    } else {
        None
    };
    let config = RunConfig {
        command,
        timeout: Duration::from_secs(args.timeout),
        loop_cap: args.loop_cap,
        dump,
        emit_plan: args.emit_plan,
        out: args.out,
        quiet: false,
    };
    let code = match (args.batch, args.bundle) {
        (Some(dir), _) => batch::run(&dir, &config, args.jobs as usize),
        (None, Some(path)) => commands::run_one(&path, &config).exit_code(),
        (None, None) => {
            eprintln!("error: a bundle path or --batch DIR is required");
            1
        }
    };
    ExitCode::from(code)
}
