//! Config-driven experiment runner.
//!
//! Subcommands select the pipeline declared in the experiment file (they
//! must agree, so a config is a complete record of what ran):
//!
//!   otoc hartree-run     --config FILE [--out DIR] [--dt X] [--threads K] [--quiet]
//!   otoc otoc-series     ...
//!   otoc wick-check      ...
//!   otoc oracle-converge ...
//!   otoc bogo-spectrum   ...
//!
//! Exit codes: 0 success, 2 config error, 3 tolerance violation,
//! 4 resource cap exceeded.

use std::process::ExitCode;

use otoc_cli::config::ExperimentConfig;
use otoc_cli::pipelines::{self, RunContext, RunError};

struct Args {
    subcommand: String,
    config_path: String,
    out_override: Option<String>,
    dt_override: Option<f64>,
    threads: usize,
    quiet: bool,
}

fn usage() -> String {
    "usage: otoc <hartree-run|otoc-series|wick-check|oracle-converge|bogo-spectrum> \
     --config FILE [--out DIR] [--dt X] [--threads K] [--quiet]"
        .to_string()
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    if argv.is_empty() {
        return Err(usage());
    }
    let subcommand = argv[0].clone();
    let known = [
        "hartree-run",
        "otoc-series",
        "wick-check",
        "oracle-converge",
        "bogo-spectrum",
    ];
    if !known.contains(&subcommand.as_str()) {
        return Err(format!("unknown subcommand '{subcommand}'\n{}", usage()));
    }
    let mut config_path = None;
    let mut out_override = None;
    let mut dt_override = None;
    let mut threads = 1usize;
    let mut quiet = false;
    let mut i = 1;
    while i < argv.len() {
        match argv[i].as_str() {
            "--config" => {
                i += 1;
                config_path = Some(argv.get(i).ok_or("--config needs a path")?.clone());
            }
            "--out" => {
                i += 1;
                out_override = Some(argv.get(i).ok_or("--out needs a directory")?.clone());
            }
            "--dt" => {
                i += 1;
                let v = argv.get(i).ok_or("--dt needs a value")?;
                dt_override = Some(v.parse().map_err(|_| format!("--dt: bad number '{v}'"))?);
            }
            "--threads" => {
                i += 1;
                let v = argv.get(i).ok_or("--threads needs a count")?;
                threads = v
                    .parse()
                    .map_err(|_| format!("--threads: bad count '{v}'"))?;
                if threads == 0 {
                    return Err("--threads must be at least 1".into());
                }
            }
            "--quiet" => quiet = true,
            other => return Err(format!("unknown flag '{other}'\n{}", usage())),
        }
        i += 1;
    }
    Ok(Args {
        subcommand,
        config_path: config_path.ok_or_else(|| format!("--config is required\n{}", usage()))?,
        out_override,
        dt_override,
        threads,
        quiet,
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&args.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config '{}': {e}", args.config_path);
            return ExitCode::from(2);
        }
    };
    let mut cfg = match ExperimentConfig::from_text(&text, args.dt_override) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if cfg.pipeline.name() != args.subcommand {
        eprintln!(
            "config error: subcommand '{}' does not match pipeline '{}' in the config",
            args.subcommand,
            cfg.pipeline.name()
        );
        return ExitCode::from(2);
    }
    if let Some(out) = args.out_override {
        cfg.out_dir = out;
    }
    let ctx = RunContext {
        threads: args.threads,
        quiet: args.quiet,
    };
    match pipelines::run(&cfg, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Tolerance(msg)) => {
            eprintln!("tolerance violation: {msg}");
            ExitCode::from(3)
        }
        Err(RunError::ResourceCap(msg)) => {
            eprintln!("resource cap: {msg}");
            ExitCode::from(4)
        }
        Err(RunError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(RunError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(3)
        }
    }
}
