use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qti_core::experiment::{load_config_file, resolve, run_experiment, Mode, Overrides};
use qti_core::Error;

/// Bayesian inversion of quantum thermal averages.
#[derive(Parser)]
#[command(name = "qti", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thermal averages of a known potential, with oracle values.
    Forward(Common),
    /// Posterior sampling of a 1-level potential.
    Invert(Common),
    /// Prediction error against noise scale.
    Stability(Common),
    /// Inversion of a 2-level system with surface hopping.
    Twolevel(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run to replay it.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full-size run and proposal counts.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "QTI_WORKERS")]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigParse { .. } | Error::ConfigValidation { .. } => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn report(e: &Error) -> ExitCode {
    let kind = match e {
        Error::ConfigParse { .. } => "config_parse",
        Error::ConfigValidation { .. } => "config_validation",
        e if e.is_numerical() => "numerical",
        Error::Io(_) => "io",
        _ => "error",
    };
    let mut body = serde_json::json!({ "error": kind, "message": e.to_string() });
    match e {
        Error::ConfigParse { line: Some(l), .. } => body["line"] = (*l).into(),
        Error::ConfigValidation { field, .. } => body["field"] = field.clone().into(),
        _ => {}
    }
    eprintln!("{body}");
    ExitCode::from(exit_code(e))
}

fn run(mode: Mode, args: Common) -> Result<ExitCode, Error> {
    let mut cfg = load_config_file(&args.config).map_err(|e| match e {
        Error::Io(io) => Error::ConfigValidation {
            field: "--config".into(),
            message: format!("{}: {io}", args.config.display()),
        },
        other => other,
    })?;
    cfg.mode = mode;
    let cfg = resolve(
        cfg,
        &Overrides {
            seed: args.seed,
            paper_scale: args.paper_scale,
            output_dir: args.out,
        },
    )?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let outcome = run_experiment(&cfg, workers)?;
    let m = &outcome.manifest;
    let summary = serde_json::json!({
        "mode": m.mode,
        "manifest": outcome.manifest_path,
        "config_hash": m.config_hash,
        "outputs": m.outputs.iter().map(|o| &o.path).collect::<Vec<_>>(),
        "wall_clock_seconds": m.wall_clock_seconds,
        "aborted": m.aborted,
    });
    println!("{summary}");
    if let Some(why) = &m.aborted {
        return Ok(report(&Error::RunAborted(why.clone())));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Forward(a) => (Mode::Forward, a),
        Command::Invert(a) => (Mode::Invert, a),
        Command::Stability(a) => (Mode::Stability, a),
        Command::Twolevel(a) => (Mode::Twolevel, a),
    };
    match run(mode, args) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}
