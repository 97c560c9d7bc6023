use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stirap_cli::{figure_preset, run, CliError, ExperimentConfig, Format, Kind, PRESETS};

#[derive(Parser)]
#[command(name = "cqed-stirap", version, about = "Photon transfer along cavity-QED chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory through the pulse sequence.
    Sweep(Common),
    /// Stationary branch over the protocol.
    Branch(Common),
    /// Lyapunov series at fixed protocol times.
    Lyapunov(Common),
    /// Lyapunov profile and chaotic window.
    Window(Common),
    /// Phase-space spreading of perturbed samples.
    Ensemble(Common),
    /// Efficiency against sweep rate, with 95% bounds.
    Scan(Common),
    /// Many-body propagation and comparison with the mean field.
    Quantum(Common),
    /// Slow bound below the Lyapunov peak for each coupling.
    BoundCheck(Common),
    /// Print preset names, or one preset as JSON.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on parallel workers (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn load(kind: Kind, c: Common) -> Result<(ExperimentConfig, Option<usize>), CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => figure_preset(name)?,
        _ => return Err(CliError::Validation("give exactly one of --config or --preset".into())),
    };
    if cfg.kind() != kind {
        return Err(CliError::Validation(format!(
            "configuration is a {} experiment, not {}",
            cfg.kind().name(),
            kind.name()
        )));
    }
    if let Some(out) = c.out {
        cfg.out = out;
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.workers == Some(0) {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    Ok((cfg, c.workers))
}

fn execute(kind: Kind, c: Common) -> Result<(), CliError> {
    let (cfg, workers) = load(kind, c)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))?;
    let manifest = pool.install(|| run(cfg))?;
    let dir = manifest.config.out.display().to_string();
    eprintln!("{} outputs in {dir} ({:.1} s)", manifest.outputs.len(), manifest.wall_time_s);
    match manifest.assertion {
        Some(msg) => Err(CliError::Assertion(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, common) = match cli.command {
        Command::Sweep(c) => (Kind::Sweep, c),
        Command::Branch(c) => (Kind::Branch, c),
        Command::Lyapunov(c) => (Kind::Lyapunov, c),
        Command::Window(c) => (Kind::Window, c),
        Command::Ensemble(c) => (Kind::Ensemble, c),
        Command::Scan(c) => (Kind::Scan, c),
        Command::Quantum(c) => (Kind::Quantum, c),
        Command::BoundCheck(c) => (Kind::BoundCheck, c),
        Command::Presets { name: None } => {
            let mut out = std::io::stdout().lock();
            for p in PRESETS {
                let kind = figure_preset(p).map(|c| c.kind().name()).unwrap_or("?");
                if writeln!(out, "{p}\t{kind}").is_err() {
                    break;
                }
            }
            return ExitCode::SUCCESS;
        }
        Command::Presets { name: Some(n) } => {
            return match figure_preset(&n) {
                Ok(c) => {
                    let text = serde_json::to_string_pretty(&c).expect("config serialises");
                    let _ = writeln!(std::io::stdout().lock(), "{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            };
        }
    };
    match execute(kind, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
