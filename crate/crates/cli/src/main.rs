use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cqed_core::{Error, Units};

mod commands;
mod config;

use commands::{Context, Output};
use config::ScenarioConfig;

#[derive(Parser)]
#[command(name = "cqed", version, about = "Cavity-QED entangled photon-train simulations")]
struct Cli {
    /// Scenario JSON file; omitted sections use the reference scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config; default ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Unit of the rates in the config file.
    #[arg(long, global = true, value_enum)]
    units: Option<UnitsArg>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lift the resource caps on mode counts and sample sizes.
    #[arg(long, global = true)]
    allow_large: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    #[value(name = "rad_s")]
    RadS,
    #[value(name = "Hz")]
    Hz,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral envelope of one generation window.
    Envelope,
    /// Markov envelope against the exact discrete reservoir over an (N, W) sweep.
    ValidateMarkov,
    /// Two-photon factorization error for two successive windows.
    Factorization,
    /// Ensemble fidelity curves under imperfect recycling.
    FidelitySweep {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Search a pulse program producing a target state.
    Engineer {
        /// Engineer GHZ(n) instead of the configured target.
        #[arg(long)]
        ghz: Option<usize>,
    },
    /// Spontaneous emission, intensity noise and repetition-rate estimates.
    Feasibility,
    /// Build (|s⟩ ± |s̄⟩)/√2, or run the configured schedule.
    Ghz {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long, value_parser = commands::parse_sign)]
        sign: Option<cqed_core::Sign>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::NonFinite(_)) {
            Failure::Numerical(e.to_string())
        } else if matches!(e, Error::Io(_)) {
            Failure::Io(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(u) = cli.units {
        cfg.units = Some(match u {
            UnitsArg::RadS => Units::RadPerSecond,
            UnitsArg::Hz => Units::Hertz,
        });
    }
    match &cli.command {
        Command::FidelitySweep { samples: Some(s) } => cfg.fidelity.samples = *s,
        Command::Engineer { ghz: Some(n) } => {
            cfg.engineer.target = None;
            cfg.engineer.ghz = *n;
        }
        Command::Ghz { n, pattern, sign } => {
            if let Some(n) = n {
                cfg.ghz.n = *n;
                cfg.ghz.pattern = None;
            }
            if pattern.is_some() {
                cfg.ghz.pattern = pattern.clone();
            }
            if let Some(s) = sign {
                cfg.ghz.sign = *s;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

/// Writes every file through a temporary sibling and a rename.
fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut staged = Vec::new();
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io(e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).map_err(io)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(Output, PathBuf), Failure> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let ctx = Context {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        allow_large: cli.allow_large,
    };
    let out = match &cli.command {
        Command::Envelope => commands::envelope(&cfg, &ctx)?,
        Command::ValidateMarkov => commands::validate_markov(&cfg, &ctx)?,
        Command::Factorization => commands::factorization(&cfg, &ctx)?,
        Command::FidelitySweep { .. } => commands::fidelity_sweep(&cfg, &ctx)?,
        Command::Engineer { .. } => commands::engineer(&cfg, &ctx)?,
        Command::Feasibility => commands::feasibility(&cfg, &ctx)?,
        Command::Ghz { .. } => commands::ghz(&cfg, &ctx)?,
    };
    let dir = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok((out, dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(out, dir)| {
        write_all(&dir, &out.files)?;
        Ok((out, dir))
    });
    match result {
        Ok((out, dir)) => {
            // the files are already written; a closed stdout is not a failure
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.summary);
            for (name, _) in &out.files {
                let _ = writeln!(stdout, "wrote {}", dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(1)
        }
    }
}
