//! `pklap`: run the library's audits, certificates and solvers from a config
//! file or a bundled preset.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on a
//! configuration error.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CommandError, Options, Outcome};
use config::{parse_config, preset, RunConfig};

#[derive(Parser)]
#[command(name = "pklap", version, about = "Homoclinic solutions of discrete p_k-Laplacian equations")]
struct Cli {
    /// Config file (TOML, `version = 1`).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled config: decay, growth, single_site or remark2.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true, env = "PKLAP_OUT_DIR")]
    out: Option<PathBuf>,
    /// Report every number as ±2^e.
    #[arg(long, global = true)]
    log_domain: bool,
    /// Also write (n, k, u_k) and (n, norm_E, J) series as CSV.
    #[arg(long, global = true)]
    emit_plot_data: bool,
    /// Keep solution vectors in the JSON.
    #[arg(long, global = true)]
    full_vectors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Modulars, Luxemburg norms and the embedding constant of [vector].
    Norm,
    /// Φ, Ψ, J and the gradient of [vector].
    Energy,
    /// Audit the hypotheses on f_k.
    Check,
    /// Scan for single-spike vectors with negative energy.
    Certify,
    /// Minimize one rung.
    Solve,
    /// Minimize or certify a range of rungs.
    Ladder,
    /// Upper bounds along the tent levels c_m.
    Ricceri,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Norm => "norm",
            Command::Energy => "energy",
            Command::Check => "check",
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Ladder => "ladder",
            Command::Ricceri => "ricceri",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let text = match (&cli.config, &cli.preset) {
        (Some(path), _) => fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        (None, Some(name)) => preset(name)
            .ok_or_else(|| {
                let names: Vec<_> = config::PRESETS.iter().map(|(n, _)| *n).collect();
                format!("unknown preset `{name}` (have {})", names.join(", "))
            })?
            .to_string(),
        (None, None) => return Err("no configuration: pass --config FILE or --preset NAME".into()),
    };
    parse_config(&text).map_err(|e| e.to_string())
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let o = Options {
        log_domain: cli.log_domain,
        emit_plot_data: cli.emit_plot_data,
        full_vectors: cli.full_vectors,
    };
    match cli.command {
        Command::Norm => commands::norm(cfg, &o),
        Command::Energy => commands::energy(cfg, &o),
        Command::Check => commands::check(cfg, &o),
        Command::Certify => commands::certify(cfg, &o),
        Command::Solve => commands::solve(cfg, &o),
        Command::Ladder => commands::ladder(cfg, &o),
        Command::Ricceri => commands::ricceri(cfg, &o),
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error:\n{e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run(&cli, &cfg) {
        Ok(o) => o,
        Err(CommandError::Config(e)) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{} failed: {e}", cli.command.name());
            return ExitCode::from(1);
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.raw.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("pklap-out"));
    if let Err(e) = write_all(&dir, &outcome.files) {
        eprintln!("cannot write to {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    print!("{}", outcome.summary);
    for (name, _) in &outcome.files {
        println!("wrote {}", dir.join(name).display());
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}: verification failed", cli.command.name());
        ExitCode::from(1)
    }
}
