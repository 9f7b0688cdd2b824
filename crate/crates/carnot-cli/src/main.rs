//! Command-line entry point: corpus generation, individual checks, the full
//! verification suite, and report aggregation. Reports are deterministic
//! JSON (wall-clock timings go to a sidecar file); exit status is 0 when all
//! requested checks pass, 2 when some are inconclusive, 1 on failure or
//! config error.

mod checks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use carnot::config::RunConfig;

#[derive(Parser)]
#[command(name = "carnot", about = "Numerical verification on the Heisenberg group")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override single keys, e.g. --set resolution=49 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group axiom suite: associativity, inverses, dilations, gauge norm,
    /// ball volumes.
    GroupCheck,
    /// Horizontal calculus: commutator identity, difference-operator
    /// convergence, mean-zero structure.
    CalculusCheck,
    /// Maximal operators: lattice maximal and sharp fields, CSV export,
    /// L^p boundedness ratios, VMO modulus table.
    Maximal,
    /// Fundamental solution: normalization, homogeneity, sign, residuals,
    /// far-field potential match.
    GammaCheck,
    /// One Dirichlet solve with Γ boundary data: diagnostics, grid dump,
    /// maximum-principle report.
    Solve,
    /// Estimate checks: poincare, interpolation, lemma1, lemma2, bb1,
    /// lemma3, thm36, main, or all.
    Verify { check: String },
    /// Dump the sampled standard corpus (binary grids plus CSV slices).
    Corpus,
    /// Aggregate the JSON reports in the output directory.
    Report,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, carnot::CarnotError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            carnot::CarnotError::Config(format!("--set expects KEY=VALUE, got {kv:?}"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Ok(dir) = std::env::var("CARNOT_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match effective_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.workers > 0 {
        // Ignore the error when a pool already exists (e.g. repeated calls
        // in tests); determinism does not depend on the thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    if let Err(e) = std::fs::create_dir_all(&cfg.output_dir) {
        eprintln!("cannot create output dir {}: {e}", cfg.output_dir.display());
        return ExitCode::from(1);
    }

    let outcome = match &cli.command {
        Command::GroupCheck => checks::group_check(&cfg),
        Command::CalculusCheck => checks::calculus_check(&cfg),
        Command::Maximal => checks::maximal_check(&cfg),
        Command::GammaCheck => checks::gamma_check(&cfg),
        Command::Solve => checks::solve_check(&cfg),
        Command::Verify { check } => checks::verify(&cfg, check),
        Command::Corpus => checks::corpus_dump(&cfg),
        Command::Report => checks::summarize(&cfg),
    };
    match outcome {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
