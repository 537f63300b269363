use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use chemostokes::exponents::LadderKind;
use chemostokes::solver::{read_manifest, run, SimConfig};

mod exponents;
mod sweep;

/// Regularized chemotaxis-Stokes simulator and exponent toolkit.
#[derive(Parser, Debug)]
#[command(name = "chemostokes", version, about)]
struct Cli {
    /// Run directory (simulate) or sweep root (sweep); overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Worker threads for the data-parallel field updates.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized initial data and property checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write its run directory.
    Simulate {
        #[arg(long, value_name = "PATH", required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Continue from the last snapshot listed in this manifest.
        #[arg(long, value_name = "MANIFEST")]
        resume: Option<PathBuf>,
    },
    /// Run a family of simulations along one parameter axis.
    Sweep {
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
    },
    /// Threshold certificate, or a bootstrap ladder as CSV.
    Exponents {
        #[arg(long)]
        m: f64,
        #[arg(long, value_parser = parse_ladder)]
        ladder: Option<LadderKind>,
        #[arg(long, default_value_t = 1e6)]
        cap: f64,
        /// Starting exponent of the linear ladder.
        #[arg(long, default_value_t = 1.0)]
        p0: f64,
    },
    /// Randomized property suite of the regularization family.
    Regcheck {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

fn parse_ladder(s: &str) -> std::result::Result<LadderKind, String> {
    s.parse()
}

/// Exit status of a failed command: 2 for numerical failures, 1 otherwise.
fn failure_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<chemostokes::Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(failure_code(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate { config, resume } => simulate(config, resume, cli.output_dir, cli.seed),
        Command::Sweep { spec } => sweep::cmd_sweep(&spec, cli.output_dir, cli.threads, cli.seed),
        Command::Exponents { m, ladder, cap, p0 } => exponents::cmd_exponents(m, ladder, cap, p0),
        Command::Regcheck { samples } => regcheck(samples, cli.seed.unwrap_or(0)),
    }
}

fn simulate(
    config: Option<PathBuf>,
    resume: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut cfg = match (&config, &resume) {
        (Some(path), _) => SimConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(manifest)) => read_manifest(manifest)
            .with_context(|| format!("reading {}", manifest.display()))?
            .config,
        (None, None) => unreachable!("clap requires --config or --resume"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = output_dir {
        cfg.output.dir = dir;
    }
    let dir = cfg.output.dir.clone();
    if cfg.dim == 2 {
        println!("note: 2D run, results are qualitative (the m > 9/8 threshold is a 3D statement)");
    }
    let out = run(&cfg, &dir, resume.as_deref())?;
    let passed = out.checks.iter().filter(|c| c.pass).count();
    for c in &out.checks {
        println!(
            "{:<24} {} max deviation {:e} at t = {}",
            c.name,
            if c.pass { "pass" } else { "FAIL" },
            c.max_deviation,
            c.at_time
        );
    }
    println!(
        "run complete: {} samples to t = {}, {}/{} checks passed, output in {}",
        out.records.len(),
        out.final_state.t,
        passed,
        out.checks.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn regcheck(samples: usize, seed: u64) -> Result<ExitCode> {
    let checks = chemostokes::regularization::property_suite(samples, seed);
    let mut failed = 0;
    for c in &checks {
        println!(
            "{:<26} {} ({} failures / {} samples)",
            c.name,
            if c.passed() { "pass" } else { "FAIL" },
            c.failures,
            c.samples
        );
        if !c.passed() {
            failed += 1;
        }
    }
    println!("{} passed, {} failed", checks.len() - failed, failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
