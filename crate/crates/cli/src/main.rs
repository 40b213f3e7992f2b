use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snse_core::config::RunConfig;
use snse_core::decomposition::NormMode;
use snse_core::run::{self, exit_code};
use snse_core::Error;

/// Stochastic Navier–Stokes simulator and energy-inequality verifier.
#[derive(Parser)]
#[command(name = "snse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split and dyadically decompose an initial datum.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// SNSF field file; defaults to the datum of the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run an ensemble and write per-path ledgers.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the field at every step.
        #[arg(long)]
        dense_output: bool,
    },
    /// Run the ensemble and every verification, writing reports.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Print the report table of a verify output directory.
    Report {
        /// Directory written by `verify`, or its reports.json.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    L3,
    H12,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json to re-run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `ensemble.base_seed`.
    #[arg(long)]
    seeds: Option<u64>,
    /// Number of paths; overrides `ensemble.n_paths`.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; falls back to SNSE_WORKERS.
    #[arg(long, env = "SNSE_WORKERS")]
    workers: Option<usize>,
    /// Norm pair of the cascade; overrides `cascade.mode`.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

impl Common {
    fn resolve(&self, dense: bool) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seeds {
            cfg.ensemble.base_seed = s;
        }
        if let Some(n) = self.paths {
            cfg.ensemble.n_paths = n;
        }
        if let Some(m) = self.mode {
            cfg.cascade.mode = match m {
                Mode::L3 => NormMode::L3,
                Mode::H12 => NormMode::H12,
            };
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.output.dense |= dense;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("snse: {e}");
    ExitCode::from(exit_code(e) as u8)
}

fn execute(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Decompose { common, input } => {
            let cfg = common.resolve(false)?;
            let out = cfg.output.dir.clone();
            let o = run::with_workers(common.workers, || run::cmd_decompose(&cfg, input.as_deref(), &out))??;
            let c = &o.certificate;
            println!(
                "K0 = {:.6e}, |w0| = {:.6e}, {} levels, residual {:.3e} (bound {:.3e}), certificate {}",
                c.decomposition.k0,
                c.decomposition.w0_norm,
                c.decomposition.levels.len(),
                c.reconstruction_residual,
                c.residual_bound,
                if c.pass { "ok" } else { "FAILED" }
            );
            Ok(if c.pass { 0 } else { 3 })
        }
        Command::Simulate { common, dense_output } => {
            let cfg = common.resolve(dense_output)?;
            let out = cfg.output.dir.clone();
            let o = run::with_workers(common.workers, || run::cmd_simulate(&cfg, &out))??;
            for p in o.manifest.paths.iter().filter(|p| p.error.is_some()) {
                eprintln!("path {}: {}", p.index, p.error.as_deref().unwrap_or_default());
            }
            println!("{} paths, status {:?}, output in {}", o.manifest.paths.len(), o.status, out.display());
            Ok(o.status.exit_code())
        }
        Command::Verify { common } => {
            let cfg = common.resolve(false)?;
            let out = cfg.output.dir.clone();
            let o = run::with_workers(common.workers, || run::cmd_verify(&cfg, &out))??;
            print!("{}", run::render_reports(&o.reports));
            Ok(if o.reports.all_pass { 0 } else { 4 })
        }
        Command::Report { input } => {
            let (table, pass) = run::cmd_report(&input)?;
            print!("{table}");
            Ok(if pass { 0 } else { 4 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(&e),
    }
}
