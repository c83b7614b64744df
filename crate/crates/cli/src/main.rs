//! `homsp`: simulate HOM dip scans, estimate Hermite-Gauss parameters and
//! export plot-ready tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hom_core::estimator::Method;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "homsp", version, about = "HOM dip simulation and semiparametric HG estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated scan CSV and sidecar.
    Simulate(Common),
    /// Sweep HG parameters over ξ.
    Estimate(Common),
    /// Bootstrap significance of a negative HG parameter.
    Witness(Common),
    /// Bootstrap spread against the bound on decimated scans.
    Bias(Common),
    /// Delay uncertainty from HG parameters.
    Delay(Common),
    /// Fit the approximate dip profile.
    Fit(Common),
    /// Tidy CSV tables for the dip, HG sweeps, spreads, R₄ and delay curves.
    ExportPlot(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scan CSV (`delay_fs,counts`); without it the model is simulated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treat the input as `position_um,counts` with this zero position.
    #[arg(long, value_name = "UM")]
    stage_zero_um: Option<f64>,
    /// Output directory (default: $HOM_OUT_DIR or the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the bootstrap replicates.
    #[arg(long)]
    bootstrap_seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    xi_min: Option<f64>,
    #[arg(long)]
    xi_max: Option<f64>,
    #[arg(long)]
    xi_steps: Option<usize>,
    /// HG order; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    order: Vec<u32>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    visibility: Option<f64>,
    /// Simulate expected counts without noise.
    #[arg(long)]
    noiseless: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "discrete" => Ok(Method::Discrete),
        "interpolated" => Ok(Method::Interpolated),
        _ => Err(format!("expected `discrete` or `interpolated`, got `{s}`")),
    }
}

impl Common {
    fn resolve(&self, command: &Command) -> hom_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if self.stage_zero_um.is_some() {
            cfg.stage_zero_um = self.stage_zero_um;
        }
        if let Some(p) = &self.out {
            cfg.output_dir = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.bootstrap_seed {
            cfg.bootstrap.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.bootstrap.replicates = r;
        }
        if self.xi_min.is_some() {
            cfg.estimator.xi_min = self.xi_min;
        }
        if self.xi_max.is_some() {
            cfg.estimator.xi_max = self.xi_max;
        }
        if let Some(n) = self.xi_steps {
            cfg.estimator.xi_steps = n;
        }
        if !self.order.is_empty() {
            if matches!(command, Command::Witness(_)) {
                cfg.witness.order = self.order[0];
            }
            cfg.estimator.orders = self.order.clone();
        }
        if let Some(m) = self.method {
            cfg.estimator.method = m;
        }
        if let Some(v) = self.visibility {
            cfg.visibility = v;
        }
        cfg.noiseless |= self.noiseless;
        cfg.resolve_output_dir();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> hom_core::Result<Vec<PathBuf>> {
    let common = match &cli.command {
        Command::Simulate(c)
        | Command::Estimate(c)
        | Command::Witness(c)
        | Command::Bias(c)
        | Command::Delay(c)
        | Command::Fit(c)
        | Command::ExportPlot(c) => c,
    };
    let cfg = common.resolve(&cli.command)?;
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Estimate(_) => commands::estimate(&cfg),
        Command::Witness(_) => {
            let (report, out) = commands::witness(&cfg)?;
            println!(
                "verdict: {:?}, interval: {:?}",
                report.verdict, report.witness_interval_fs
            );
            Ok(out)
        }
        Command::Bias(_) => commands::bias(&cfg),
        Command::Delay(_) => commands::delay(&cfg),
        Command::Fit(_) => {
            let (result, out) = commands::fit(&cfg)?;
            println!("status: {:?}, rss: {}", result.status, result.rss);
            Ok(out)
        }
        Command::ExportPlot(_) => commands::export_plot(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
