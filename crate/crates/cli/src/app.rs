//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plmp::diagnostics::ResidualGrid;
use plmp::transitions::ThetaMode;

use crate::commands;
use crate::config::{Experiment, ExperimentConfig, TransitionKind};

#[derive(Debug, Parser)]
#[command(name = "plmp", version, about = "Piecewise linear Markov process samplers")]
pub struct Cli {
    /// Base seed; chain k uses seed + k.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value experiment file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Full-size logistic problem (N = 10^6, p = 100) instead of the desk size.
    #[arg(long = "paper-scale", global = true)]
    pub full_scale: bool,
    /// Worker threads for independent chains.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel_chains: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub transition: Option<TransitionKind>,
    /// Bound coefficient c in c |v|.
    #[arg(long)]
    pub rate_bound_coeff: Option<f64>,
    #[arg(long)]
    pub refresh_intensity: Option<f64>,
    /// Gradient oracle calls per chain.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Number of independent chains.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub trace_points: Option<usize>,
    /// Fraction of the path left out of the plot.
    #[arg(long)]
    pub plot_skip: Option<f64>,
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Dataset CSV (default `<out>/logit/data.csv`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub prior_variance: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Asymptotic,
    Exact,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hyperspherical and BPS chains on a standard Gaussian from (10, ..., 10).
    GaussExperiment(SamplerArgs),
    /// Synthetic logistic regression data.
    GenData {
        /// Number of observations.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// SGD mode estimate plus the full gradient there.
    FitMode {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        sgd_steps: Option<usize>,
    },
    /// Control-variate sampler on the logistic posterior.
    Run {
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Stationarity residual of a transition on an (r, theta) grid.
    VerifyInvariance {
        transition: TransitionKind,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 0.5)]
        r_min: f64,
        #[arg(long, default_value_t = 4.0)]
        r_max: f64,
        #[arg(long, default_value_t = 0.2)]
        theta_min: f64,
        #[arg(long, default_value_t = 1.4)]
        theta_max: f64,
        /// Points per axis.
        #[arg(long, default_value_t = 30)]
        n_grid: usize,
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
        /// Pass threshold (1e-6 for reflections, 1e-3 for the hyperspherical maps).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Render a trace CSV as SVG.
    Traceplot {
        input: PathBuf,
        /// Output file (default: input with an .svg extension).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        skip: f64,
    },
    /// Tabulated theta' curve as CSV.
    DumpThetaTable {
        #[arg(long, default_value_t = 100)]
        p: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
    },
}

impl Cli {
    /// Config file (or defaults for `experiment`), then global flags.
    fn base_config(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path, self.full_scale)?,
            None => ExperimentConfig::defaults(experiment, self.full_scale),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        Ok(self.base_config(Experiment::Gauss)?.out)
    }
}

fn apply_sampler(config: &mut ExperimentConfig, args: &SamplerArgs) {
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { config.$field = v; })* };
    }
    set!(p, transition, rate_bound_coeff, refresh_intensity, budget, chains, trace_points, plot_skip);
    if args.no_plot {
        config.plot = false;
    }
}

fn apply_data(config: &mut ExperimentConfig, args: &DataArgs) {
    if let Some(d) = &args.data {
        config.data = Some(d.clone());
    }
    if let Some(v) = args.prior_variance {
        config.prior_variance = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
}

/// Run the parsed command and return the lines to print. An `Err` means
/// exit code 1.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let workers = cli.parallel_chains as usize;
    let mut lines = Vec::new();
    match &cli.command {
        Command::GaussExperiment(args) => {
            let mut config = cli.base_config(Experiment::Gauss)?;
            apply_sampler(&mut config, args);
            for chain in commands::gauss_experiment(&config, workers)? {
                lines.push(summary(&chain));
            }
        }
        Command::GenData { n, p } => {
            let mut config = cli.base_config(Experiment::Logit)?;
            if let Some(n) = n {
                config.n_data = *n;
            }
            if let Some(p) = p {
                config.p = *p;
            }
            let path = commands::gen_data(&config)?;
            lines.push(format!("wrote {} ({} rows, p = {})", path.display(), config.n_data, config.p));
        }
        Command::FitMode { data, sgd_steps } => {
            let mut config = cli.base_config(Experiment::Logit)?;
            apply_data(&mut config, data);
            if let Some(s) = sgd_steps {
                config.sgd_steps = *s;
            }
            config.validate()?;
            let fit = commands::fit_mode(&config)?;
            lines.push(format!(
                "wrote {} (gamma0 = {}, sgd touches = {}, tuning touches = {}, precompute touches = {})",
                fit.anchor_path.display(),
                fit.gamma0,
                fit.sgd_touches,
                fit.tuning_touches,
                fit.precompute_touches
            ));
        }
        Command::Run { sampler, data } => {
            let mut config = cli.base_config(Experiment::Logit)?;
            apply_sampler(&mut config, sampler);
            apply_data(&mut config, data);
            for chain in commands::run_sampler(&config, workers)? {
                lines.push(summary(&chain));
            }
        }
        Command::VerifyInvariance { transition, p, r_min, r_max, theta_min, theta_max, n_grid, fd_step, threshold } => {
            let grid = ResidualGrid {
                r_min: *r_min,
                r_max: *r_max,
                n_r: *n_grid,
                theta_min: *theta_min,
                theta_max: *theta_max,
                n_theta: *n_grid,
            };
            let threshold = threshold.unwrap_or_else(|| commands::default_threshold(*transition));
            let outcome = commands::verify_invariance(*transition, *p, &grid, *fd_step, threshold, &cli.out_dir()?)?;
            lines.push(format!(
                "{} p={}: max residual {:e} over {} points ({} flagged); report in {}",
                transition,
                p,
                outcome.report.max_abs_residual,
                outcome.report.points.len(),
                outcome.report.flagged,
                outcome.dir.display()
            ));
            if !outcome.passed {
                bail!("max residual {:e} exceeds threshold {:e}", outcome.report.max_abs_residual, threshold);
            }
        }
        Command::Traceplot { input, output, skip } => {
            let output = output.clone().unwrap_or_else(|| input.with_extension("svg"));
            commands::traceplot(input, &output, *skip)?;
            lines.push(format!("wrote {}", output.display()));
        }
        Command::DumpThetaTable { p, mode } => {
            let mode = match mode {
                ModeArg::Asymptotic => ThetaMode::Asymptotic,
                ModeArg::Exact => ThetaMode::ExactQuadrature,
            };
            let path = commands::dump_theta_table(*p, mode, &cli.out_dir()?)?;
            lines.push(format!("wrote {}", path.display()));
        }
    }
    Ok(lines)
}

fn summary(chain: &commands::ChainOutput) -> String {
    let l = &chain.ledger;
    format!(
        "{} seed={}: oracle_calls={} switches={} refreshes={} violations={} T={:.3} -> {}",
        chain.sampler,
        chain.seed,
        l.oracle_calls,
        l.accepted_switches,
        l.refreshes,
        l.bound_violations,
        chain.trajectory.end_time(),
        chain.dir.display()
    )
}
