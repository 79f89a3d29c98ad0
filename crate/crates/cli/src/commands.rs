//! Experiment commands. Each writes its artifacts under the configured
//! output directory and returns what it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use plmp::diagnostics::{discretize, fp_residual, FPResidualReport, ResidualGrid};
use plmp::engine::{run_seeded, RunLedger, SimulationConfig};
use plmp::targets::{sgd_fit, Anchor, GradientMode, IsoGaussianTarget, LogisticData, LogisticPosterior, SgdOptions};
use plmp::transitions::{HypersphericalMap, ThetaMode, Transition};
use plmp::Trajectory;

use crate::config::{ExperimentConfig, TransitionKind};
use crate::svg::{render, TraceTable};

/// Starting point of every Gaussian chain, per coordinate.
pub const GAUSS_START: f64 = 10.0;

/// Stream offset for minibatch draws, so they never share a stream with
/// the engine's own draws.
const BATCH_STREAM: u64 = 0xba7c;

/// One finished chain and where its files went.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub sampler: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub trajectory: Trajectory,
    pub ledger: RunLedger,
    /// Data rows read by the sampler (logistic runs only).
    pub data_touches: Option<u64>,
}

/// Run `job` once per seed on up to `workers` threads. Results come back
/// in seed order whatever the scheduling.
fn run_chains<R, F>(seeds: &[u64], workers: usize, job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let result = job(seeds[i]);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.chains as u64).map(|k| config.seed.wrapping_add(k)).collect()
}

fn chain_dir(config: &ExperimentConfig, experiment: &str, sampler: &str, seed: u64) -> PathBuf {
    let dir = config.out.join(experiment).join(sampler);
    if config.chains == 1 {
        dir
    } else {
        dir.join(format!("seed_{seed}"))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?))
}

/// `trajectory.csv`, `trace.csv`, `ledger.txt` and optionally `trace.svg`.
fn write_chain(
    config: &ExperimentConfig,
    dir: &Path,
    traj: &Trajectory,
    ledger_text: &str,
    trace_coords: &[usize],
    title: &str,
) -> Result<()> {
    let mut w = create(&dir.join("trajectory.csv"))?;
    traj.write_csv(&mut w, None)?;
    w.flush()?;

    let dt = traj.duration() / (config.trace_points - 1) as f64;
    let trace = discretize(traj, dt, trace_coords)?;
    let mut w = create(&dir.join("trace.csv"))?;
    trace.write_csv(&mut w)?;
    w.flush()?;

    let mut w = create(&dir.join("ledger.txt"))?;
    w.write_all(ledger_text.as_bytes())?;
    w.flush()?;

    if config.plot {
        let table = TraceTable {
            names: trace.coords.iter().map(|c| format!("x_{c}")).collect(),
            times: trace.times.clone(),
            columns: (0..trace.coords.len()).map(|k| trace.rows.iter().map(|r| r[k]).collect()).collect(),
        };
        let svg = render(&table.skip_fraction(config.plot_skip), title);
        fs::write(dir.join("trace.svg"), svg).with_context(|| format!("cannot write {}", dir.display()))?;
    }
    Ok(())
}

fn ledger_text(sampler: &str, seed: u64, traj: &Trajectory, ledger: &RunLedger, touches: Option<u64>) -> String {
    let mut s = format!("sampler={sampler}\nseed={seed}\nend_time={}\n{ledger}", traj.end_time());
    if !s.ends_with('\n') {
        s.push('\n');
    }
    if let Some(t) = touches {
        s.push_str(&format!("data_touches={t}\n"));
    }
    s
}

/// Hyperspherical and BPS chains from `(10, ..., 10)` on the standard
/// Gaussian, one pair per seed.
pub fn gauss_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    let p = config.p;
    let hyper = if config.transition.is_hyperspherical() { config.transition } else { TransitionKind::Hyperspherical };
    let mut outputs = Vec::new();
    for kind in [hyper, TransitionKind::Bps] {
        let transition = kind.build(p)?;
        let chains = run_chains(&seeds(config), workers, |seed| {
            let mut sim = SimulationConfig::new(transition.clone(), vec![GAUSS_START; p]);
            sim.rate_bound_coeff = config.rate_bound_coeff;
            sim.refresh_intensity = config.refresh_intensity;
            sim.budget = config.budget;
            sim.seed = seed;
            let mut target = IsoGaussianTarget::new(p);
            let (trajectory, ledger) = run_seeded(&sim, &mut target)
                .with_context(|| format!("{} chain with seed {seed}", kind.name()))?;
            let dir = chain_dir(config, "gauss", kind.name(), seed);
            let text = ledger_text(kind.name(), seed, &trajectory, &ledger, None);
            write_chain(config, &dir, &trajectory, &text, &[0], &format!("{} x_0", kind.name()))?;
            Ok(ChainOutput { sampler: kind.name().into(), seed, dir, trajectory, ledger, data_touches: None })
        })?;
        outputs.extend(chains);
    }
    Ok(outputs)
}

/// Synthetic logistic data at `<out>/logit/data.csv`.
pub fn gen_data(config: &ExperimentConfig) -> Result<PathBuf> {
    let data = LogisticData::gen_synthetic(config.n_data, config.p, config.seed)?;
    let path = config.out.join("logit").join("data.csv");
    let mut w = create(&path)?;
    data.write_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn read_data(config: &ExperimentConfig) -> Result<LogisticData> {
    let path = config.data_path();
    if !path.is_file() {
        bail!("missing dataset {}; run gen-data first", path.display());
    }
    let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    LogisticData::read_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub anchor_path: PathBuf,
    pub anchor: Anchor,
    pub gamma0: f64,
    /// Rows read by SGD itself.
    pub sgd_touches: u64,
    pub tuning_touches: u64,
    /// Rows read to precompute the gradient at the anchor.
    pub precompute_touches: u64,
}

/// SGD mode estimate and the full gradient there, saved as the anchor.
pub fn fit_mode(config: &ExperimentConfig) -> Result<FitSummary> {
    let data = Arc::new(read_data(config)?);
    let options = SgdOptions {
        steps: config.sgd_steps,
        batch_size: config.batch_size,
        gamma0: None,
        seed: config.seed,
    };
    let fit = sgd_fit(data.clone(), config.prior_variance, &options)?;
    let mut post = LogisticPosterior::new(data, config.prior_variance)?;
    let anchor = post.set_anchor(fit.beta_hat.clone())?.clone();
    let precompute_touches = post.touches();

    let anchor_path = config.anchor_path();
    let mut w = create(&anchor_path)?;
    anchor.write_csv(&mut w)?;
    w.flush()?;
    let summary = format!(
        "gamma0={}\nsgd_steps={}\nbatch_size={}\nsgd_touches={}\ntuning_touches={}\nprecompute_touches={}\n",
        fit.gamma0, config.sgd_steps, config.batch_size, fit.touches, fit.tuning_touches, precompute_touches
    );
    fs::write(anchor_path.with_file_name("fit.txt"), summary)?;
    Ok(FitSummary {
        anchor_path,
        anchor,
        gamma0: fit.gamma0,
        sgd_touches: fit.touches,
        tuning_touches: fit.tuning_touches,
        precompute_touches,
    })
}

/// Control-variate sampler on the logistic posterior, started at the anchor.
pub fn run_sampler(config: &ExperimentConfig, workers: usize) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    let data = Arc::new(read_data(config)?);
    let anchor_path = config.anchor_path();
    if !anchor_path.is_file() {
        bail!("missing anchor {}; run fit-mode first", anchor_path.display());
    }
    let anchor = Anchor::read_csv(File::open(&anchor_path)?).with_context(|| format!("reading {}", anchor_path.display()))?;
    let p = data.dim();
    let kind = config.transition;
    let transition = kind.build(p)?;
    let trace_coords: Vec<usize> = (0..p.min(6)).collect();
    run_chains(&seeds(config), workers, |seed| {
        let mut post = LogisticPosterior::new(data.clone(), config.prior_variance)?;
        post.load_anchor(anchor.clone())?;
        let mut post = post.with_batches(GradientMode::ControlVariate, config.batch_size, seed ^ BATCH_STREAM)?;
        let mut sim = SimulationConfig::new(transition.clone(), anchor.beta_hat.clone());
        sim.rate_bound_coeff = config.rate_bound_coeff;
        sim.refresh_intensity = config.refresh_intensity;
        sim.budget = config.budget;
        sim.seed = seed;
        let (trajectory, ledger) =
            run_seeded(&sim, &mut post).with_context(|| format!("{} chain with seed {seed}", kind.name()))?;
        let touches = post.touches();
        let dir = chain_dir(config, "logit", kind.name(), seed);
        let text = ledger_text(kind.name(), seed, &trajectory, &ledger, Some(touches));
        write_chain(config, &dir, &trajectory, &text, &trace_coords, &format!("{} coefficients", kind.name()))?;
        Ok(ChainOutput { sampler: kind.name().into(), seed, dir, trajectory, ledger, data_touches: Some(touches) })
    })
}

#[derive(Debug, Clone)]
pub struct InvarianceOutcome {
    pub report: FPResidualReport,
    pub threshold: f64,
    pub passed: bool,
    pub dir: PathBuf,
}

/// Default pass threshold: the noise floor for the reflections, the pilot
/// value for the tabulated maps.
pub fn default_threshold(kind: TransitionKind) -> f64 {
    if kind.is_hyperspherical() {
        1e-3
    } else {
        1e-6
    }
}

pub fn verify_invariance(
    kind: TransitionKind,
    p: usize,
    grid: &ResidualGrid,
    fd_step: f64,
    threshold: f64,
    out: &Path,
) -> Result<InvarianceOutcome> {
    let transition: Transition = kind.build(p)?;
    let report = fp_residual(&transition, p, grid, fd_step)?;
    let passed = report.max_abs_residual <= threshold;
    let dir = out.join("invariance").join(format!("{}_p{p}", kind.name()));
    let mut w = create(&dir.join("report.txt"))?;
    write!(w, "{report}\nthreshold={threshold:e}\npassed={passed}\n")?;
    w.flush()?;
    let mut w = create(&dir.join("points.csv"))?;
    report.write_points_csv(&mut w)?;
    w.flush()?;
    Ok(InvarianceOutcome { report, threshold, passed, dir })
}

/// `r,theta_prime` table of the map for dimension `p`.
pub fn dump_theta_table(p: usize, mode: ThetaMode, out: &Path) -> Result<PathBuf> {
    let map = HypersphericalMap::new(p, mode)?;
    let path = out.join("theta_table").join(format!("{}_p{p}.csv", mode.name()));
    let mut w = create(&path)?;
    map.write_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// Render a trace CSV to SVG, skipping the first `skip` of the time span.
pub fn traceplot(input: &Path, output: &Path, skip: f64) -> Result<()> {
    if !(0.0..1.0).contains(&skip) {
        bail!("skip fraction {skip} must lie in [0, 1)");
    }
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let table = TraceTable::parse(&text).with_context(|| format!("parsing {}", input.display()))?;
    let title = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let svg = render(&table.skip_fraction(skip), &title);
    let mut w = create(output)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}
