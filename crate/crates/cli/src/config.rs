//! Flat `key=value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. The
//! `experiment` key picks the defaults every other key overrides, so a file
//! only needs the settings that differ.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use plmp::transitions::{HypersphericalMap, ThetaMode, Transition};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Gauss,
    Logit,
    Custom,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gauss" => Ok(Experiment::Gauss),
            "logit" => Ok(Experiment::Logit),
            "custom" => Ok(Experiment::Custom),
            _ => Err(format!("unknown experiment `{s}` (expected gauss, logit or custom)")),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Gauss => "gauss",
            Experiment::Logit => "logit",
            Experiment::Custom => "custom",
        })
    }
}

/// Transition selected by name. `hyperspherical` is the closed-form
/// asymptotic curve; `hyperspherical-exact` tabulates the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    PureReflection,
    Bps,
    Hyperspherical,
    HypersphericalExact,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 4] = [
        TransitionKind::PureReflection,
        TransitionKind::Bps,
        TransitionKind::Hyperspherical,
        TransitionKind::HypersphericalExact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransitionKind::PureReflection => "pure-reflection",
            TransitionKind::Bps => "bps",
            TransitionKind::Hyperspherical => "hyperspherical",
            TransitionKind::HypersphericalExact => "hyperspherical-exact",
        }
    }

    pub fn is_hyperspherical(self) -> bool {
        matches!(self, TransitionKind::Hyperspherical | TransitionKind::HypersphericalExact)
    }

    /// Build the transition for dimension `p`; tabulates a map when needed.
    pub fn build(self, p: usize) -> anyhow::Result<Transition> {
        Ok(match self {
            TransitionKind::PureReflection => Transition::PureReflection,
            TransitionKind::Bps => Transition::Bps,
            TransitionKind::Hyperspherical => {
                Transition::Hyperspherical(Arc::new(HypersphericalMap::new(p, ThetaMode::Asymptotic)?))
            }
            TransitionKind::HypersphericalExact => {
                Transition::Hyperspherical(Arc::new(HypersphericalMap::new(p, ThetaMode::ExactQuadrature)?))
            }
        })
    }
}

impl FromStr for TransitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        TransitionKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = TransitionKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown transition `{s}` (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub p: usize,
    /// Rows of synthetic data (`gen-data`).
    pub n_data: usize,
    /// Dataset CSV; `<out>/logit/data.csv` when unset.
    pub data: Option<PathBuf>,
    pub prior_variance: f64,
    pub transition: TransitionKind,
    pub rate_bound_coeff: f64,
    pub refresh_intensity: f64,
    pub budget: u64,
    pub batch_size: usize,
    pub sgd_steps: usize,
    pub seed: u64,
    /// Independent chains, seeded `seed, seed + 1, ...`.
    pub chains: usize,
    pub out: PathBuf,
    pub plot: bool,
    /// Rows in each discretized trace.
    pub trace_points: usize,
    /// Fraction of the path left out of the SVG plot.
    pub plot_skip: f64,
}

impl ExperimentConfig {
    /// Isotropic Gaussian run: `c = 5`, `rho = 0.2`, 10^5 gradients.
    pub fn gauss() -> Self {
        Self {
            experiment: Experiment::Gauss,
            p: 10,
            transition: TransitionKind::Hyperspherical,
            rate_bound_coeff: 5.0,
            refresh_intensity: 0.2,
            budget: 100_000,
            ..Self::logit(false)
        }
    }

    /// Logistic regression pipeline. The desk scale keeps the ratios of the
    /// full one (`sgd_steps * n = budget * n = N`) at `N = 10^4`, `p = 20`,
    /// with the bound coefficient scaled by `sqrt(N / 10^6)`.
    pub fn logit(full_scale: bool) -> Self {
        let (n_data, p, c) = if full_scale { (1_000_000, 100, 5000.0) } else { (10_000, 20, 500.0) };
        let batch_size = 10;
        Self {
            experiment: Experiment::Logit,
            p,
            n_data,
            data: None,
            prior_variance: 1e-3,
            transition: TransitionKind::Hyperspherical,
            rate_bound_coeff: c,
            refresh_intensity: 10.0,
            budget: (n_data / batch_size) as u64,
            batch_size,
            sgd_steps: n_data / batch_size,
            seed: 0,
            chains: 1,
            out: PathBuf::from("out"),
            plot: true,
            trace_points: 2000,
            plot_skip: 0.0,
        }
    }

    pub fn defaults(experiment: Experiment, full_scale: bool) -> Self {
        match experiment {
            Experiment::Gauss => Self::gauss(),
            Experiment::Logit => Self::logit(full_scale),
            Experiment::Custom => Self { experiment: Experiment::Custom, ..Self::gauss() },
        }
    }

    /// Parse a config file's text. Settings are applied on top of the
    /// defaults for its `experiment` (gauss when absent).
    pub fn parse(text: &str, full_scale: bool) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse { line, msg: format!("expected key=value, got `{content}`") });
            };
            entries.push((line, key.trim().to_string(), value.trim().to_string()));
        }
        let mut experiment = Experiment::Gauss;
        for (line, key, value) in &entries {
            if key == "experiment" {
                experiment = value.parse().map_err(|msg| ConfigError::Parse { line: *line, msg })?;
            }
        }
        let mut config = Self::defaults(experiment, full_scale);
        let mut seen = std::collections::HashSet::new();
        for (line, key, value) in &entries {
            if !seen.insert(key.clone()) {
                return Err(ConfigError::Parse { line: *line, msg: format!("duplicate key `{key}`") });
            }
            config.set(key, value).map_err(|msg| ConfigError::Parse { line: *line, msg })?;
        }
        Ok(config)
    }

    /// Read, parse and validate a config file.
    pub fn load(path: &Path, full_scale: bool) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config = Self::parse(&text, full_scale).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("`{key}` cannot be `{value}`"))
        }
        match key {
            "experiment" => self.experiment = value.parse()?,
            "p" => self.p = num(key, value)?,
            "n_data" => self.n_data = num(key, value)?,
            "data" => self.data = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "prior_variance" => self.prior_variance = num(key, value)?,
            "transition" => self.transition = value.parse()?,
            "rate_bound_coeff" => self.rate_bound_coeff = num(key, value)?,
            "refresh_intensity" => self.refresh_intensity = num(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "sgd_steps" => self.sgd_steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "chains" => self.chains = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "plot" => self.plot = num(key, value)?,
            "trace_points" => self.trace_points = num(key, value)?,
            "plot_skip" => self.plot_skip = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let min_p = match (self.experiment, self.transition.is_hyperspherical()) {
            (Experiment::Logit, _) => 6,
            (_, true) => 3,
            _ => 1,
        };
        if self.p < min_p {
            return bad(format!("p = {} is below {min_p} for this experiment and transition", self.p));
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if !(self.rate_bound_coeff > 0.0 && self.rate_bound_coeff.is_finite()) {
            return bad(format!("rate_bound_coeff = {} must be positive", self.rate_bound_coeff));
        }
        if !(self.refresh_intensity >= 0.0 && self.refresh_intensity.is_finite()) {
            return bad(format!("refresh_intensity = {} must be nonnegative", self.refresh_intensity));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return bad(format!("prior_variance = {} must be positive", self.prior_variance));
        }
        if self.batch_size == 0 || self.n_data == 0 || self.sgd_steps == 0 {
            return bad("batch_size, n_data and sgd_steps must be positive".into());
        }
        if self.chains == 0 || self.trace_points < 2 {
            return bad("chains must be positive and trace_points at least 2".into());
        }
        if !(0.0..1.0).contains(&self.plot_skip) {
            return bad(format!("plot_skip = {} must lie in [0, 1)", self.plot_skip));
        }
        if let Some(path) = &self.data {
            if !path.is_file() {
                return bad(format!("data file {} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Pipeline files live under `<out>/logit` whatever the experiment key.
    pub fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("logit").join("data.csv"))
    }

    pub fn anchor_path(&self) -> PathBuf {
        self.out.join("logit").join("anchor.csv")
    }
}

impl fmt::Display for ExperimentConfig {
    /// Every key, in the order `parse` documents them.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment={}", self.experiment)?;
        writeln!(f, "p={}", self.p)?;
        writeln!(f, "n_data={}", self.n_data)?;
        writeln!(f, "data={}", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default())?;
        writeln!(f, "prior_variance={}", self.prior_variance)?;
        writeln!(f, "transition={}", self.transition)?;
        writeln!(f, "rate_bound_coeff={}", self.rate_bound_coeff)?;
        writeln!(f, "refresh_intensity={}", self.refresh_intensity)?;
        writeln!(f, "budget={}", self.budget)?;
        writeln!(f, "batch_size={}", self.batch_size)?;
        writeln!(f, "sgd_steps={}", self.sgd_steps)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "chains={}", self.chains)?;
        writeln!(f, "out={}", self.out.display())?;
        writeln!(f, "plot={}", self.plot)?;
        writeln!(f, "trace_points={}", self.trace_points)?;
        writeln!(f, "plot_skip={}", self.plot_skip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for config in [ExperimentConfig::gauss(), ExperimentConfig::logit(false), ExperimentConfig::logit(true)] {
            let back = ExperimentConfig::parse(&config.to_string(), false).unwrap();
            assert_eq!(back, config);
        }
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# weak prior\nexperiment = logit\nprior_variance=100 # override\n\nseed=7\ntransition=bps\n";
        let config = ExperimentConfig::parse(text, false).unwrap();
        assert_eq!(config.prior_variance, 100.0);
        assert_eq!(config.seed, 7);
        assert_eq!(config.transition, TransitionKind::Bps);
        assert_eq!(config.p, 20);
        assert_eq!(config.rate_bound_coeff, 500.0);
        let again = ExperimentConfig::parse(&config.to_string(), false).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = ExperimentConfig::parse("p=3\nbudget\n", false).unwrap_err();
        assert_eq!(err, ConfigError::Parse { line: 2, msg: "expected key=value, got `budget`".into() });
        assert!(matches!(ExperimentConfig::parse("\nfoo=1", false), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("p=x", false), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("p=3\np=4", false), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(
            ExperimentConfig::parse("transition=nosuch", false),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn validation() {
        let mut config = ExperimentConfig::gauss();
        assert!(config.validate().is_ok());
        config.budget = 0;
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::gauss();
        config.p = 2;
        assert!(config.validate().is_err());
        config.transition = TransitionKind::Bps;
        assert!(config.validate().is_ok());
        config.data = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(config.validate().is_err());
    }

    #[test]
    fn transition_names() {
        for kind in TransitionKind::ALL {
            assert_eq!(kind.name().parse::<TransitionKind>().unwrap(), kind);
            assert_eq!(kind.build(5).unwrap().name(), kind.name());
        }
        assert!("nosuch".parse::<TransitionKind>().is_err());
    }
}
