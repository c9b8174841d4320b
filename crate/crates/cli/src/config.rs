//! Experiment configuration: a versioned TOML document.

use std::path::{Path, PathBuf};

use qmetro::channels::ChannelModel;
use qmetro::cost::CostKernel;
use qmetro::greedy::{GreedyConfig, ResampleConfig};
use qmetro::prior::{haar_prior_su2, sine_exp_prior, uniform_prior, HypothesisSet, SamplingMode};
use qmetro::sdp::SdpOptions;
use qmetro::seesaw::SeesawConfig;
use qmetro::testers::{default_n_outcomes, Backend, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub channel: ChannelModel,
    pub prior: PriorConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub seesaw: SeesawSection,
    #[serde(default)]
    pub greedy: GreedySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    HaarSu2 {
        n_points: usize,
        #[serde(default)]
        mode: SamplingMode,
    },
    Uniform {
        lo: f64,
        hi: f64,
        n_points: usize,
    },
    SineExp {
        alpha: f64,
        lo: f64,
        hi: f64,
        n_points: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub kernel: CostKernel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub classes: Vec<StrategyKind>,
    pub copies: usize,
    /// Seed each class with the optimum of the class below it.
    pub warm_start: bool,
    /// Also seed sequential and general classes with the exact greedy comb.
    pub seed_from_greedy: bool,
    /// Write circuit realizations of the optimal testers.
    pub realize: bool,
    pub method: Method,
}

/// `seesaw` alternates tester and estimator updates; `estimator_grid` fixes
/// the estimators to `n_outcomes` evenly spaced hypotheses and solves one SDP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Seesaw,
    EstimatorGrid,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            classes: vec![StrategyKind::Parallel, StrategyKind::Sequential, StrategyKind::General],
            copies: 2,
            warm_start: true,
            seed_from_greedy: false,
            realize: false,
            method: Method::Seesaw,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeesawSection {
    pub epsilon: f64,
    pub max_iters: usize,
    pub n_restarts: usize,
    /// Defaults to 27, or 20 for thermometry.
    pub n_outcomes: Option<usize>,
    pub tol: f64,
    pub max_sdp_iters: usize,
    pub backend: Backend,
}

impl Default for SeesawSection {
    fn default() -> Self {
        let s = SeesawConfig::default();
        Self {
            epsilon: s.epsilon,
            max_iters: s.max_iters,
            n_restarts: s.n_restarts,
            n_outcomes: None,
            tol: s.sdp.tol,
            max_sdp_iters: s.sdp.max_iter,
            backend: s.backend,
        }
    }
}

impl SeesawSection {
    pub fn build(&self, channel: &ChannelModel, seed: u64) -> SeesawConfig {
        SeesawConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            n_restarts: self.n_restarts,
            seed,
            n_outcomes: self.n_outcomes.unwrap_or_else(|| default_n_outcomes(channel)),
            sdp: SdpOptions { tol: self.tol, max_iter: self.max_sdp_iters },
            backend: self.backend,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedySection {
    pub n_traj: usize,
    pub rounds: usize,
    pub batch: usize,
    pub kind: StrategyKind,
    /// Also run the non-adaptive variant on the same random streams.
    pub compare_non_adaptive: bool,
    pub resample: ResampleConfig,
    pub seesaw: SeesawSection,
}

impl Default for GreedySection {
    fn default() -> Self {
        let g = GreedyConfig::default();
        Self {
            n_traj: g.n_traj,
            rounds: g.rounds,
            batch: g.batch,
            kind: g.kind,
            compare_non_adaptive: true,
            resample: g.resample,
            seesaw: SeesawSection::default(),
        }
    }
}

impl GreedySection {
    pub fn build(&self, channel: &ChannelModel, seed: u64, adaptive: bool) -> GreedyConfig {
        GreedyConfig {
            n_traj: self.n_traj,
            rounds: self.rounds,
            batch: self.batch,
            kind: self.kind,
            adaptive,
            seed,
            resample: self.resample.clone(),
            seesaw: self.seesaw.build(channel, seed),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted paths into this document, all set to the same value.
    pub parameters: Vec<String>,
    pub values: Vec<f64>,
    /// Add greedy (and non-adaptive) curves to every point.
    #[serde(default)]
    pub greedy: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs") }
    }
}

/// Everything an engine needs, built from a validated config.
pub struct Experiment {
    pub channel: ChannelModel,
    pub prior: HypothesisSet,
    pub kernel: CostKernel,
}

impl Config {
    /// Reads a TOML config, or the config echoed in a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            return Self::from_manifest(&text);
        }
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema(e.message().trim().to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().message().trim().to_string();
            CliError::Schema(if path == "." { msg } else { format!("{path}: {msg}") })
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_manifest(text: &str) -> Result<Self, CliError> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Schema(format!("manifest: {e}")))?;
        let echo = doc.get("config").ok_or_else(|| CliError::Schema("manifest: no config field".into()))?;
        let cfg: Config = serde_path_to_error::deserialize(echo).map_err(|e| CliError::Schema(format!("config.{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Schema(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        if self.optimize.copies == 0 {
            return bad("optimize.copies: must be at least 1".into());
        }
        if self.optimize.classes.is_empty() {
            return bad("optimize.classes: list at least one class".into());
        }
        if self.optimize.copies > 2 && self.optimize.classes.contains(&StrategyKind::General) {
            return bad("optimize.classes: the general class supports at most 2 copies".into());
        }
        for (name, s) in [("seesaw", &self.seesaw), ("greedy.seesaw", &self.greedy.seesaw)] {
            let cfg = s.build(&self.channel, self.seed);
            cfg.validate().map_err(|e| CliError::Schema(format!("{name}: {e}")))?;
            if !(s.tol > 0.0) || s.max_sdp_iters == 0 {
                return bad(format!("{name}: tol and max_sdp_iters must be positive"));
            }
        }
        self.greedy
            .build(&self.channel, self.seed, true)
            .validate()
            .map_err(|e| CliError::Schema(format!("greedy: {e}")))?;
        if self.optimize.seed_from_greedy && self.greedy.rounds * self.greedy.batch != self.optimize.copies {
            return bad(format!(
                "optimize.seed_from_greedy: greedy.rounds × greedy.batch = {} must equal optimize.copies = {}",
                self.greedy.rounds * self.greedy.batch,
                self.optimize.copies
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.parameters.is_empty() {
                return bad("sweep.parameters: list at least one parameter".into());
            }
            if sweep.values.is_empty() {
                return bad("sweep.values: list at least one value".into());
            }
            let doc = toml::Value::try_from(self).expect("configs always serialize");
            for p in &sweep.parameters {
                lookup(&doc, p).map_err(CliError::Schema)?;
            }
        }
        let q = self.channel.cost_reference().param_dim();
        if q != self.cost.kernel.param_dim() {
            return bad(format!(
                "cost.kernel: {:?} needs a {}-parameter channel, the channel has {q}",
                self.cost.kernel,
                self.cost.kernel.param_dim()
            ));
        }
        let prior_dim = match self.prior {
            PriorConfig::HaarSu2 { .. } => 3,
            _ => 1,
        };
        if prior_dim != q {
            return bad(format!("prior.kind: a {prior_dim}-parameter prior does not fit a {q}-parameter channel"));
        }
        self.experiment().map(|_| ())
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let prior = match &self.prior {
            PriorConfig::HaarSu2 { n_points, mode } => haar_prior_su2(*n_points, *mode, self.seed),
            PriorConfig::Uniform { lo, hi, n_points } => uniform_prior(*lo, *hi, *n_points),
            PriorConfig::SineExp { alpha, lo, hi, n_points } => sine_exp_prior(*alpha, *lo, *hi, *n_points),
        }
        .map_err(|e| CliError::Schema(format!("prior: {e}")))?;
        // Probe the channel once so bad parameters surface as schema errors.
        let theta = prior.points()[0].clone();
        self.channel.choi(&theta).map_err(|e| CliError::Schema(format!("channel: {e}")))?;
        Ok(Experiment { channel: self.channel.clone(), prior, kernel: self.cost.kernel })
    }

    /// Apply command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, tol: Option<f64>) -> Result<Self, CliError> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(tol) = tol {
            self.seesaw.tol = tol;
            self.greedy.seesaw.tol = tol;
        }
        self.validate()?;
        Ok(self)
    }

    /// A copy with every dotted `path` set to `value`. Integer fields take
    /// the value rounded; it must then be integral.
    pub fn with_value(&self, paths: &[String], value: f64) -> Result<Self, CliError> {
        let mut doc = toml::Value::try_from(self).expect("configs always serialize");
        for path in paths {
            let slot = lookup_mut(&mut doc, path).map_err(CliError::Schema)?;
            *slot = match slot {
                toml::Value::Integer(_) => {
                    if value.fract() != 0.0 || value < 0.0 {
                        return Err(CliError::Schema(format!("{path}: {value} is not a non-negative integer")));
                    }
                    toml::Value::Integer(value as i64)
                }
                toml::Value::Float(_) => toml::Value::Float(value),
                other => return Err(CliError::Schema(format!("{path}: cannot sweep a {} field", other.type_str()))),
            };
        }
        let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn lookup<'a>(doc: &'a toml::Value, path: &str) -> Result<&'a toml::Value, String> {
    let mut cur = doc;
    for part in path.split('.') {
        cur = cur.get(part).ok_or_else(|| format!("sweep parameter {path}: no field {part}"))?;
    }
    Ok(cur)
}

fn lookup_mut<'a>(doc: &'a mut toml::Value, path: &str) -> Result<&'a mut toml::Value, String> {
    let mut cur = doc;
    for part in path.split('.') {
        cur = cur.get_mut(part).ok_or_else(|| format!("sweep parameter {path}: no field {part}"))?;
    }
    Ok(cur)
}
