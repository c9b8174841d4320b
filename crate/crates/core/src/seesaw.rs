//! Alternating optimization of testers and estimators.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{initial_estimators, update_all_estimators, CostKernel, EstimatorSet};
use crate::error::{Error, Result};
use crate::prior::HypothesisSet;
use crate::sdp::SdpOptions;
use crate::testers::{build_objective, score, Backend, ChannelDims, SolveReport, StrategyClass, TesterProgram, TesterSet};

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SeesawConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub n_outcomes: usize,
    pub sdp: SdpOptions,
    pub backend: Backend,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iters: 50,
            n_restarts: 5,
            seed: 0,
            n_outcomes: 27,
            sdp: SdpOptions::default(),
            backend: Backend::Complex,
        }
    }
}

impl SeesawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("seesaw epsilon must be positive".into()));
        }
        if self.max_iters == 0 || self.n_restarts == 0 || self.n_outcomes == 0 {
            return Err(Error::InvalidParameter("max_iters, n_restarts and n_outcomes must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a seesaw run needs apart from its settings.
#[derive(Clone, Debug)]
pub struct SeesawProblem {
    pub program: Arc<TesterProgram>,
    pub hypotheses: HypothesisSet,
    pub kernel: CostKernel,
}

impl SeesawProblem {
    /// `hypotheses` must carry Choi powers for `class.copies` uses.
    pub fn new(class: StrategyClass, dims: ChannelDims, hypotheses: HypothesisSet, kernel: CostKernel) -> Result<Self> {
        Ok(Self { program: Arc::new(TesterProgram::new(class, dims)?), hypotheses, kernel })
    }

    pub fn with_program(program: Arc<TesterProgram>, hypotheses: HypothesisSet, kernel: CostKernel) -> Self {
        Self { program, hypotheses, kernel }
    }

    pub fn class(&self) -> StrategyClass {
        self.program.class
    }

    /// The same problem solved with `backend`.
    fn on_backend(&self, backend: Backend) -> std::borrow::Cow<'_, Self> {
        if self.program.backend == backend {
            std::borrow::Cow::Borrowed(self)
        } else {
            let program = Arc::new((*self.program).clone().with_backend(backend));
            std::borrow::Cow::Owned(Self { program, hypotheses: self.hypotheses.clone(), kernel: self.kernel })
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Score after the tester step.
    pub tester_score: f64,
    /// Score after the estimator step.
    pub score: f64,
    /// True when the new SDP testers were rejected in favour of the previous ones.
    pub kept_previous: bool,
    pub sdp: SolveReport,
}

#[derive(Clone, Debug)]
pub struct SeesawRun {
    pub start: usize,
    pub score: f64,
    pub testers: TesterSet,
    pub estimators: EstimatorSet,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl SeesawRun {
    pub fn trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.score).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub best: SeesawRun,
    pub start_scores: Vec<f64>,
    /// Fraction of starts within `1e-3` of the best score.
    pub agreement: f64,
    /// Largest step against the optimization direction over every start,
    /// counting both half-steps of each iteration; zero when monotone.
    pub largest_regression: f64,
}

impl SeesawResult {
    pub fn score(&self) -> f64 {
        self.best.score
    }

    /// CSV with one line per iteration of the best start.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,tester_score,score,kept_previous,sdp_iterations,sdp_status,relative_gap")?;
        for r in &self.best.iterations {
            writeln!(
                out,
                "{},{:.12},{:.12},{},{},{:?},{:.3e}",
                r.iteration, r.tester_score, r.score, r.kept_previous, r.sdp.iterations, r.sdp.status, r.sdp.relative_gap
            )?;
        }
        Ok(())
    }
}

/// One seesaw from the given initial estimators.
pub fn run_from(problem: &SeesawProblem, cfg: &SeesawConfig, start: usize, init: EstimatorSet) -> Result<SeesawRun> {
    let problem = &*problem.on_backend(cfg.backend);
    let h = &problem.hypotheses;
    let kernel = problem.kernel;
    let dir = kernel.direction();
    let mut estimators = init;
    let mut current: Option<(TesterSet, f64)> = None;
    let mut iterations = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        let wrap = |e: Error| Error::Seesaw { iteration: it, source: Box::new(e) };
        let objective = build_objective(h, kernel, &estimators).map_err(wrap)?;
        let (fresh, report) = problem.program.solve(&objective, &cfg.sdp).map_err(wrap)?;
        let mut kept_previous = false;
        let (testers, tester_score) = match current.take() {
            Some((old, old_score)) if !dir.better(report.value, old_score) => {
                kept_previous = true;
                (old, old_score)
            }
            _ => (fresh, report.value),
        };

        let updated = update_all_estimators(kernel, &testers, h, &estimators).map_err(wrap)?;
        let new_objective = build_objective(h, kernel, &updated).map_err(wrap)?;
        let new_score = score(&testers, &new_objective).map_err(wrap)?;
        let (next_estimators, next_score) = if dir.better(tester_score, new_score) {
            (estimators, tester_score)
        } else {
            (updated, new_score)
        };
        estimators = next_estimators;
        let previous = iterations.last().map(|r: &IterationRecord| r.score);
        iterations.push(IterationRecord { iteration: it, tester_score, score: next_score, kept_previous, sdp: report });
        current = Some((testers, next_score));
        log::debug!("start {start} iteration {it}: score {next_score:.10}");
        if let Some(prev) = previous {
            if (next_score - prev).abs() < cfg.epsilon {
                converged = true;
                break;
            }
        }
    }
    let (testers, score) = current.expect("at least one iteration");
    Ok(SeesawRun { start, score, testers, estimators, iterations, converged })
}

fn regression(run: &SeesawRun, dir: crate::cost::Direction) -> f64 {
    let steps: Vec<f64> = run.iterations.iter().flat_map(|r| [r.tester_score, r.score]).collect();
    steps.windows(2).map(|w| -dir.gain(w[1], w[0])).filter(|d| *d > 0.0).fold(0.0, f64::max)
}

/// Multi-start seesaw: `cfg.n_restarts` random starts followed by any
/// caller-provided starting estimators. The first start reaching the best
/// score wins ties.
pub fn run_seesaw_with_starts(problem: &SeesawProblem, cfg: &SeesawConfig, extra: &[EstimatorSet]) -> Result<SeesawResult> {
    cfg.validate()?;
    let problem = &*problem.on_backend(cfg.backend);
    let mut starts: Vec<EstimatorSet> = (0..cfg.n_restarts)
        .map(|r| initial_estimators(&problem.hypotheses, cfg.n_outcomes, derive_seed(cfg.seed, r as u64)))
        .collect();
    for e in extra {
        if e.len() != cfg.n_outcomes {
            return Err(Error::Dimension(format!("starting estimators have {} outcomes, expected {}", e.len(), cfg.n_outcomes)));
        }
        starts.push(e.clone());
    }
    let runs: Vec<SeesawRun> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, init)| run_from(problem, cfg, k, init))
        .collect::<Result<_>>()?;
    let dir = problem.kernel.direction();
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if dir.better(r.score, runs[best].score) {
            best = k;
        }
    }
    let start_scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let best_score = start_scores[best];
    let agreement = start_scores.iter().filter(|s| (*s - best_score).abs() <= 1e-3).count() as f64 / start_scores.len() as f64;
    if agreement < 0.8 {
        log::warn!("only {:.0}% of seesaw starts reached the best score {best_score:.6}", agreement * 100.0);
    }
    let largest_regression = runs.iter().map(|r| regression(r, dir)).fold(0.0, f64::max);
    let best = runs.into_iter().nth(best).expect("best index is valid");
    Ok(SeesawResult { best, start_scores, agreement, largest_regression })
}

/// The estimator-grid alternative to the seesaw: a single tester solve with
/// the estimates held fixed. With many outcomes spread over the prior the
/// score approaches the joint optimum from the feasible side.
pub fn solve_fixed_estimators(problem: &SeesawProblem, cfg: &SeesawConfig, estimators: EstimatorSet) -> Result<SeesawResult> {
    let problem = &*problem.on_backend(cfg.backend);
    let wrap = |e: Error| Error::Seesaw { iteration: 1, source: Box::new(e) };
    let objective = build_objective(&problem.hypotheses, problem.kernel, &estimators).map_err(wrap)?;
    let (testers, report) = problem.program.solve(&objective, &cfg.sdp).map_err(wrap)?;
    let value = report.value;
    let record = IterationRecord { iteration: 1, tester_score: value, score: value, kept_previous: false, sdp: report };
    let best = SeesawRun { start: 0, score: value, testers, estimators, iterations: vec![record], converged: true };
    Ok(SeesawResult { best, start_scores: vec![value], agreement: 1.0, largest_regression: 0.0 })
}

/// Starting estimators that reproduce a known tester set: the optimal
/// estimate for each of its outcomes, padded to `n_outcomes` by repeating
/// the last one. Seeding a seesaw with them guarantees a score at least as
/// good as `testers` whenever they are feasible for the problem's class.
pub fn warm_start(problem: &SeesawProblem, testers: &TesterSet, n_outcomes: usize) -> Result<EstimatorSet> {
    if testers.len() > n_outcomes {
        return Err(Error::Dimension(format!("{} tester outcomes exceed the {n_outcomes} available", testers.len())));
    }
    let h = &problem.hypotheses;
    let fallback = initial_estimators(h, testers.len(), 0);
    let mut est = update_all_estimators(problem.kernel, testers, h, &fallback)?.estimates;
    let last = est.last().cloned().ok_or_else(|| Error::InvalidParameter("empty tester set".into()))?;
    est.resize(n_outcomes, last);
    Ok(EstimatorSet::new(est))
}

pub fn run_seesaw(problem: &SeesawProblem, cfg: &SeesawConfig) -> Result<SeesawResult> {
    run_seesaw_with_starts(problem, cfg, &[])
}
