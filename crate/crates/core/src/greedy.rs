//! Monte Carlo simulation of adaptive greedy (and non-adaptive) strategies.
//!
//! Trajectories advance in lock step: every round first solves the distinct
//! posteriors reached so far, then draws one outcome per trajectory. Each
//! trajectory owns an RNG stream derived from `(seed, index)`, so results do
//! not depend on how the work is scheduled.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::ChannelModel;
use crate::cost::{cost_matrix, estimators_from_likelihoods, CostKernel, EstimatorSet};
use crate::error::{Error, Result};
use crate::prior::{posterior_update, resample, ChoiCache, HypothesisSet};
use crate::seesaw::{derive_seed, run_seesaw, SeesawConfig, SeesawProblem};
use crate::operator::{CMatrix, HermitianOperator, SystemLayout};
use crate::testers::{ChannelDims, StrategyClass, StrategyKind, TesterProgram, TesterSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub enabled: bool,
    /// Resample when the effective sample size falls below this fraction of `N_H`.
    pub ess_threshold: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { enabled: false, ess_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Number of Monte Carlo trajectories `N_m`.
    pub n_traj: usize,
    /// Number of rounds `k`.
    pub rounds: usize,
    /// Channel uses per round `m`.
    pub batch: usize,
    /// Strategy class used inside each batch.
    pub kind: StrategyKind,
    /// `false` keeps the round-1 testers and only re-optimizes estimators.
    pub adaptive: bool,
    pub seed: u64,
    pub resample: ResampleConfig,
    pub seesaw: SeesawConfig,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            n_traj: 10_000,
            rounds: 2,
            batch: 1,
            kind: StrategyKind::Parallel,
            adaptive: true,
            seed: 0,
            resample: ResampleConfig::default(),
            seesaw: SeesawConfig::default(),
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.rounds == 0 || self.batch == 0 {
            return Err(Error::InvalidParameter("n_traj, rounds and batch must be positive".into()));
        }
        if self.resample.enabled && !(self.resample.ess_threshold > 0.0 && self.resample.ess_threshold <= 1.0) {
            return Err(Error::InvalidParameter("ess_threshold must lie in (0, 1]".into()));
        }
        self.seesaw.validate()
    }
}

/// Channel, prior and cost shared by every trajectory.
#[derive(Clone, Debug)]
pub struct GreedyProblem {
    pub channel: ChannelModel,
    pub prior: HypothesisSet,
    pub kernel: CostKernel,
}

impl GreedyProblem {
    pub fn new(channel: ChannelModel, prior: HypothesisSet, kernel: CostKernel) -> Self {
        Self { channel, prior, kernel }
    }
}

/// Per-round Monte Carlo statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    /// Mean of the realized cost `c(θ_true, θ̂_s)`.
    pub mean: f64,
    pub std_error: f64,
    /// Mean of the posterior-expected cost `Σ_j p_j(s) c(θ_j, θ̂_s)`; same
    /// expectation as `mean`, smaller variance.
    pub conditional_mean: f64,
    pub conditional_std_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreedyReport {
    pub rounds: Vec<RoundStats>,
    pub n_traj: usize,
    pub n_completed: usize,
    /// Trajectories stopped by a posterior with zero total mass.
    pub n_aborted: usize,
    /// Number of distinct round strategies that had to be solved.
    pub distinct_strategies: usize,
    /// Score of the round-1 strategy on the prior.
    pub first_round_score: f64,
    /// Largest seesaw score regression over all solved strategies.
    pub seesaw_regression: f64,
    pub config: GreedyConfig,
}

impl GreedyReport {
    pub fn last(&self) -> &RoundStats {
        self.rounds.last().expect("at least one round")
    }

    /// `round,mean,std_error,conditional_mean,conditional_std_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "round,mean,std_error,conditional_mean,conditional_std_error")?;
        for r in &self.rounds {
            writeln!(
                out,
                "{},{:.12},{:.12},{:.12},{:.12}",
                r.round, r.mean, r.std_error, r.conditional_mean, r.conditional_std_error
            )?;
        }
        Ok(())
    }
}

pub type CacheKey = [u8; 32];

/// SHA-256 of the weights quantized at `1e-12`, followed by the bit
/// patterns of the points (which only change after resampling).
pub fn posterior_cache_key(h: &HypothesisSet) -> CacheKey {
    let mut hasher = Sha256::new();
    for w in h.weights() {
        hasher.update(((w / 1e-12).round() as i64).to_le_bytes());
    }
    for p in h.points() {
        for x in p {
            hasher.update(x.to_bits().to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Inverse-CDF draw from a probability vector.
pub fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `P(ν | θ_j) = Tr(T_ν J_j)`, with solver-noise negatives clipped and the
/// vector renormalized.
pub fn outcome_probabilities(testers: &TesterSet, j: usize, cache: &ChoiCache) -> Result<Vec<f64>> {
    if cache.layout != *testers.layout() {
        return Err(Error::LayoutMismatch(format!("testers on {} but cache on {}", testers.layout(), cache.layout)));
    }
    let column = cache.coords.column(j);
    let raw: Vec<f64> = (0..testers.len()).map(|i| testers.coords().column(i).dot(&column)).collect();
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Probabilities(total));
    }
    if let Some(p) = raw.iter().find(|p| **p < -1e-9) {
        return Err(Error::InvalidParameter(format!("outcome probability {p:.3e} is negative")));
    }
    let clipped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let norm: f64 = clipped.iter().sum();
    Ok(clipped.into_iter().map(|p| p / norm).collect())
}

pub fn simulate_outcome<R: Rng + ?Sized>(testers: &TesterSet, j_true: usize, cache: &ChoiCache, rng: &mut R) -> Result<usize> {
    let probs = outcome_probabilities(testers, j_true, cache)?;
    Ok(categorical(&probs, rng.random()))
}

/// A solved round: testers, estimators and the cost matrix on the
/// posterior's points.
#[derive(Debug)]
pub struct RoundStrategy {
    pub testers: Arc<TesterSet>,
    pub estimators: EstimatorSet,
    pub costs: DMatrix<f64>,
    pub score: f64,
    pub regression: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Solve {
    Full,
    EstimatorsOnly,
}

/// Memoized round strategies; the first inserted value for a key wins.
#[derive(Debug, Default)]
pub struct StrategyCache {
    map: Mutex<HashMap<(CacheKey, bool), Arc<RoundStrategy>>>,
}

impl StrategyCache {
    pub fn len(&self) -> usize {
        self.map.lock().expect("strategy cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn largest_regression(&self) -> f64 {
        self.map.lock().expect("strategy cache poisoned").values().map(|s| s.regression).fold(0.0, f64::max)
    }

    fn get(&self, key: &(CacheKey, bool)) -> Option<Arc<RoundStrategy>> {
        self.map.lock().expect("strategy cache poisoned").get(key).cloned()
    }

    fn insert(&self, key: (CacheKey, bool), value: Arc<RoundStrategy>) -> Arc<RoundStrategy> {
        self.map.lock().expect("strategy cache poisoned").entry(key).or_insert(value).clone()
    }
}

struct Node {
    h: HypothesisSet,
    key: CacheKey,
}

struct Trajectory {
    rng: ChaCha8Rng,
    seed: u64,
    j_true: usize,
    node: Option<Arc<Node>>,
    realized: Vec<f64>,
    conditional: Vec<f64>,
}

struct Engine<'a> {
    problem: &'a GreedyProblem,
    cfg: &'a GreedyConfig,
    program: Arc<TesterProgram>,
    prior_cache: Arc<ChoiCache>,
    cache: StrategyCache,
}

impl Engine<'_> {
    fn solve(&self, node: &Node, how: Solve, first: Option<&RoundStrategy>) -> Result<Arc<RoundStrategy>> {
        let key = (node.key, how == Solve::Full);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let kernel = self.problem.kernel;
        let strategy = match (how, first) {
            (Solve::EstimatorsOnly, Some(first)) => {
                let like = first.testers.likelihoods(&node.h)?;
                let estimators = estimators_from_likelihoods(kernel, &node.h, &like, &first.estimators)?;
                let costs = cost_matrix(kernel, node.h.points(), &estimators)?;
                let score = expected_score(&node.h, &like, &costs);
                RoundStrategy { testers: first.testers.clone(), estimators, costs, score, regression: 0.0 }
            }
            _ => {
                let problem = SeesawProblem::with_program(self.program.clone(), node.h.clone(), kernel);
                let result = run_seesaw(&problem, &self.cfg.seesaw)?;
                let costs = cost_matrix(kernel, node.h.points(), &result.best.estimators)?;
                RoundStrategy {
                    testers: Arc::new(result.best.testers),
                    estimators: result.best.estimators,
                    costs,
                    score: result.best.score,
                    regression: result.largest_regression,
                }
            }
        };
        Ok(self.cache.insert(key, Arc::new(strategy)))
    }

    fn node(&self, h: HypothesisSet) -> Result<Node> {
        let h = if h.cache().is_some() { h } else { h.with_cache(&self.problem.channel, self.cfg.batch)? };
        let key = posterior_cache_key(&h);
        Ok(Node { h, key })
    }
}

fn expected_score(h: &HypothesisSet, like: &DMatrix<f64>, costs: &DMatrix<f64>) -> f64 {
    let w = DVector::from_column_slice(h.weights());
    like.component_mul(costs).tr_mul(&w).sum()
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run `cfg.n_traj` trajectories of `cfg.rounds` rounds with `cfg.batch`
/// channel uses each.
pub fn run_greedy(problem: &GreedyProblem, cfg: &GreedyConfig) -> Result<GreedyReport> {
    cfg.validate()?;
    let class = StrategyClass::new(cfg.kind, cfg.batch);
    let dims = ChannelDims::of(&problem.channel);
    let program = Arc::new(TesterProgram::new(class, dims)?.with_backend(cfg.seesaw.backend));
    let prior = match problem.prior.cache() {
        Some(c) if c.copies == cfg.batch && c.layout == *program.layout() => problem.prior.clone(),
        _ => problem.prior.clone().with_cache(&problem.channel, cfg.batch)?,
    };
    let prior_cache = prior.cache().expect("cache attached above").clone();
    let engine = Engine { problem, cfg, program, prior_cache, cache: StrategyCache::default() };

    let root = Arc::new(engine.node(prior.clone())?);
    let first = engine.solve(&root, Solve::Full, None)?;
    let first_round_score = first.score;

    let mut trajs: Vec<Trajectory> = (0..cfg.n_traj)
        .map(|l| {
            let seed = derive_seed(cfg.seed, l as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let j_true = categorical(prior.weights(), rng.random());
            Trajectory {
                rng,
                seed,
                j_true,
                node: Some(root.clone()),
                realized: Vec::with_capacity(cfg.rounds),
                conditional: Vec::with_capacity(cfg.rounds),
            }
        })
        .collect();

    for round in 0..cfg.rounds {
        // Distinct posteriors in first-seen order.
        let mut order: Vec<Arc<Node>> = Vec::new();
        let mut index: HashMap<CacheKey, usize> = HashMap::new();
        for t in &trajs {
            if let Some(node) = &t.node {
                index.entry(node.key).or_insert_with(|| {
                    order.push(node.clone());
                    order.len() - 1
                });
            }
        }
        let how = if round == 0 || cfg.adaptive { Solve::Full } else { Solve::EstimatorsOnly };
        let strategies: Vec<Arc<RoundStrategy>> = order
            .par_iter()
            .map(|node| engine.solve(node, how, Some(&first)))
            .collect::<Result<_>>()?;

        // Draw outcomes.
        let draws: Vec<Option<(usize, usize)>> = trajs
            .par_iter_mut()
            .map(|t| -> Result<Option<(usize, usize)>> {
                let Some(node) = &t.node else { return Ok(None) };
                let n = index[&node.key];
                let strategy = &strategies[n];
                let s = simulate_outcome(&strategy.testers, t.j_true, &engine.prior_cache, &mut t.rng)?;
                let theta = &prior.points()[t.j_true];
                t.realized.push(problem.kernel.evaluate(theta, &strategy.estimators.estimates[s])?);
                Ok(Some((n, s)))
            })
            .collect::<Result<_>>()?;

        // Posterior transitions, shared unless resampling makes them
        // trajectory specific.
        let mut transitions: Vec<(usize, usize, Option<u64>)> = Vec::new();
        let mut slot: HashMap<(usize, usize, Option<u64>), usize> = HashMap::new();
        let mut assigned = vec![None; trajs.len()];
        for (l, (t, d)) in trajs.iter().zip(&draws).enumerate() {
            if let Some((n, s)) = *d {
                let tag = cfg.resample.enabled.then(|| derive_seed(t.seed, 1_000_000 + round as u64));
                let id = *slot.entry((n, s, tag)).or_insert_with(|| {
                    transitions.push((n, s, tag));
                    transitions.len() - 1
                });
                assigned[l] = Some(id);
            }
        }
        let children: Vec<Option<(Arc<Node>, f64)>> = transitions
            .par_iter()
            .map(|&(n, s, tag)| -> Result<Option<(Arc<Node>, f64)>> {
                let strategy = &strategies[n];
                let post = match posterior_update(&order[n].h, &strategy.testers, s) {
                    Ok(p) => p,
                    Err(Error::ZeroLikelihood { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let conditional = strategy.costs.column(s).dot(&DVector::from_column_slice(post.weights()));
                let next = match tag {
                    Some(seed) => resample(&post, cfg.resample.ess_threshold, seed)?,
                    None => post,
                };
                Ok(Some((Arc::new(engine.node(next)?), conditional)))
            })
            .collect::<Result<_>>()?;

        for (t, id) in trajs.iter_mut().zip(assigned) {
            match id.and_then(|i| children[i].as_ref()) {
                Some((child, conditional)) => {
                    t.conditional.push(*conditional);
                    t.node = Some(child.clone());
                }
                None => t.node = None,
            }
        }
    }

    let completed: Vec<&Trajectory> = trajs.iter().filter(|t| t.node.is_some()).collect();
    let n_aborted = trajs.len() - completed.len();
    if n_aborted > 0 {
        log::warn!("{n_aborted} trajectories reached a posterior with zero mass");
    }
    let rounds = (0..cfg.rounds)
        .map(|c| {
            let realized: Vec<f64> = completed.iter().map(|t| t.realized[c]).collect();
            let conditional: Vec<f64> = completed.iter().map(|t| t.conditional[c]).collect();
            let (mean, std_error) = mean_and_error(&realized);
            let (conditional_mean, conditional_std_error) = mean_and_error(&conditional);
            RoundStats { round: c + 1, mean, std_error, conditional_mean, conditional_std_error }
        })
        .collect();
    Ok(GreedyReport {
        rounds,
        n_traj: cfg.n_traj,
        n_completed: completed.len(),
        n_aborted,
        distinct_strategies: engine.cache.len(),
        first_round_score,
        seesaw_regression: engine.cache.largest_regression(),
        config: cfg.clone(),
    })
}

/// The greedy protocol written out as a single sequential tester on
/// `cfg.rounds · cfg.batch` channel uses: every branch of the outcome tree is
/// solved exactly, with no Monte Carlo. Outcome `(s_1, …, s_r)` has index
/// `s_1 N^{r−1} + … + s_r`. Branches of probability zero reuse their parent's
/// posterior.
pub fn adaptive_comb(problem: &GreedyProblem, cfg: &GreedyConfig) -> Result<TesterSet> {
    cfg.validate()?;
    let class = StrategyClass::new(cfg.kind, cfg.batch);
    let dims = ChannelDims::of(&problem.channel);
    let program = Arc::new(TesterProgram::new(class, dims)?.with_backend(cfg.seesaw.backend));
    let prior = problem.prior.clone().with_cache(&problem.channel, cfg.batch)?;
    let branches = comb_branches(problem, cfg, &program, &prior, cfg.rounds)?;
    let copies = cfg.rounds * cfg.batch;
    let layout = SystemLayout::channel_uses(dims.d_in, dims.d_out, copies);
    let elements = branches
        .into_iter()
        .map(|m| HermitianOperator::new(layout.clone(), m))
        .collect::<Result<_>>()?;
    TesterSet::new(StrategyClass::new(StrategyKind::Sequential, copies), elements)
}

fn comb_branches(
    problem: &GreedyProblem,
    cfg: &GreedyConfig,
    program: &Arc<TesterProgram>,
    h: &HypothesisSet,
    rounds: usize,
) -> Result<Vec<CMatrix>> {
    let seesaw = SeesawProblem::with_program(program.clone(), h.clone(), problem.kernel);
    let testers = run_seesaw(&seesaw, &cfg.seesaw)?.best.testers;
    if rounds == 1 {
        return Ok(testers.elements().iter().map(|e| e.matrix().clone()).collect());
    }
    let mut out = Vec::new();
    for (s, t) in testers.elements().iter().enumerate() {
        let next = match posterior_update(h, &testers, s) {
            Ok(p) => p,
            Err(Error::ZeroLikelihood { .. }) => h.clone(),
            Err(e) => return Err(e),
        };
        for rest in comb_branches(problem, cfg, program, &next, rounds - 1)? {
            out.push(t.matrix().kronecker(&rest));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{haar_prior_su2, uniform_prior, SamplingMode};

    #[test]
    fn categorical_edges() {
        assert_eq!(categorical(&[0.0, 1.0, 0.0], 0.999), 1);
        assert_eq!(categorical(&[0.5, 0.5], 0.0), 0);
        assert_eq!(categorical(&[0.5, 0.5], 0.7), 1);
        // Rounding leaves `u` above the cumulative sum: last positive entry.
        assert_eq!(categorical(&[0.3, 0.7 - 1e-16, 0.0], 1.0 - 1e-17), 1);
    }

    #[test]
    fn cache_key_is_sensitive_to_weights() {
        let h = uniform_prior(1.0, 2.0, 10).unwrap();
        assert_eq!(posterior_cache_key(&h), posterior_cache_key(&h.clone()));
        let mut w = h.weights().to_vec();
        w[3] += 1e-6;
        let g = h.reweighted(&w).unwrap();
        assert_ne!(posterior_cache_key(&h), posterior_cache_key(&g));
    }

    #[test]
    fn mean_and_error_matches_definition() {
        let (m, se) = mean_and_error(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_round_matches_seesaw_score() {
        let h = haar_prior_su2(128, SamplingMode::Grid, 0).unwrap();
        let problem = GreedyProblem::new(ChannelModel::Su2Unitary, h, CostKernel::FidelitySu2);
        let cfg = GreedyConfig {
            n_traj: 2000,
            rounds: 1,
            seesaw: SeesawConfig { n_restarts: 1, n_outcomes: 8, ..Default::default() },
            ..Default::default()
        };
        let report = run_greedy(&problem, &cfg).unwrap();
        let r = &report.rounds[0];
        assert!((r.conditional_mean - report.first_round_score).abs() < 3.0 * r.conditional_std_error + 1e-9);
        assert!((r.mean - report.first_round_score).abs() < 4.0 * r.std_error);
        assert_eq!(report.n_completed, 2000);
    }
}
