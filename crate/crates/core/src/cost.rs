//! Cost kernels and optimal per-outcome estimators.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::Quaternion;
use crate::error::{Error, Result};
use crate::prior::HypothesisSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// Signed improvement of `new` over `old`.
    pub fn gain(self, new: f64, old: f64) -> f64 {
        match self {
            Direction::Maximize => new - old,
            Direction::Minimize => old - new,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKernel {
    /// `(q_θ · q_θ̂)²`, a reward.
    FidelitySu2,
    /// `((θ − θ̂)/θ)²`, a loss.
    RelativeMse,
    /// `cos²((θ − θ̂)/2)`, a reward.
    CosSquared,
}

impl CostKernel {
    pub fn direction(self) -> Direction {
        match self {
            CostKernel::FidelitySu2 | CostKernel::CosSquared => Direction::Maximize,
            CostKernel::RelativeMse => Direction::Minimize,
        }
    }

    pub fn param_dim(self) -> usize {
        match self {
            CostKernel::FidelitySu2 => 3,
            CostKernel::RelativeMse | CostKernel::CosSquared => 1,
        }
    }

    pub fn evaluate(self, theta: &[f64], estimate: &[f64]) -> Result<f64> {
        let q = self.param_dim();
        if theta.len() != q || estimate.len() != q {
            return Err(Error::Dimension(format!("{self:?} needs {q}-component parameters")));
        }
        Ok(match self {
            CostKernel::FidelitySu2 => quat(theta).dot(&quat(estimate)).powi(2),
            CostKernel::RelativeMse => {
                if theta[0] == 0.0 {
                    return Err(Error::InvalidParameter("relative error undefined at θ = 0".into()));
                }
                ((theta[0] - estimate[0]) / theta[0]).powi(2)
            }
            CostKernel::CosSquared => ((theta[0] - estimate[0]) / 2.0).cos().powi(2),
        })
    }
}

fn quat(theta: &[f64]) -> Quaternion {
    Quaternion::from_theta(&[theta[0], theta[1], theta[2]])
}

/// One estimate per tester outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSet {
    pub estimates: Vec<Vec<f64>>,
}

impl EstimatorSet {
    pub fn new(estimates: Vec<Vec<f64>>) -> Self {
        Self { estimates }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// `c(θ_j, θ̂_i)` as an `N_H × N_O` matrix.
pub fn cost_matrix(kernel: CostKernel, points: &[Vec<f64>], estimators: &EstimatorSet) -> Result<DMatrix<f64>> {
    let (nh, no) = (points.len(), estimators.len());
    match kernel {
        CostKernel::FidelitySu2 => {
            let qh = DMatrix::from_fn(nh, 4, |j, a| quat(&points[j]).0[a]);
            let qe = DMatrix::from_fn(4, no, |a, i| quat(&estimators.estimates[i]).0[a]);
            Ok((qh * qe).map(|x| x * x))
        }
        _ => {
            let mut m = DMatrix::zeros(nh, no);
            for i in 0..no {
                for j in 0..nh {
                    m[(j, i)] = kernel.evaluate(&points[j], &estimators.estimates[i])?;
                }
            }
            Ok(m)
        }
    }
}

fn check_mass(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(total)
}

/// Top eigenvector of `K = Σ_j w_j q_j q_jᵀ` with `q0 ≥ 0`.
///
/// In a degenerate top eigenspace the returned vector is the normalized
/// projection of the first basis vector with a nonzero projection, so the
/// choice has the largest attainable `|q0|` and is deterministic.
pub fn optimal_estimator_su2(points: &[Vec<f64>], weights: &[f64]) -> Result<Quaternion> {
    let total = check_mass(weights)?;
    let mut k = Matrix4::<f64>::zeros();
    for (p, w) in points.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let q = Vector4::from(quat(p).0);
        k += q * q.transpose() * (*w / total);
    }
    Ok(top_eigenvector(&k))
}

pub(crate) fn top_eigenvector(k: &Matrix4<f64>) -> Quaternion {
    let eig = SymmetricEigen::new(*k);
    let top = eig.eigenvalues.max();
    let scale = eig.eigenvalues.abs().max().max(1e-300);
    let space: Vec<Vector4<f64>> = (0..4)
        .filter(|&a| top - eig.eigenvalues[a] <= 1e-10 * scale)
        .map(|a| eig.eigenvectors.column(a).into_owned())
        .collect();
    let mut best = space[0];
    if space.len() > 1 {
        for axis in 0..4 {
            let e = Vector4::ith(axis, 1.0);
            let proj: Vector4<f64> = space.iter().map(|v| v * v.dot(&e)).sum();
            if proj.norm() > 1e-8 {
                best = proj.normalize();
                break;
            }
        }
    }
    for a in 0..4 {
        if best[a].abs() > 1e-14 {
            if best[a] < 0.0 {
                best = -best;
            }
            break;
        }
    }
    Quaternion([best[0], best[1], best[2], best[3]])
}

/// `⟨1/θ⟩ / ⟨1/θ²⟩`.
pub fn optimal_estimator_relmse(points: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    check_mass(weights)?;
    let (mut a, mut b) = (0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        if !(p[0] > 0.0) {
            return Err(Error::InvalidParameter("relative error needs positive hypotheses".into()));
        }
        a += w / p[0];
        b += w / (p[0] * p[0]);
    }
    Ok(a / b)
}

/// Circular mean `arg Σ_j w_j e^{iθ_j}` mapped to `[0, 2π)`; a flat
/// resultant falls back to the posterior mode.
pub fn optimal_estimator_cos(points: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    let total = check_mass(weights)?;
    let (mut s, mut c) = (0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        s += w * p[0].sin();
        c += w * p[0].cos();
    }
    if (s * s + c * c).sqrt() < 1e-12 * total {
        let mut best = 0;
        for (j, w) in weights.iter().enumerate() {
            if *w > weights[best] {
                best = j;
            }
        }
        return Ok(points[best][0].rem_euclid(std::f64::consts::TAU));
    }
    Ok(s.atan2(c).rem_euclid(std::f64::consts::TAU))
}

/// Optimal estimate for unnormalized posterior masses.
pub fn optimal_estimate(kernel: CostKernel, points: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    Ok(match kernel {
        CostKernel::FidelitySu2 => optimal_estimator_su2(points, weights)?.to_theta().to_vec(),
        CostKernel::RelativeMse => vec![optimal_estimator_relmse(points, weights)?],
        CostKernel::CosSquared => vec![optimal_estimator_cos(points, weights)?],
    })
}

/// Posterior-optimal estimate for each outcome given the likelihood matrix
/// `P_ji = Tr(T_i J_j)`. Outcomes with no posterior mass keep `previous`.
pub fn estimators_from_likelihoods(
    kernel: CostKernel,
    h: &HypothesisSet,
    likelihoods: &DMatrix<f64>,
    previous: &EstimatorSet,
) -> Result<EstimatorSet> {
    let p = h.weights();
    let mut out = Vec::with_capacity(likelihoods.ncols());
    for i in 0..likelihoods.ncols() {
        let masses: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, w)| w * likelihoods[(j, i)].max(0.0))
            .collect();
        let total: f64 = masses.iter().sum();
        if total <= 1e-14 {
            out.push(previous.estimates[i].clone());
        } else {
            out.push(optimal_estimate(kernel, h.points(), &masses)?);
        }
    }
    Ok(EstimatorSet::new(out))
}

/// Box-1 estimator step: fix the testers and re-optimize every estimate.
pub fn update_all_estimators(
    kernel: CostKernel,
    testers: &crate::testers::TesterSet,
    h: &HypothesisSet,
    previous: &EstimatorSet,
) -> Result<EstimatorSet> {
    let like = testers.likelihoods(h)?;
    estimators_from_likelihoods(kernel, h, &like, previous)
}

/// `n_outcomes` hypothesis points at evenly spaced indices, a deterministic
/// estimate grid for grid priors.
pub fn estimator_grid(h: &HypothesisSet, n_outcomes: usize) -> EstimatorSet {
    let n = h.len();
    let est = (0..n_outcomes)
        .map(|i| {
            let j = (((i as f64 + 0.5) * n as f64 / n_outcomes as f64) as usize).min(n - 1);
            h.points()[j].clone()
        })
        .collect();
    EstimatorSet::new(est)
}

/// `n_outcomes` estimates sampled from the prior.
pub fn initial_estimators(h: &HypothesisSet, n_outcomes: usize, seed: u64) -> EstimatorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = h.weights();
    let est = (0..n_outcomes)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = w.len() - 1;
            for (j, x) in w.iter().enumerate() {
                acc += x;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            h.points()[pick].clone()
        })
        .collect();
    EstimatorSet::new(est)
}
