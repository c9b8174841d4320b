//! Analytic checks: thermometry Kraus derivatives, prior Fisher information,
//! the SU(2) benchmark score and the sharp-prior Van Trees relation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channels::{rates_from_occupation, thermal_kraus_from_rates, thermal_rates, ChannelModel};
use crate::error::{Error, Result};
use crate::operator::{CMatrix, HermitianOperator, SystemLayout, C64};
use crate::testers::TesterSet;

/// Kraus operators and their central-difference derivatives in the thermal
/// occupation `N_B`, step `rel_step · N_B`.
fn thermal_kraus_derivatives(theta: f64, energy: f64, spectral: f64, time: f64, rel_step: f64) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    let r = thermal_rates(theta, energy, spectral, time)?;
    let n = r.occupation;
    let h = rel_step * n;
    let plus = thermal_kraus_from_rates(rates_from_occupation(n + h, spectral, time));
    let minus = thermal_kraus_from_rates(rates_from_occupation(n - h, spectral, time));
    let dot = plus.iter().zip(&minus).map(|(p, m)| (p - m) / C64::new(2.0 * h, 0.0)).collect();
    Ok((thermal_kraus_from_rates(r), dot))
}

fn qubit_operator(m: CMatrix) -> Result<HermitianOperator> {
    HermitianOperator::from_hermitian_part(SystemLayout::new([("S", 2)])?, m)
}

/// `β = i Σ_k K̇_k† K_k` for the canonical thermalization Kraus set,
/// differentiated with respect to `N_B`.
pub fn thermometry_beta(theta: f64, energy: f64, spectral: f64, time: f64) -> Result<HermitianOperator> {
    let (k, dk) = thermal_kraus_derivatives(theta, energy, spectral, time, 1e-5)?;
    let sum = dk.iter().zip(&k).fold(CMatrix::zeros(2, 2), |acc, (d, k)| acc + d.adjoint() * k);
    qubit_operator(sum * C64::new(0.0, 1.0))
}

/// `α = Σ_k K̇_k† K̇_k`.
pub fn thermometry_alpha(theta: f64, energy: f64, spectral: f64, time: f64) -> Result<HermitianOperator> {
    let (_, dk) = thermal_kraus_derivatives(theta, energy, spectral, time, 1e-5)?;
    qubit_operator(dk.iter().fold(CMatrix::zeros(2, 2), |acc, d| acc + d.adjoint() * d))
}

/// Spectral norm of a Hermitian operator.
pub fn operator_norm(op: &HermitianOperator) -> f64 {
    op.eigenvalues().iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// `F₀ = ∫ p (∂_θ log p)² dθ` by the midpoint rule on `n` cells, with the
/// derivative from central differences. The density need not be normalized;
/// it is divided by its quadrature mass. Cells where the normalized density
/// is below `1e-12` are skipped.
pub fn prior_fisher_info(density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if !(hi > lo) || n == 0 {
        return Err(Error::InvalidParameter("need hi > lo and at least one cell".into()));
    }
    let dx = (hi - lo) / n as f64;
    let h = 1e-6 * (hi - lo);
    let mass: f64 = (0..n).map(|c| density(lo + (c as f64 + 0.5) * dx) * dx).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut total = 0.0;
    for c in 0..n {
        let x = lo + (c as f64 + 0.5) * dx;
        let p = density(x) / mass;
        if p < 1e-12 {
            continue;
        }
        let dp = (density(x + h) - density(x - h)) / (2.0 * h * mass);
        total += dp * dp / p * dx;
    }
    Ok(total)
}

/// `S* = cos²(π / (k + 3))` for SU(2) estimation with the Haar prior.
pub fn analytic_su2_score(k: usize) -> f64 {
    (PI / (k as f64 + 3.0)).cos().powi(2)
}

/// `Σ_i (∂_θ p_i)² / p_i` of `p_i(θ) = Tr(T_i J_θ^{⊗k})` for a one-parameter
/// channel, with two-sided differences of the given step.
pub fn classical_fisher_info(testers: &TesterSet, channel: &ChannelModel, theta: f64, step: f64) -> Result<f64> {
    if channel.param_dim() != 1 {
        return Err(Error::InvalidParameter("Fisher information needs a one-parameter channel".into()));
    }
    let k = testers.class().copies;
    let probs = |t: f64| -> Result<Vec<f64>> { testers.probabilities(&channel.choi_power(&[t], k)?) };
    let p = probs(theta)?;
    let up = probs(theta + step)?;
    let down = probs(theta - step)?;
    Ok(p.iter()
        .zip(up.iter().zip(&down))
        .filter(|(p, _)| **p > 1e-14)
        .map(|(p, (u, d))| {
            let dp = (u - d) / (2.0 * step);
            dp * dp / p
        })
        .sum())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanTreesReport {
    pub prior_information: f64,
    /// `C = 1 − 1/(4F₀)`.
    pub baseline: f64,
    pub fisher: f64,
    /// `C + F*/(4F₀²)`.
    pub predicted: f64,
    pub observed: f64,
    pub discrepancy: f64,
}

/// Sharp-prior prediction `C + F*/(4F₀²)` for the cos² reward, compared with
/// an observed score.
pub fn van_trees_check(prior_information: f64, fisher: f64, observed: f64) -> VanTreesReport {
    let baseline = 1.0 - 1.0 / (4.0 * prior_information);
    let predicted = baseline + fisher / (4.0 * prior_information * prior_information);
    VanTreesReport { prior_information, baseline, fisher, predicted, observed, discrepancy: (observed - predicted).abs() }
}
