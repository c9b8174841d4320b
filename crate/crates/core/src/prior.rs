//! Discretized priors and posteriors over the channel parameter.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::operator::{hermitian_coords, SystemLayout};

/// Where the parameter lives; used to clip resampling jitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Ball { radius: f64 },
    Interval { lo: f64, hi: f64 },
}

impl Domain {
    fn clip(&self, theta: &mut [f64]) {
        match *self {
            Domain::Ball { radius } => {
                let r = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
                let max = radius * (1.0 - 1e-9);
                if r > max {
                    theta.iter_mut().for_each(|x| *x *= max / r);
                }
            }
            Domain::Interval { lo, hi } => {
                for x in theta.iter_mut() {
                    *x = x.clamp(lo, hi);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Grid,
    Importance,
}

/// `J_θ^{⊗k}` for every hypothesis, stored as Hermitian coordinates
/// (one column per hypothesis).
#[derive(Debug)]
pub struct ChoiCache {
    pub layout: SystemLayout,
    pub copies: usize,
    pub coords: DMatrix<f64>,
}

impl ChoiCache {
    pub fn build(channel: &ChannelModel, points: &[Vec<f64>], copies: usize) -> Result<Self> {
        let layout = SystemLayout::channel_uses(channel.input_dim(), channel.output_dim(), copies);
        let d = layout.dim();
        let columns: Vec<DVector<f64>> = points
            .par_iter()
            .map(|p| channel.choi_power(p, copies).map(|j| hermitian_coords(j.matrix())))
            .collect::<Result<_>>()?;
        let mut coords = DMatrix::zeros(d * d, points.len());
        for (j, col) in columns.iter().enumerate() {
            coords.set_column(j, col);
        }
        Ok(Self { layout, copies, coords })
    }
}

/// A discrete prior or posterior `{θ_j, p_j}`.
#[derive(Clone, Debug)]
pub struct HypothesisSet {
    points: Arc<Vec<Vec<f64>>>,
    weights: Vec<f64>,
    domain: Domain,
    mode: SamplingMode,
    cache: Option<Arc<ChoiCache>>,
}

impl HypothesisSet {
    /// Normalizes the given nonnegative masses.
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>, domain: Domain, mode: SamplingMode) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("hypothesis set needs at least one point".into()));
        }
        if points.len() != masses.len() {
            return Err(Error::Dimension(format!("{} points but {} weights", points.len(), masses.len())));
        }
        if masses.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        let weights = normalized(&masses)?;
        Ok(Self { points: Arc::new(points), weights, domain, mode, cache: None })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn param_dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn cache(&self) -> Option<&Arc<ChoiCache>> {
        self.cache.as_ref()
    }

    pub fn with_cache(mut self, channel: &ChannelModel, copies: usize) -> Result<Self> {
        self.cache = Some(Arc::new(ChoiCache::build(channel, &self.points, copies)?));
        Ok(self)
    }

    pub(crate) fn require_cache(&self) -> Result<&ChoiCache> {
        self.cache
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("hypothesis set has no cached Choi powers".into()))
    }

    /// Same points and cache with new (normalized) weights.
    pub fn reweighted(&self, masses: &[f64]) -> Result<Self> {
        if masses.len() != self.len() {
            return Err(Error::Dimension("weight vector length".into()));
        }
        Ok(Self { weights: normalized(masses)?, ..self.clone() })
    }

    /// `(Σ p_j²)^{-1}`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> Vec<f64> {
        let q = self.param_dim();
        let mut m = vec![0.0; q];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (a, x) in m.iter_mut().zip(p) {
                *a += w * x;
            }
        }
        m
    }

    pub fn std_dev(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; mean.len()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for ((a, x), m) in v.iter_mut().zip(p).zip(&mean) {
                *a += w * (x - m) * (x - m);
            }
        }
        v.into_iter().map(f64::sqrt).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "index,weight")?;
        for k in 0..self.param_dim() {
            write!(out, ",theta_{k}")?;
        }
        writeln!(out)?;
        for (j, (p, w)) in self.points.iter().zip(&self.weights).enumerate() {
            write!(out, "{j},{w:.17e}")?;
            for x in p {
                write!(out, ",{x:.17e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn normalized(masses: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = masses.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::ZeroMass);
    }
    Ok(masses.iter().map(|w| w / total).collect())
}

/// Haar density `(1/2π²)(sin r / r)²` in the exponential parametrization.
pub fn haar_density(theta: &[f64]) -> f64 {
    let r = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r >= PI {
        return 0.0;
    }
    let sinc = if r < 1e-6 { 1.0 - r * r / 6.0 } else { r.sin() / r };
    sinc * sinc / (2.0 * PI * PI)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Grid layout used by [`haar_prior_su2`]: `(shells, polar nodes, azimuths)`,
/// the smallest `N` with `2N³ ≥ n_points` giving `(N, N, 2N)`.
pub fn haar_grid_shape(n_points: usize) -> (usize, usize, usize) {
    let mut n = 3;
    while 2 * n * n * n < n_points {
        n += 1;
    }
    (n, n, 2 * n)
}

/// Discretized Haar prior on SU(2).
///
/// Grid mode stratifies the ball `r < π` into midpoint radial shells; each
/// shell carries a product rule in solid angle (Gauss–Legendre in the polar
/// cosine, equispaced azimuths with a shell-dependent offset). Weights are
/// density times cell volume. With `N` shells the rule integrates every
/// quaternion polynomial of degree below `2N − 2` exactly, so Haar moments
/// (in particular `E[q qᵀ] = 1/4`) are reproduced to machine precision.
/// Importance mode draws Haar-random quaternions with equal weights.
pub fn haar_prior_su2(n_points: usize, mode: SamplingMode, seed: u64) -> Result<HypothesisSet> {
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be positive".into()));
    }
    let domain = Domain::Ball { radius: PI };
    if n_points == 1 {
        return HypothesisSet::new(vec![vec![0.0; 3]], vec![1.0], domain, mode);
    }
    if mode == SamplingMode::Importance || n_points < 54 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let mut q = [0.0f64; 4];
            q.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            q.iter_mut().for_each(|x| *x /= n);
            let r = q[0].clamp(-1.0, 1.0).acos();
            let v = (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            let s = if v > 0.0 { r / v } else { 0.0 };
            points.push(vec![q[1] * s, q[2] * s, q[3] * s]);
        }
        return HypothesisSet::new(points, vec![1.0; n_points], domain, SamplingMode::Importance);
    }
    let (shells, n_polar, n_azimuth) = haar_grid_shape(n_points);
    let (nodes, gl_weights) = gauss_legendre(n_polar);
    let dr = PI / shells as f64;
    let dphi = 2.0 * PI / n_azimuth as f64;
    let mut points = Vec::with_capacity(shells * n_polar * n_azimuth);
    let mut masses = Vec::with_capacity(points.capacity());
    for c in 0..shells {
        let r = (c as f64 + 0.5) * dr;
        let radial = haar_density(&[r, 0.0, 0.0]) * r * r * dr;
        let offset = (c as f64 * 0.618_033_988_749_894_8 + seed as f64 * 0.414_213_562_373_095).fract() * dphi;
        for (z, wz) in nodes.iter().zip(&gl_weights) {
            let s = (1.0 - z * z).sqrt();
            for a in 0..n_azimuth {
                let phi = offset + a as f64 * dphi;
                points.push(vec![r * s * phi.cos(), r * s * phi.sin(), r * z]);
                masses.push(radial * wz * dphi);
            }
        }
    }
    HypothesisSet::new(points, masses, domain, SamplingMode::Grid)
}

/// Sum of `density × cell volume` over the grid produced by
/// [`haar_prior_su2`] in grid mode.
pub fn haar_grid_mass(n_points: usize) -> f64 {
    let (shells, _, _) = haar_grid_shape(n_points);
    let dr = PI / shells as f64;
    (0..shells)
        .map(|c| {
            let r = (c as f64 + 0.5) * dr;
            haar_density(&[r, 0.0, 0.0]) * 4.0 * PI * r * r * dr
        })
        .sum()
}

/// Equal weights on an equispaced grid including both endpoints.
pub fn uniform_prior(lo: f64, hi: f64, n_points: usize) -> Result<HypothesisSet> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty range [{lo}, {hi}]")));
    }
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be positive".into()));
    }
    let points = if n_points == 1 {
        vec![vec![0.5 * (lo + hi)]]
    } else {
        let step = (hi - lo) / (n_points - 1) as f64;
        (0..n_points).map(|j| vec![lo + j as f64 * step]).collect()
    };
    HypothesisSet::new(points, vec![1.0; n_points], Domain::Interval { lo, hi }, SamplingMode::Grid)
}

/// Unnormalized sine-exponential density `exp[α sin²(π(θ−a)/(b−a))] − 1`.
/// Negative α gives a negative function whose normalized form is still a
/// valid density.
pub fn sine_exp_density(alpha: f64, lo: f64, hi: f64, theta: f64) -> f64 {
    let s = (PI * (theta - lo) / (hi - lo)).sin();
    (alpha * s * s).exp_m1()
}

/// Sine-exponential prior on a midpoint grid.
pub fn sine_exp_prior(alpha: f64, lo: f64, hi: f64, n_points: usize) -> Result<HypothesisSet> {
    if alpha == 0.0 {
        return Err(Error::InvalidParameter("alpha = 0 gives an identically zero density".into()));
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty range [{lo}, {hi}]")));
    }
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be positive".into()));
    }
    let step = (hi - lo) / n_points as f64;
    let points: Vec<Vec<f64>> = (0..n_points).map(|j| vec![lo + (j as f64 + 0.5) * step]).collect();
    let sign = alpha.signum();
    let masses = points
        .iter()
        .map(|p| (sign * sine_exp_density(alpha, lo, hi, p[0])).max(0.0))
        .collect();
    HypothesisSet::new(points, masses, Domain::Interval { lo, hi }, SamplingMode::Grid)
}

/// Bayes update `p_j ← p_j L_j / 𝒩` from per-hypothesis likelihoods.
pub fn posterior_from_likelihoods(h: &HypothesisSet, likelihoods: &[f64]) -> Result<HypothesisSet> {
    if likelihoods.len() != h.len() {
        return Err(Error::Dimension("likelihood vector length".into()));
    }
    let masses: Vec<f64> = h
        .weights
        .iter()
        .zip(likelihoods)
        .map(|(p, l)| p * l.max(0.0))
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::ZeroMass);
    }
    h.reweighted(&masses)
}

/// Posterior after observing `outcome` of `testers` applied to the cached
/// Choi powers.
pub fn posterior_update(h: &HypothesisSet, testers: &crate::testers::TesterSet, outcome: usize) -> Result<HypothesisSet> {
    if outcome >= testers.len() {
        return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
    }
    let cache = h.require_cache()?;
    let t = testers.element_coords(outcome);
    let like = cache.coords.tr_mul(&t);
    posterior_from_likelihoods(h, like.as_slice()).map_err(|e| match e {
        Error::ZeroMass => Error::ZeroLikelihood { outcome },
        other => other,
    })
}

/// Systematic resampling with Gaussian jitter when the effective sample
/// size drops below `ess_threshold · N`. The returned set has no Choi cache.
pub fn resample(h: &HypothesisSet, ess_threshold: f64, seed: u64) -> Result<HypothesisSet> {
    if !(ess_threshold > 0.0 && ess_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("ESS threshold {ess_threshold} outside (0, 1]")));
    }
    let n = h.len();
    if h.effective_sample_size() >= ess_threshold * n as f64 {
        return Ok(h.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bandwidth: Vec<f64> = h.std_dev().into_iter().map(|s| 0.1 * s).collect();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut points = Vec::with_capacity(n);
    let mut cum = h.weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += h.weights[j];
        }
        let mut p = h.points[j].clone();
        for (x, b) in p.iter_mut().zip(&bandwidth) {
            if *b > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                *x += b * z;
            }
        }
        h.domain.clip(&mut p);
        points.push(p);
    }
    HypothesisSet::new(points, vec![1.0; n], h.domain.clone(), h.mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::Quaternion;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn second_moment(h: &HypothesisSet) -> nalgebra::Matrix4<f64> {
        let mut k = nalgebra::Matrix4::zeros();
        for (p, w) in h.points().iter().zip(h.weights()) {
            let q = nalgebra::Vector4::from(Quaternion::from_theta(&[p[0], p[1], p[2]]).0);
            k += q * q.transpose() * *w;
        }
        k
    }

    #[test]
    fn haar_grid_is_normalized_and_isotropic() {
        let h = haar_prior_su2(2000, SamplingMode::Grid, 0).unwrap();
        assert!(h.len() >= 2000);
        assert_abs_diff_eq!(h.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(haar_grid_mass(2000), 1.0, epsilon = 1e-12);
        let k = second_moment(&h);
        assert!((k - nalgebra::Matrix4::identity() * 0.25).abs().max() < 1e-12);
        assert!(h.points().iter().all(|p| p.iter().map(|x| x * x).sum::<f64>() < PI * PI));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        for deg in 0..10 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let want = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn haar_grid_matches_fourth_moments() {
        // E[q0⁴] = 1/8 and E[q0² q1²] = 1/24 under the Haar measure on S³.
        let h = haar_prior_su2(2000, SamplingMode::Grid, 3).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        for (p, w) in h.points().iter().zip(h.weights()) {
            let q = Quaternion::from_theta(&[p[0], p[1], p[2]]).0;
            a += w * q[0].powi(4);
            b += w * q[0].powi(2) * q[1].powi(2);
        }
        assert_abs_diff_eq!(a, 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 1.0 / 24.0, epsilon = 1e-12);
    }

    #[test]
    fn haar_single_point() {
        let h = haar_prior_su2(1, SamplingMode::Grid, 0).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.weights(), &[1.0]);
    }

    #[test]
    fn haar_importance_moment() {
        let h = haar_prior_su2(100_000, SamplingMode::Importance, 7).unwrap();
        let k = second_moment(&h);
        assert!((k[(0, 0)] - 0.25).abs() < 5e-3);
    }

    #[test]
    fn uniform_cases() {
        let h = uniform_prior(0.0, 1.0, 3).unwrap();
        assert_eq!(h.points(), &[vec![0.0], vec![0.5], vec![1.0]]);
        for w in h.weights() {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(uniform_prior(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn sine_exp_cases() {
        assert!(sine_exp_prior(0.0, 0.0, 1.0, 10).is_err());
        let flat = sine_exp_prior(-100.0, 0.0, 2.0 * PI, 200).unwrap();
        let inner = &flat.weights()[20..180];
        let (lo, hi) = inner.iter().fold((f64::MAX, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
        assert!(hi / lo < 1.2);

        let peaked = sine_exp_prior(100.0, 0.0, 2.0 * PI, 200).unwrap();
        let mass_near_pi: f64 = peaked
            .points()
            .iter()
            .zip(peaked.weights())
            .filter(|(p, _)| (p[0] - PI).abs() < 0.5)
            .map(|(_, w)| w)
            .sum();
        assert!(mass_near_pi > 0.99);
        let w = peaked.weights();
        for j in 0..100 {
            assert_abs_diff_eq!(w[j], w[199 - j], epsilon = 1e-14);
        }
    }

    #[test]
    fn resample_cases() {
        let h = uniform_prior(0.0, 1.0, 50).unwrap();
        let same = resample(&h, 0.5, 1).unwrap();
        assert_eq!(same.weights(), h.weights());

        let mut masses = vec![0.0; 50];
        masses[17] = 1.0;
        let spike = h.reweighted(&masses).unwrap();
        let cloud = resample(&spike, 0.5, 1).unwrap();
        assert_abs_diff_eq!(cloud.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.mean()[0], h.points()[17][0], epsilon = 1e-12);

        let mut masses = vec![1.0; 50];
        masses[..25].iter_mut().for_each(|m| *m = 1e-3);
        let skew = h.reweighted(&masses).unwrap();
        let cloud = resample(&skew, 0.99, 3).unwrap();
        assert!((cloud.mean()[0] - skew.mean()[0]).abs() < 0.05);
        assert!(resample(&h, 0.0, 1).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = uniform_prior(0.0, 1.0, 4).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.starts_with("index,weight,theta_0"));
    }

    proptest! {
        #[test]
        fn posterior_stays_normalized(likes in prop::collection::vec(0.0f64..1.0, 8)) {
            prop_assume!(likes.iter().sum::<f64>() > 1e-6);
            let h = uniform_prior(1.0, 2.0, 8).unwrap();
            let post = posterior_from_likelihoods(&h, &likes).unwrap();
            prop_assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(post.weights().iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn rescaling_masses_is_invisible(scale in 1e-3f64..1e3) {
            let pts: Vec<Vec<f64>> = (0..5).map(|j| vec![j as f64]).collect();
            let m = vec![0.1, 0.4, 0.2, 0.2, 0.1];
            let a = HypothesisSet::new(pts.clone(), m.clone(), Domain::Interval { lo: 0.0, hi: 4.0 }, SamplingMode::Grid).unwrap();
            let b = HypothesisSet::new(pts, m.iter().map(|x| x * scale).collect(), Domain::Interval { lo: 0.0, hi: 4.0 }, SamplingMode::Grid).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_likelihood_is_an_error() {
        let h = uniform_prior(1.0, 2.0, 3).unwrap();
        assert!(matches!(posterior_from_likelihoods(&h, &[0.0; 3]), Err(Error::ZeroMass)));
    }
}
