//! Primal-dual interior-point method with the HKM search direction and
//! Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BlockSdp, HermBasis, SdpScalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// Tolerance not reached; the iterate is still returned.
    Degraded,
}

#[derive(Clone, Debug)]
pub struct SdpSolution<T: SdpScalar> {
    pub x: Vec<DMatrix<T>>,
    pub y: DVector<f64>,
    pub z: Vec<DMatrix<T>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

fn herm<T: SdpScalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.adjoint()) * T::from_real(0.5)
}

fn inner<T: SdpScalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    a.dotc(b).real()
}

struct Ops<'a, T: SdpScalar> {
    basis: HermBasis<T>,
    a: &'a DMatrix<f64>,
}

impl<T: SdpScalar> Ops<'_, T> {
    /// `A(Σ_b Y_b)` using the self-adjoint part of the argument.
    fn apply(&self, ys: &[DMatrix<T>]) -> DVector<f64> {
        let mut sum = ys[0].clone();
        for y in &ys[1..] {
            sum += y;
        }
        self.a.tr_mul(&self.basis.coords(&sum))
    }

    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<T> {
        self.basis.from_coords((self.a * y).as_slice())
    }
}

fn inverse_pd<T: SdpScalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    Cholesky::new(herm(m))
        .map(|c| herm(&c.inverse()))
        .ok_or_else(|| Error::Solver("iterate lost positive definiteness".into()))
}

/// Largest `α` with `X + α ΔX ⪰ 0` (infinite if unbounded).
fn max_step<T: SdpScalar>(x: &DMatrix<T>, dx: &DMatrix<T>) -> Result<f64> {
    let chol = Cholesky::new(herm(x)).ok_or_else(|| Error::Solver("iterate lost positive definiteness".into()))?;
    let l = chol.l();
    let m1 = l
        .solve_lower_triangular(dx)
        .ok_or_else(|| Error::Solver("singular factor in step computation".into()))?;
    let m2 = l
        .solve_lower_triangular(&m1.adjoint())
        .ok_or_else(|| Error::Solver("singular factor in step computation".into()))?;
    let lam = herm(&m2).symmetric_eigenvalues().min();
    Ok(if lam < 0.0 { -1.0 / lam } else { f64::INFINITY })
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(mut m: DMatrix<f64>) -> Result<Self> {
        m = (&m + m.transpose()) * 0.5;
        let scale = m.diagonal().abs().max().max(1e-300);
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(Factor::Chol(c));
        }
        for k in [1e-14, 1e-12, 1e-10] {
            let mut r = m.clone();
            for i in 0..r.nrows() {
                r[(i, i)] += k * scale;
            }
            if let Some(c) = Cholesky::new(r) {
                return Ok(Factor::Chol(c));
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Solver("singular Schur complement".into()));
        }
        Ok(Factor::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Factor::Chol(c) => Ok(c.solve(rhs)),
            Factor::Lu(l) => l.solve(rhs).ok_or_else(|| Error::Solver("singular Schur complement".into())),
        }
    }
}

struct Direction<T: SdpScalar> {
    dx: Vec<DMatrix<T>>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<T>>,
}

/// Solve a block SDP.
///
/// Costs and right-hand side are rescaled internally; reported quantities are
/// in the original scaling. Relative infeasibilities are measured against
/// `1 + ‖b‖` and `1 + ‖C‖`.
pub fn solve<T: SdpScalar>(prob: &BlockSdp<T>, opts: &SdpOptions) -> Result<SdpSolution<T>> {
    let n = prob.n;
    let nb = prob.blocks();
    let ops = Ops { basis: T::basis(n), a: &prob.a };

    let cscale = prob.c.iter().map(|c| c.iter().map(|z| z.modulus()).fold(0.0, f64::max)).fold(1e-300, f64::max);
    let cscale = if cscale > 0.0 { cscale } else { 1.0 };
    let bscale = prob.b.amax().max(1e-300);
    let c: Vec<DMatrix<T>> = prob.c.iter().map(|m| herm(m) * T::from_real(1.0 / cscale)).collect();
    let b = &prob.b / bscale;
    let bnorm = b.norm();
    let cnorm = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();

    let mut x: Vec<DMatrix<T>> = vec![DMatrix::identity(n, n); nb];
    let mut z: Vec<DMatrix<T>> = vec![DMatrix::identity(n, n); nb];
    let mut y = DVector::<f64>::zeros(prob.constraints());
    let total_dim = (n * nb) as f64;

    let mut status = SdpStatus::Degraded;
    let mut iterations = 0;
    let (mut pinf, mut dinf, mut gap): (f64, f64, f64);
    let (mut pobj, mut dobj): (f64, f64);
    let mut stalled = 0;

    loop {
        let aty = ops.adjoint(&y);
        let rd: Vec<DMatrix<T>> = (0..nb).map(|k| &c[k] - &aty - &z[k]).collect();
        let rp = &b - ops.apply(&x);
        pobj = (0..nb).map(|k| inner(&c[k], &x[k])).sum();
        dobj = b.dot(&y);
        pinf = rp.norm() / (1.0 + bnorm);
        dinf = rd.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + cnorm);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if !(pinf.is_finite() && dinf.is_finite() && gap.is_finite()) {
            return Err(Error::Solver(format!("non-finite residuals at iteration {iterations}")));
        }
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        if iterations >= opts.max_iter || stalled >= 5 {
            break;
        }
        iterations += 1;

        let mu: f64 = (0..nb).map(|k| inner(&x[k], &z[k])).sum::<f64>() / total_dim;
        let zinv: Vec<DMatrix<T>> = z.iter().map(inverse_pd).collect::<Result<_>>()?;

        // Schur complement M_rs = Σ_b Re Tr(A_r X_b A_s Z_b⁻¹).
        let nn = n * n;
        let mut kron = DMatrix::<T>::zeros(nn, nn);
        for k in 0..nb {
            let (xk, zk) = (&x[k], &zinv[k]);
            for s in 0..n {
                for q in 0..n {
                    let w = zk[(s, q)];
                    for r in 0..n {
                        let col = r + s * n;
                        for p in 0..n {
                            kron[(p + q * n, col)] += w * xk[(p, r)];
                        }
                    }
                }
            }
        }
        let smat = ops.basis.gather(&kron);
        let schur = prob.a.tr_mul(&(smat * &prob.a));
        let factor = Factor::new(schur)?;

        let direction = |g: Vec<DMatrix<T>>| -> Result<Direction<T>> {
            let rhs = &rp - ops.apply(&g);
            let dy = factor.solve(&rhs)?;
            let ady = ops.adjoint(&dy);
            let dz: Vec<DMatrix<T>> = (0..nb).map(|k| &rd[k] - &ady).collect();
            let dx: Vec<DMatrix<T>> = (0..nb).map(|k| herm(&(&g[k] + &x[k] * &ady * &zinv[k]))).collect();
            Ok(Direction { dx, dy, dz })
        };
        let steps = |d: &Direction<T>| -> Result<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&x[k], &d.dx[k])?);
                ad = ad.min(max_step(&z[k], &d.dz[k])?);
            }
            Ok((ap.min(1.0), ad.min(1.0)))
        };

        let base: Vec<DMatrix<T>> = (0..nb).map(|k| -&x[k] - &x[k] * &rd[k] * &zinv[k]).collect();
        let pred = direction(base.clone())?;
        let (ap, ad) = steps(&pred)?;
        let mu_aff: f64 = (0..nb)
            .map(|k| {
                let xa = &x[k] + &pred.dx[k] * T::from_real(ap);
                let za = &z[k] + &pred.dz[k] * T::from_real(ad);
                inner(&xa, &za)
            })
            .sum::<f64>()
            / total_dim;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        let corr: Vec<DMatrix<T>> = (0..nb)
            .map(|k| {
                &base[k] + &zinv[k] * T::from_real(sigma * mu) - &pred.dx[k] * &pred.dz[k] * &zinv[k]
            })
            .collect();
        let d = direction(corr)?;
        let (ap, ad) = steps(&d)?;
        let gamma = 0.98;
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
        for k in 0..nb {
            x[k] = herm(&(&x[k] + &d.dx[k] * T::from_real(ap)));
            z[k] = herm(&(&z[k] + &d.dz[k] * T::from_real(ad)));
        }
        y += &d.dy * ad;
    }

    let s = T::from_real(bscale);
    let t = T::from_real(cscale);
    Ok(SdpSolution {
        x: x.into_iter().map(|m| m * s).collect(),
        y: y * cscale,
        z: z.into_iter().map(|m| m * t).collect(),
        primal_objective: pobj * bscale * cscale,
        dual_objective: dobj * bscale * cscale,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        relative_gap: gap,
        iterations,
        status,
    })
}
