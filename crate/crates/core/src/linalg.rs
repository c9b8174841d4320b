//! Small dense linear-algebra helpers shared by the operator, solver and
//! realization code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operator::{CMatrix, C64};

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending and eigenvectors as the matching columns.
pub fn eigh(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> DVector<f64> {
    let mut v = m.clone().symmetric_eigenvalues();
    v.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    v
}

/// Rebuild `V f(Λ) V†` from an eigen-decomposition.
pub fn spectral_map(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = f(values[j]);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= s;
        }
    }
    let out = &scaled * vectors.adjoint();
    hermitian_part(&out)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Square root, pseudo-inverse square root and support projector of a PSD
/// matrix. Eigenvalues at or below `floor` (relative to the largest) are
/// treated as zero.
pub struct PsdRoots {
    pub sqrt: CMatrix,
    pub pinv_sqrt: CMatrix,
    pub support: CMatrix,
    pub rank: usize,
}

pub fn psd_roots(m: &CMatrix, floor: f64) -> PsdRoots {
    let (values, vectors) = eigh(m);
    let top = values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = floor * top.max(f64::MIN_POSITIVE);
    let rank = values.iter().filter(|&&v| v > cut).count();
    PsdRoots {
        sqrt: spectral_map(&values, &vectors, |v| if v > cut { v.sqrt() } else { 0.0 }),
        pinv_sqrt: spectral_map(&values, &vectors, |v| if v > cut { 1.0 / v.sqrt() } else { 0.0 }),
        support: spectral_map(&values, &vectors, |v| if v > cut { 1.0 } else { 0.0 }),
        rank,
    }
}

pub fn trace_norm(m: &CMatrix) -> f64 {
    eigvalsh(&hermitian_part(m)).iter().map(|v| v.abs()).sum()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase fix.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random Hermitian matrix with i.i.d. Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    hermitian_part(&g)
}

/// Random density matrix (Ginibre ensemble).
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho.unscale(tr)
}

/// Kraus operators of a random channel `d_in -> d_out` obtained from a
/// random isometry into `d_out * n_kraus` dimensions.
pub fn random_kraus<R: Rng + ?Sized>(d_in: usize, d_out: usize, n_kraus: usize, rng: &mut R) -> Vec<CMatrix> {
    let big = d_out * n_kraus;
    assert!(big >= d_in, "isometry needs d_out * n_kraus >= d_in");
    let u = random_unitary(big, rng);
    let v = u.columns(0, d_in).into_owned();
    (0..n_kraus)
        .map(|a| v.rows(a * d_out, d_out).into_owned())
        .collect()
}
