//! Dense Hermitian operators on labeled tensor-product spaces.
//!
//! Every operator carries a [`SystemLayout`], an ordered list of named
//! tensor factors. Matrix indices are row-major over the factors: the first
//! factor is the most significant digit, which matches
//! `nalgebra::Matrix::kronecker`.
//!
//! Choi operators follow the input-first convention
//! `J = Σ_ab |a⟩⟨b| ⊗ Λ(|a⟩⟨b|)`, so a single channel use lives on
//! `(I, O)` and `k` uses on the canonical interleaving `(I1, O1, …, Ik, Ok)`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative anti-Hermitian part tolerated by [`HermitianOperator::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Drift above which the lossy constructor logs a warning.
pub const HERMITIAN_DRIFT_WARN: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemLayout {
    factors: Vec<Factor>,
}

impl SystemLayout {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (label, dim) in factors {
            let label = label.into();
            if dim == 0 {
                return Err(Error::ZeroDimension(label));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::DuplicateLabel(label));
            }
            out.push(Factor { label, dim });
        }
        Ok(Self { factors: out })
    }

    /// The trivial one-dimensional layout of a scalar.
    pub fn scalar() -> Self {
        Self { factors: Vec::new() }
    }

    /// Canonical layout `(I1, O1, …, Ik, Ok)` for `copies` channel uses.
    pub fn channel_uses(d_in: usize, d_out: usize, copies: usize) -> Self {
        let mut factors = Vec::with_capacity(2 * copies);
        for n in 1..=copies {
            factors.push(Factor { label: format!("I{n}"), dim: d_in });
            factors.push(Factor { label: format!("O{n}"), dim: d_out });
        }
        Self { factors }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.label.as_str())
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.position(label)
            .map(|p| self.factors[p].dim)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn concat(&self, other: &SystemLayout) -> Result<Self> {
        Self::new(
            self.factors
                .iter()
                .chain(other.factors.iter())
                .map(|f| (f.label.clone(), f.dim)),
        )
    }

    fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self
                .position(l.as_ref())
                .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))?;
            if !pos.contains(&p) {
                pos.push(p);
            }
        }
        pos.sort_unstable();
        Ok(pos)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.factors.len()];
        for i in (0..self.factors.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.factors[i + 1].dim;
        }
        s
    }

    /// Linear offsets of every multi-index over the given factor positions,
    /// enumerated lexicographically.
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let d = self.factors[p].dim;
            let mut next = Vec::with_capacity(out.len() * d);
            for &base in &out {
                for i in 0..d {
                    next.push(base + i * strides[p]);
                }
            }
            out = next;
        }
        out
    }

    fn sublayout(&self, positions: &[usize]) -> Self {
        Self {
            factors: positions.iter().map(|&p| self.factors[p].clone()).collect(),
        }
    }

    /// Split into (kept, selected) position sets.
    fn split<S: AsRef<str>>(&self, labels: &[S]) -> Result<(Vec<usize>, Vec<usize>)> {
        let sel = self.positions(labels)?;
        let kept = (0..self.factors.len()).filter(|p| !sel.contains(p)).collect();
        Ok((kept, sel))
    }
}

impl fmt::Display for SystemLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, fac) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", fac.label, fac.dim)?;
        }
        write!(f, ")")
    }
}

/// A Hermitian matrix tied to a [`SystemLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    layout: SystemLayout,
    mat: CMatrix,
}

fn relative_anti_hermitian(mat: &CMatrix) -> f64 {
    let scale = linalg::max_abs(mat);
    if scale == 0.0 {
        return 0.0;
    }
    linalg::max_abs(&(mat - mat.adjoint())) / scale
}

impl HermitianOperator {
    /// Strict constructor: rejects matrices whose anti-Hermitian part exceeds
    /// [`HERMITIAN_TOL`] relative to the largest entry.
    pub fn new(layout: SystemLayout, mat: CMatrix) -> Result<Self> {
        check_shape(&layout, &mat)?;
        let dev = relative_anti_hermitian(&mat);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { layout, mat: linalg::hermitian_part(&mat) })
    }

    /// Keeps the Hermitian part `(A + A†)/2`, warning when the discarded part
    /// is larger than [`HERMITIAN_DRIFT_WARN`].
    pub fn from_hermitian_part(layout: SystemLayout, mat: CMatrix) -> Result<Self> {
        check_shape(&layout, &mat)?;
        let dev = relative_anti_hermitian(&mat);
        if dev > HERMITIAN_DRIFT_WARN {
            log::warn!("Hermiticity drift {dev:.3e} on layout {layout}");
        }
        Ok(Self { layout, mat: linalg::hermitian_part(&mat) })
    }

    pub(crate) fn from_parts_unchecked(layout: SystemLayout, mat: CMatrix) -> Self {
        debug_assert_eq!(layout.dim(), mat.nrows());
        Self { layout, mat }
    }

    pub fn identity(layout: SystemLayout) -> Self {
        let d = layout.dim();
        Self { layout, mat: CMatrix::identity(d, d) }
    }

    pub fn zeros(layout: SystemLayout) -> Self {
        let d = layout.dim();
        Self { layout, mat: CMatrix::zeros(d, d) }
    }

    /// Build from orthonormal Hermitian coordinates (see [`hermitian_coords`]).
    pub fn from_coords(layout: SystemLayout, coords: &[f64]) -> Result<Self> {
        let d = layout.dim();
        if coords.len() != d * d {
            return Err(Error::Dimension(format!(
                "expected {} coordinates, got {}",
                d * d,
                coords.len()
            )));
        }
        Ok(Self { mat: hermitian_from_coords(d, coords), layout })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn coords(&self) -> DVector<f64> {
        hermitian_coords(&self.mat)
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// `Tr(A B)`, real for Hermitian arguments.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_layout(other)?;
        Ok(self.mat.dotc(&other.mat).re)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.mat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { layout: self.layout.clone(), mat: self.mat.scale(s) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), mat: &self.mat - &other.mat })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::eigvalsh(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, other.layout)));
        }
        Ok(())
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        kron(self, other)
    }

    pub fn partial_trace<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        partial_trace(self, labels)
    }

    pub fn partial_transpose<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        partial_transpose(self, labels)
    }

    pub fn trace_and_replace<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        trace_and_replace(self, labels)
    }

    /// Full transpose (equal to the entrywise conjugate for Hermitian input).
    pub fn transpose(&self) -> Self {
        Self { layout: self.layout.clone(), mat: self.mat.transpose() }
    }

    /// Reorder the tensor factors to the given label order.
    pub fn permute<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        let mat = permute_matrix(&self.layout, &self.mat, order)?;
        let positions: Vec<usize> = order
            .iter()
            .map(|l| self.layout.position(l.as_ref()).unwrap())
            .collect();
        Ok(Self { layout: self.layout.sublayout(&positions), mat })
    }

    /// Rename factors; labels not mentioned keep their names.
    pub fn relabel(&self, renames: &[(&str, &str)]) -> Result<Self> {
        let mut factors = self.layout.factors.clone();
        for (from, to) in renames {
            let p = self
                .layout
                .position(from)
                .ok_or_else(|| Error::UnknownLabel(from.to_string()))?;
            factors[p].label = to.to_string();
        }
        let layout = SystemLayout::new(factors.into_iter().map(|f| (f.label, f.dim)))?;
        Ok(Self { layout, mat: self.mat.clone() })
    }
}

fn check_shape(layout: &SystemLayout, mat: &CMatrix) -> Result<()> {
    let d = layout.dim();
    if mat.nrows() != d || mat.ncols() != d {
        return Err(Error::Dimension(format!(
            "layout {layout} has dimension {d}, matrix is {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

/// Kronecker product; the result layout concatenates both factor lists.
pub fn kron(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    let layout = a.layout.concat(&b.layout)?;
    Ok(HermitianOperator { layout, mat: a.mat.kronecker(&b.mat) })
}

/// Trace out the named factors.
pub fn partial_trace<S: AsRef<str>>(a: &HermitianOperator, labels: &[S]) -> Result<HermitianOperator> {
    let (kept, sel) = a.layout.split(labels)?;
    let ok = a.layout.offsets(&kept);
    let os = a.layout.offsets(&sel);
    let n = ok.len();
    let mut out = CMatrix::zeros(n, n);
    for (r, &br) in ok.iter().enumerate() {
        for (c, &bc) in ok.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &os {
                acc += a.mat[(br + t, bc + t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(HermitianOperator { layout: a.layout.sublayout(&kept), mat: out })
}

/// Transpose the named factors only.
pub fn partial_transpose<S: AsRef<str>>(a: &HermitianOperator, labels: &[S]) -> Result<HermitianOperator> {
    let (kept, sel) = a.layout.split(labels)?;
    let ok = a.layout.offsets(&kept);
    let os = a.layout.offsets(&sel);
    let d = a.dim();
    let mut out = CMatrix::zeros(d, d);
    for &br in &ok {
        for &bc in &ok {
            for &p in &os {
                for &q in &os {
                    out[(br + p, bc + q)] = a.mat[(br + q, bc + p)];
                }
            }
        }
    }
    Ok(HermitianOperator { layout: a.layout.clone(), mat: out })
}

/// `Tr_X[A] ⊗ 1_X / d_X` with the factor order of `A` preserved.
pub fn trace_and_replace<S: AsRef<str>>(a: &HermitianOperator, labels: &[S]) -> Result<HermitianOperator> {
    let (kept, sel) = a.layout.split(labels)?;
    let ok = a.layout.offsets(&kept);
    let os = a.layout.offsets(&sel);
    let dx = os.len() as f64;
    let d = a.dim();
    let mut out = CMatrix::zeros(d, d);
    for &br in &ok {
        for &bc in &ok {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &os {
                acc += a.mat[(br + t, bc + t)];
            }
            let v = acc / dx;
            for &t in &os {
                out[(br + t, bc + t)] = v;
            }
        }
    }
    Ok(HermitianOperator { layout: a.layout.clone(), mat: out })
}

pub(crate) fn permute_matrix<S: AsRef<str>>(layout: &SystemLayout, mat: &CMatrix, order: &[S]) -> Result<CMatrix> {
    if order.len() != layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "permutation lists {} labels for layout {layout}",
            order.len()
        )));
    }
    let mut positions = Vec::with_capacity(order.len());
    for l in order {
        let p = layout
            .position(l.as_ref())
            .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))?;
        if positions.contains(&p) {
            return Err(Error::DuplicateLabel(l.as_ref().to_string()));
        }
        positions.push(p);
    }
    // offsets enumerates in the new order, so entry k of `map` is the old
    // linear index of new linear index k.
    let map = layout.offsets(&positions);
    let d = map.len();
    Ok(CMatrix::from_fn(d, d, |r, c| mat[(map[r], map[c])]))
}

/// Column-stacking vectorization, `|K⟩⟩ = Σ_ij K_ij |j⟩|i⟩`.
pub fn vectorize(m: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

/// Choi operator `Σ_α |K_α⟩⟩⟨⟨K_α|` on `(in_label, out_label)`.
pub fn choi_from_kraus(kraus: &[CMatrix], in_label: &str, out_label: &str) -> Result<HermitianOperator> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty Kraus list".into()))?;
    let (d_out, d_in) = first.shape();
    let mut completeness = CMatrix::zeros(d_in, d_in);
    for k in kraus {
        if k.shape() != (d_out, d_in) {
            return Err(Error::Dimension("Kraus operators differ in shape".into()));
        }
        completeness += k.adjoint() * k;
    }
    let err = linalg::max_abs(&(completeness - CMatrix::identity(d_in, d_in)));
    if err > 1e-10 {
        return Err(Error::NotTracePreserving(err));
    }
    let layout = SystemLayout::new([(in_label, d_in), (out_label, d_out)])?;
    let d = d_in * d_out;
    let mut j = CMatrix::zeros(d, d);
    for k in kraus {
        let v = vectorize(k);
        j += &v * v.adjoint();
    }
    Ok(HermitianOperator { layout, mat: linalg::hermitian_part(&j) })
}

/// Apply a channel given by its Choi operator (input-first convention) to a
/// matrix on its input space: `Λ(X) = Tr_I[(Xᵀ ⊗ 1) J]`.
pub fn apply_choi(choi: &CMatrix, d_in: usize, x: &CMatrix) -> CMatrix {
    let d_out = choi.nrows() / d_in;
    let mut out = CMatrix::zeros(d_out, d_out);
    for a in 0..d_in {
        for b in 0..d_in {
            let w = x[(a, b)];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            // Λ(|a⟩⟨b|) is the (a, b) block of J.
            out += choi.view((a * d_out, b * d_out), (d_out, d_out)) * w;
        }
    }
    out
}

/// Real coordinates of a Hermitian matrix in the orthonormal basis
/// `{E_aa, (E_ab + E_ba)/√2, i(E_ab − E_ba)/√2}` so that `Tr(AB)` is the
/// Euclidean dot product of coordinates.
pub fn hermitian_coords(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(d * d);
    let s = std::f64::consts::SQRT_2;
    let mut k = 0;
    for a in 0..d {
        v[k] = m[(a, a)].re;
        k += 1;
    }
    for a in 0..d {
        for b in (a + 1)..d {
            let z = m[(a, b)];
            v[k] = s * z.re;
            v[k + 1] = -s * z.im;
            k += 2;
        }
    }
    v
}

pub fn hermitian_from_coords(d: usize, coords: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = 0;
    for a in 0..d {
        m[(a, a)] = C64::new(coords[a], 0.0);
        k += 1;
    }
    for a in 0..d {
        for b in (a + 1)..d {
            let z = C64::new(s * coords[k], -s * coords[k + 1]);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
            k += 2;
        }
    }
    m
}
