use nalgebra::{ComplexField, DMatrix, DVector};

use crate::operator::C64;

/// Scalar fields the solver supports.
pub trait SdpScalar: ComplexField<RealField = f64> + Copy + Send + Sync {
    /// Real dimension of the space of `n × n` self-adjoint matrices.
    fn basis_dim(n: usize) -> usize;
    fn basis(n: usize) -> HermBasis<Self>;
}

impl SdpScalar for f64 {
    fn basis_dim(n: usize) -> usize {
        n * (n + 1) / 2
    }

    fn basis(n: usize) -> HermBasis<f64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut entries = Vec::with_capacity(Self::basis_dim(n));
        for a in 0..n {
            entries.push([(a + a * n, 1.0), (a + a * n, 0.0)]);
        }
        for a in 0..n {
            for b in (a + 1)..n {
                entries.push([(a + b * n, s), (b + a * n, s)]);
            }
        }
        HermBasis { n, entries }
    }
}

impl SdpScalar for C64 {
    fn basis_dim(n: usize) -> usize {
        n * n
    }

    /// Same ordering and signs as [`crate::operator::hermitian_coords`].
    fn basis(n: usize) -> HermBasis<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut entries = Vec::with_capacity(n * n);
        for a in 0..n {
            entries.push([(a + a * n, one), (a + a * n, zero)]);
        }
        for a in 0..n {
            for b in (a + 1)..n {
                entries.push([(a + b * n, C64::new(s, 0.0)), (b + a * n, C64::new(s, 0.0))]);
                entries.push([(a + b * n, C64::new(0.0, -s)), (b + a * n, C64::new(0.0, s))]);
            }
        }
        HermBasis { n, entries }
    }
}

/// Orthonormal basis of self-adjoint matrices, each element stored by its
/// (at most two) nonzero column-major entries.
#[derive(Clone, Debug)]
pub struct HermBasis<T> {
    n: usize,
    entries: Vec<[(usize, T); 2]>,
}

impl<T: SdpScalar> HermBasis<T> {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `x_q = Re Tr(E_q Y)`; equals the basis coordinate when `Y` is
    /// self-adjoint and the coordinate of its self-adjoint part otherwise.
    pub fn coords(&self, y: &DMatrix<T>) -> DVector<f64> {
        let s = y.as_slice();
        DVector::from_iterator(
            self.entries.len(),
            self.entries
                .iter()
                .map(|e| (e[0].1.conjugate() * s[e[0].0] + e[1].1.conjugate() * s[e[1].0]).real()),
        )
    }

    pub fn from_coords(&self, x: &[f64]) -> DMatrix<T> {
        let mut m = DMatrix::<T>::zeros(self.n, self.n);
        let s = m.as_mut_slice();
        for (e, &v) in self.entries.iter().zip(x) {
            let v = T::from_real(v);
            s[e[0].0] += e[0].1 * v;
            s[e[1].0] += e[1].1 * v;
        }
        m
    }

    /// Real matrix of the linear map `Y ↦ coords(K · vec(Y))` restricted to
    /// self-adjoint inputs, where `K` acts on column-major vectorizations.
    pub fn gather(&self, k: &DMatrix<T>) -> DMatrix<f64> {
        let d = self.entries.len();
        let mut out = DMatrix::<f64>::zeros(d, d);
        for (q, eq) in self.entries.iter().enumerate() {
            for (p, ep) in self.entries.iter().enumerate() {
                let mut acc = T::zero();
                for &(u, vu) in ep {
                    for &(v, vv) in eq {
                        acc += vu.conjugate() * k[(u, v)] * vv;
                    }
                }
                out[(p, q)] = acc.real();
            }
        }
        out
    }
}
