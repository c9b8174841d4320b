//! Real symmetric embedding of complex Hermitian programs.
//!
//! `Y ↦ [[Re Y, −Im Y], [Im Y, Re Y]]` doubles traces of products, so costs
//! and constraint operators are embedded with a factor ½ and the right-hand
//! side is unchanged.

use nalgebra::DMatrix;

use super::{BlockSdp, SdpScalar, SdpSolution};
use crate::error::Result;
use crate::operator::{CMatrix, C64};

pub fn embed(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Complex matrix represented by a real symmetric `2n × 2n` block:
/// `(X11 + X22)/2 + i(X21 − X12)/2`.
pub fn extract(x: &DMatrix<f64>) -> CMatrix {
    let n = x.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        C64::new(
            0.5 * (x[(i, j)] + x[(i + n, j + n)]),
            0.5 * (x[(i + n, j)] - x[(i, j + n)]),
        )
    })
}

pub fn embed_program(prob: &BlockSdp<C64>) -> Result<BlockSdp<f64>> {
    let n = prob.n;
    let cb = C64::basis(n);
    let rb = f64::basis(2 * n);
    let mut a = DMatrix::zeros(rb.dim(), prob.constraints());
    for r in 0..prob.constraints() {
        let ar = cb.from_coords(prob.a.column(r).as_slice());
        a.set_column(r, &(rb.coords(&embed(&ar)) * 0.5));
    }
    let c = prob.c.iter().map(|m| embed(m) * 0.5).collect();
    BlockSdp::new(2 * n, a, prob.b.clone(), c)
}

pub fn extract_solution(sol: SdpSolution<f64>) -> SdpSolution<C64> {
    SdpSolution {
        x: sol.x.iter().map(extract).collect(),
        y: sol.y,
        z: sol.z.iter().map(extract).collect(),
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        relative_gap: sol.relative_gap,
        iterations: sol.iterations,
        status: sol.status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::sdp::{solve, SdpOptions};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embedding_preserves_products_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = linalg::random_hermitian(3, &mut rng);
        let b = linalg::random_hermitian(3, &mut rng);
        let lhs = (embed(&a) * embed(&b)).trace();
        assert!((lhs - 2.0 * (&a * &b).trace().re).abs() < 1e-12);
        assert!((extract(&embed(&a)) - a).norm() < 1e-15);
    }

    #[test]
    fn embedded_program_has_the_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 2;
        let cb = C64::basis(n);
        let id = CMatrix::identity(n, n) * C64::new(1.0 / (n as f64).sqrt(), 0.0);
        let a = DMatrix::from_column_slice(n * n, 1, cb.coords(&id).as_slice());
        let b = DVector::from_element(1, 1.0 / (n as f64).sqrt());
        let c = vec![linalg::random_hermitian(n, &mut rng), linalg::random_hermitian(n, &mut rng)];
        let prob = BlockSdp::new(n, a, b, c).unwrap();
        let direct = solve(&prob, &SdpOptions::default()).unwrap();
        let real = extract_solution(solve(&embed_program(&prob).unwrap(), &SdpOptions::default()).unwrap());
        assert!((direct.primal_objective - real.primal_objective).abs() < 1e-7);
        let obj: f64 = prob.c.iter().zip(&real.x).map(|(c, x)| c.dotc(x).re).sum();
        assert!((obj - direct.primal_objective).abs() < 1e-7);
    }
}
