//! Sparse-triplet text dump of a block SDP, for cross-checking with other
//! solvers.
//!
//! ```text
//! # qmetro block sdp v1
//! field complex            (or real)
//! size <n> blocks <N> constraints <m>
//! b <r> <value>
//! a <r> <i> <j> <re> <im>  (upper triangle of the operator A_r)
//! c <block> <i> <j> <re> <im>
//! ```
//!
//! Indices are zero-based; entries with modulus below `1e-15` are omitted.
//! The program is `min Σ ⟨C_b, X_b⟩` subject to `⟨A_r, Σ_b X_b⟩ = b_r`.

use std::io::Write;

use nalgebra::DMatrix;

use super::{BlockSdp, SdpScalar};
use crate::error::Result;

fn entries<T: SdpScalar, W: Write>(out: &mut W, tag: &str, id: usize, m: &DMatrix<T>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..=j {
            let z = m[(i, j)];
            if z.modulus() > 1e-15 {
                writeln!(out, "{tag} {id} {i} {j} {:.17e} {:.17e}", z.real(), z.imaginary())?;
            }
        }
    }
    Ok(())
}

pub fn write_triplets<T: SdpScalar, W: Write>(prob: &BlockSdp<T>, mut out: W) -> Result<()> {
    let basis = T::basis(prob.n);
    writeln!(out, "# qmetro block sdp v1")?;
    let field = if T::basis_dim(2) == 4 { "complex" } else { "real" };
    writeln!(out, "field {field}")?;
    writeln!(out, "size {} blocks {} constraints {}", prob.n, prob.blocks(), prob.constraints())?;
    for (r, v) in prob.b.iter().enumerate() {
        writeln!(out, "b {r} {v:.17e}")?;
    }
    for r in 0..prob.constraints() {
        let m = basis.from_coords(prob.a.column(r).as_slice());
        entries(&mut out, "a", r, &m)?;
    }
    for (k, c) in prob.c.iter().enumerate() {
        entries(&mut out, "c", k, c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::C64;
    use nalgebra::DVector;

    #[test]
    fn dump_lists_every_section() {
        let n = 2;
        let basis = C64::basis(n);
        let id = DMatrix::<C64>::identity(n, n) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let a = DMatrix::from_column_slice(4, 1, basis.coords(&id).as_slice());
        let mut c = DMatrix::<C64>::zeros(2, 2);
        c[(0, 1)] = C64::new(0.0, 1.0);
        c[(1, 0)] = C64::new(0.0, -1.0);
        let prob = BlockSdp::new(n, a, DVector::from_element(1, 0.5), vec![c]).unwrap();
        let mut buf = Vec::new();
        write_triplets(&prob, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("field complex"));
        assert!(text.contains("size 2 blocks 1 constraints 1"));
        assert_eq!(text.lines().filter(|l| l.starts_with("a ")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("c ")).count(), 1);
    }
}
