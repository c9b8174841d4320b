//! Physical implementations extracted from testers.
//!
//! Parallel testers become a probe state and a POVM, sequential two-use
//! testers additionally get an intermediate channel, and general testers are
//! wrapped as a process matrix with a pointer measurement.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, psd_roots};
use crate::operator::{vectorize, CMatrix, HermitianOperator, SystemLayout, C64};
use crate::testers::{constraints_general_k2, constraints_parallel, constraints_sequential, ChannelDims, StrategyKind, TesterSet};

/// Relative eigenvalue floor for pseudo-inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Largest constraint residual accepted before extracting marginals.
pub const RESIDUAL_TOL: f64 = 1e-6;

fn dims_of(t: &TesterSet) -> Result<ChannelDims> {
    let layout = t.layout();
    Ok(ChannelDims { d_in: layout.dim_of("I1")?, d_out: layout.dim_of("O1")? })
}

fn labels(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn eye(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `(Λ ⊗ 1_R)(X)` for a map given by its input-first Choi matrix and `X` on
/// `in ⊗ R`. Linear in both arguments, so `choi` need not be a channel.
pub fn apply_to_first(choi: &CMatrix, d_in: usize, x: &CMatrix) -> CMatrix {
    let d_out = choi.nrows() / d_in;
    let r = x.nrows() / d_in;
    let mut out = CMatrix::zeros(d_out * r, d_out * r);
    for a in 0..d_in {
        for b in 0..d_in {
            let block = x.view((a * r, b * r), (r, r));
            if block.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            let lam = choi.view((a * d_out, b * d_out), (d_out, d_out));
            out += kron(&lam.into_owned(), &block.into_owned());
        }
    }
    out
}

/// Exchange the two factors of an operator on `d1 ⊗ d2`.
fn swap_factors(m: &CMatrix, d1: usize, d2: usize) -> CMatrix {
    CMatrix::from_fn(d1 * d2, d1 * d2, |r, c| {
        let (r2, r1) = (r / d1, r % d1);
        let (c2, c1) = (c / d1, c % d1);
        m[(r1 * d2 + r2, c1 * d2 + c2)]
    })
}

fn operator(layout: SystemLayout, m: CMatrix) -> Result<HermitianOperator> {
    HermitianOperator::from_hermitian_part(layout, m)
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

/// `(1 ⊗ √σ)|Ω⟩⟨Ω|(1 ⊗ √σ)` with `|Ω⟩ = Σ_a |a⟩|a⟩`.
fn purification(sqrt_sigma: &CMatrix) -> CMatrix {
    let d = sqrt_sigma.nrows();
    let mut omega = DVector::<C64>::zeros(d * d);
    for a in 0..d {
        omega[a * d + a] = C64::new(1.0, 0.0);
    }
    let lift = kron(&eye(d), sqrt_sigma);
    let v = lift * omega;
    &v * v.adjoint()
}

/// `M_i = (1 ⊗ S⁻½) T_i (1 ⊗ S⁻½)` plus the kernel projector on outcome 0.
fn povm_from(testers: &[CMatrix], d_left: usize, marginal: &CMatrix) -> Vec<CMatrix> {
    let roots = psd_roots(marginal, EIGEN_FLOOR);
    let s = kron(&eye(d_left), &roots.pinv_sqrt);
    let mut povm: Vec<CMatrix> = testers.iter().map(|t| &s * t * &s).collect();
    let d = marginal.nrows();
    povm[0] += kron(&eye(d_left), &(eye(d) - roots.support));
    povm
}

fn check_class(t: &TesterSet, kind: StrategyKind, what: &str) -> Result<()> {
    if t.class().kind != kind {
        return Err(Error::Realization(format!("{what} realization needs {kind} testers, got {}", t.class().kind)));
    }
    Ok(())
}

fn check_residual(residual: f64) -> Result<()> {
    if residual > RESIDUAL_TOL {
        return Err(Error::Realization(format!("constraint residual {residual:.3e} is too large")));
    }
    Ok(())
}

/// Probe state on `I1..Ik A1..Ak` and POVM on `O1..Ok A1..Ak`.
#[derive(Clone, Debug)]
pub struct ParallelRealization {
    pub copies: usize,
    pub rho: HermitianOperator,
    pub povm: Vec<HermitianOperator>,
}

impl ParallelRealization {
    /// Outcome probabilities when every use is the channel with Choi
    /// operator given on the canonical `I1 O1 … Ik Ok` layout.
    pub fn probabilities(&self, choi_power: &HermitianOperator) -> Result<Vec<f64>> {
        let k = self.copies;
        let mut order = labels("I", k);
        order.extend(labels("O", k));
        let j = choi_power.permute(&order)?;
        let d_in = self.rho.dim() / self.rho.layout().dim_of("A1")?.pow(k as u32);
        let out = apply_to_first(j.matrix(), d_in, self.rho.matrix());
        Ok(self.povm.iter().map(|m| trace_product(m.matrix(), &out).re).collect())
    }
}

pub fn realize_parallel(t: &TesterSet) -> Result<ParallelRealization> {
    check_class(t, StrategyKind::Parallel, "parallel")?;
    let k = t.class().copies;
    let dims = dims_of(t)?;
    let w = t.sum();
    check_residual(constraints_parallel(k, dims)?.residual(&w)?)?;
    let outs = labels("O", k);
    let ins = labels("I", k);
    let d_out_total = dims.d_out.pow(k as u32);
    let sigma = w.partial_trace(&outs)?.scale(1.0 / d_out_total as f64);
    let roots = psd_roots(sigma.matrix(), EIGEN_FLOOR);

    let ancilla: Vec<(String, usize)> = labels("A", k).into_iter().map(|l| (l, dims.d_in)).collect();
    let rho_layout = SystemLayout::new(ins.iter().map(|l| (l.clone(), dims.d_in)).chain(ancilla.clone()))?;
    let povm_layout = SystemLayout::new(outs.iter().map(|l| (l.clone(), dims.d_out)).chain(ancilla))?;

    let mut order = outs.clone();
    order.extend(ins);
    let reordered: Vec<CMatrix> = t
        .elements()
        .iter()
        .map(|e| e.permute(&order).map(|p| p.into_matrix()))
        .collect::<Result<_>>()?;
    let povm = povm_from(&reordered, d_out_total, sigma.matrix())
        .into_iter()
        .map(|m| operator(povm_layout.clone(), m))
        .collect::<Result<_>>()?;
    Ok(ParallelRealization { copies: k, rho: operator(rho_layout, purification(&roots.sqrt))?, povm })
}

/// Two-use comb: probe on `I1 A1`, intermediate channel `A1 O1 → I2 A2`
/// (Choi operator, input first) and POVM on `O2 A2`, where the memory `A2`
/// copies `I1 O1 I2`.
#[derive(Clone, Debug)]
pub struct SequentialRealization {
    pub dims: ChannelDims,
    pub rho: HermitianOperator,
    pub channel: HermitianOperator,
    pub povm: Vec<HermitianOperator>,
    /// `max |Tr_out C − 1|` of the intermediate channel.
    pub channel_trace_error: f64,
}

impl SequentialRealization {
    pub fn aux_dims(&self) -> (usize, usize) {
        let d = self.dims;
        (d.d_in, d.d_in * d.d_out * d.d_in)
    }

    /// Probabilities (complex in general) for arbitrary operators inserted in
    /// place of the two channel Choi matrices, each on `I ⊗ O`.
    pub fn evaluate(&self, j1: &CMatrix, j2: &CMatrix) -> Vec<C64> {
        let ChannelDims { d_in, d_out } = self.dims;
        let (a1, _) = self.aux_dims();
        let after_first = apply_to_first(j1, d_in, self.rho.matrix());
        let memory_in = swap_factors(&after_first, d_out, a1);
        let after_comb = apply_to_first(self.channel.matrix(), a1 * d_out, &memory_in);
        let after_second = apply_to_first(j2, d_in, &after_comb);
        self.povm.iter().map(|m| trace_product(m.matrix(), &after_second)).collect()
    }

    pub fn probabilities(&self, j1: &HermitianOperator, j2: &HermitianOperator) -> Vec<f64> {
        self.evaluate(j1.matrix(), j2.matrix()).into_iter().map(|z| z.re).collect()
    }

    /// Tester elements on `I1 O1 I2 O2` implied by the circuit.
    pub fn reconstruct(&self) -> Vec<CMatrix> {
        let ChannelDims { d_in, d_out } = self.dims;
        let d = d_in * d_out;
        let n = self.povm.len();
        let mut out = vec![CMatrix::zeros(d * d, d * d); n];
        for r1 in 0..d {
            for c1 in 0..d {
                let mut e1 = CMatrix::zeros(d, d);
                e1[(c1, r1)] = C64::new(1.0, 0.0);
                for r2 in 0..d {
                    for c2 in 0..d {
                        let mut e2 = CMatrix::zeros(d, d);
                        e2[(c2, r2)] = C64::new(1.0, 0.0);
                        for (i, p) in self.evaluate(&e1, &e2).into_iter().enumerate() {
                            out[i][(r1 * d + r2, c1 * d + c2)] = p;
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn realize_sequential_k2(t: &TesterSet) -> Result<SequentialRealization> {
    check_class(t, StrategyKind::Sequential, "sequential")?;
    if t.class().copies != 2 {
        return Err(Error::Unsupported("sequential realizations", "two channel uses"));
    }
    let dims = dims_of(t)?;
    let ChannelDims { d_in, d_out } = dims;
    let w = t.sum();
    check_residual(constraints_sequential(2, dims)?.residual(&w)?)?;
    let e = w.partial_trace(&["O2"])?.scale(1.0 / d_out as f64);
    let sigma = w.partial_trace(&["O1", "I2", "O2"])?.scale(1.0 / (d_out * d_out) as f64);
    let rs = psd_roots(sigma.matrix(), EIGEN_FLOOR);
    let re = psd_roots(e.matrix(), EIGEN_FLOOR);

    // K = (1_{I2} ⊗ √E)(|Ω⟩_{I2 I2'} ⊗ (σ^{-1/2} ⊗ 1_{O1})), rows ordered
    // (I2, I1', O1', I2'); the isometric completion sends ker σ to |0⟩|·⟩|0⟩.
    let d_mem = d_in * d_out;
    let d_a2 = d_mem * d_in;
    let rows = d_in * d_a2;
    let wire = kron(&rs.pinv_sqrt, &eye(d_out));
    let kernel = kron(&(eye(d_in) - &rs.support), &eye(d_out));
    let mut g = CMatrix::zeros(rows, d_mem);
    let mut g0 = CMatrix::zeros(rows, d_mem);
    for c in 0..d_in {
        for x in 0..d_mem {
            let row = c * d_a2 + x * d_in + c;
            for y in 0..d_mem {
                g[(row, y)] = wire[(x, y)];
            }
        }
    }
    for x in 0..d_mem {
        for y in 0..d_mem {
            g0[(x * d_in, y)] = kernel[(x, y)];
        }
    }
    let kraus = [kron(&eye(d_in), &re.sqrt) * g, g0];
    let mut choi = CMatrix::zeros(d_mem * rows, d_mem * rows);
    let mut completeness = CMatrix::zeros(d_mem, d_mem);
    for k in &kraus {
        let v = vectorize(k);
        choi += &v * v.adjoint();
        completeness += k.adjoint() * k;
    }
    let channel_trace_error = linalg::max_abs(&(completeness - eye(d_mem)));

    let memory = [("A2_I1", d_in), ("A2_O1", d_out), ("A2_I2", d_in)];
    let rho_layout = SystemLayout::new([("I1", d_in), ("A1", d_in)])?;
    let channel_layout = SystemLayout::new([("A1", d_in), ("O1", d_out), ("I2", d_in)].into_iter().chain(memory))?;
    let povm_layout = SystemLayout::new([("O2", d_out)].into_iter().chain(memory))?;

    let reordered: Vec<CMatrix> = t
        .elements()
        .iter()
        .map(|x| x.permute(&["O2", "I1", "O1", "I2"]).map(|p| p.into_matrix()))
        .collect::<Result<_>>()?;
    let povm = povm_from(&reordered, d_out, e.matrix())
        .into_iter()
        .map(|m| operator(povm_layout.clone(), m))
        .collect::<Result<_>>()?;
    Ok(SequentialRealization {
        dims,
        rho: operator(rho_layout, purification(&rs.sqrt))?,
        channel: operator(channel_layout, choi)?,
        povm,
        channel_trace_error,
    })
}

/// `W_gen = Σ_i T_i ⊗ |i⟩⟨i|_F` with the pointer measurement `{|i⟩⟨i|_F}`.
#[derive(Clone, Debug)]
pub struct GeneralRealization {
    pub process: HermitianOperator,
    pub n_outcomes: usize,
}

impl GeneralRealization {
    /// `Tr[W_gen (J ⊗ |i⟩⟨i|)]` for a Choi operator on the tester layout.
    pub fn probabilities(&self, choi_power: &HermitianOperator) -> Result<Vec<f64>> {
        let n = self.n_outcomes;
        (0..n)
            .map(|i| {
                let mut pointer = CMatrix::zeros(n, n);
                pointer[(i, i)] = C64::new(1.0, 0.0);
                let probe = HermitianOperator::new(SystemLayout::new([("F", n)])?, pointer)?;
                self.process.inner(&choi_power.kron(&probe)?)
            })
            .collect()
    }

    /// `Tr_F W_gen`.
    pub fn marginal(&self) -> Result<HermitianOperator> {
        self.process.partial_trace(&["F"])
    }
}

pub fn realize_general(t: &TesterSet) -> Result<GeneralRealization> {
    check_class(t, StrategyKind::General, "general")?;
    let n = t.len();
    let layout = t.layout().concat(&SystemLayout::new([("F", n)])?)?;
    let d = t.layout().dim();
    let mut w = CMatrix::zeros(d * n, d * n);
    for (i, e) in t.elements().iter().enumerate() {
        let mut pointer = CMatrix::zeros(n, n);
        pointer[(i, i)] = C64::new(1.0, 0.0);
        w += kron(e.matrix(), &pointer);
    }
    let process = operator(layout, w)?;
    if t.class().copies == 2 {
        let dims = dims_of(t)?;
        check_residual(constraints_general_k2(dims)?.residual(&t.sum())?)?;
    }
    Ok(GeneralRealization { process, n_outcomes: n })
}

#[derive(Clone, Debug)]
pub enum Realization {
    Parallel(ParallelRealization),
    Sequential(SequentialRealization),
    General(GeneralRealization),
}

/// Dispatch on the tester class. Single-use sequential testers are parallel.
pub fn realize(t: &TesterSet) -> Result<Realization> {
    let class = t.class();
    match (class.kind, class.copies) {
        (StrategyKind::Parallel, _) => realize_parallel(t).map(Realization::Parallel),
        (StrategyKind::Sequential, 1) => {
            let as_parallel = TesterSet::new(crate::testers::StrategyClass::new(StrategyKind::Parallel, 1), t.elements().to_vec())?;
            realize_parallel(&as_parallel).map(Realization::Parallel)
        }
        (StrategyKind::Sequential, 2) => realize_sequential_k2(t).map(Realization::Sequential),
        (StrategyKind::Sequential, _) => Err(Error::Unsupported("sequential realizations", "two channel uses")),
        (StrategyKind::General, _) => realize_general(t).map(Realization::General),
    }
}

/// Complex matrix as row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub factors: Vec<(String, usize)>,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_operator(op: &HermitianOperator) -> Self {
        let m = op.matrix();
        let data = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| [m[(r, c)].re, m[(r, c)].im]))
            .collect();
        Self {
            factors: op.layout().factors().iter().map(|f| (f.label.clone(), f.dim)).collect(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            C64::new(re, im)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RealizationJson {
    Parallel { rho: MatrixJson, povm: Vec<MatrixJson> },
    Sequential { rho: MatrixJson, channel: MatrixJson, povm: Vec<MatrixJson> },
    General { process: MatrixJson, n_outcomes: usize },
}

impl Realization {
    pub fn to_json(&self) -> RealizationJson {
        let all = |v: &[HermitianOperator]| v.iter().map(MatrixJson::from_operator).collect();
        match self {
            Realization::Parallel(r) => RealizationJson::Parallel { rho: MatrixJson::from_operator(&r.rho), povm: all(&r.povm) },
            Realization::Sequential(r) => RealizationJson::Sequential {
                rho: MatrixJson::from_operator(&r.rho),
                channel: MatrixJson::from_operator(&r.channel),
                povm: all(&r.povm),
            },
            Realization::General(r) => RealizationJson::General { process: MatrixJson::from_operator(&r.process), n_outcomes: r.n_outcomes },
        }
    }
}
