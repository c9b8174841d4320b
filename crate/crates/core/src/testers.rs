//! Testers, strategy-class constraints and the tester SDP.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::cost::{cost_matrix, CostKernel, Direction, EstimatorSet};
use crate::error::{Error, Result};
use crate::operator::{hermitian_coords, hermitian_from_coords, trace_and_replace, HermitianOperator, SystemLayout, C64};
use crate::prior::HypothesisSet;
use crate::sdp::{self, embed, BlockSdp, SdpOptions, SdpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Parallel,
    Sequential,
    General,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Parallel, StrategyKind::Sequential, StrategyKind::General];

    pub fn short_name(self) -> &'static str {
        match self {
            StrategyKind::Parallel => "par",
            StrategyKind::Sequential => "seq",
            StrategyKind::General => "gen",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyClass {
    pub kind: StrategyKind,
    pub copies: usize,
}

impl StrategyClass {
    pub fn new(kind: StrategyKind, copies: usize) -> Self {
        Self { kind, copies }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelDims {
    pub d_in: usize,
    pub d_out: usize,
}

impl ChannelDims {
    pub fn of(channel: &ChannelModel) -> Self {
        Self { d_in: channel.input_dim(), d_out: channel.output_dim() }
    }
}

/// `Σ_t c_t ·  _{X_t}[W] = 0`; an empty label list is the identity map.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCondition {
    pub terms: Vec<(f64, Vec<String>)>,
}

impl LinearCondition {
    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    /// `W = _X[W]`.
    pub fn invariant(x: &[&str]) -> Self {
        Self { terms: vec![(1.0, vec![]), (-1.0, Self::labels(x))] }
    }

    /// `_A[W] = _B[W]`.
    pub fn equal(a: &[&str], b: &[&str]) -> Self {
        Self { terms: vec![(1.0, Self::labels(a)), (-1.0, Self::labels(b))] }
    }

    pub fn apply(&self, w: &HermitianOperator) -> Result<HermitianOperator> {
        let mut acc = HermitianOperator::zeros(w.layout().clone());
        for (c, labels) in &self.terms {
            let t = if labels.is_empty() { w.clone() } else { trace_and_replace(w, labels)? };
            acc = acc.add(&t.scale(*c))?;
        }
        Ok(acc)
    }
}

/// Affine constraints on `W = Σ_i T_i`: linear conditions plus `Tr W = trace`.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub layout: SystemLayout,
    pub conditions: Vec<LinearCondition>,
    pub trace: f64,
}

/// Orthonormal constraint rows (as columns) and right-hand side.
#[derive(Clone, Debug)]
pub struct LoweredConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ConstraintSet {
    /// Largest violation among the linear conditions and the trace.
    pub fn residual(&self, w: &HermitianOperator) -> Result<f64> {
        if w.layout() != &self.layout {
            return Err(Error::LayoutMismatch(format!("{} vs {}", w.layout(), self.layout)));
        }
        let mut worst = (w.trace() - self.trace).abs();
        for c in &self.conditions {
            worst = worst.max(c.apply(w)?.max_abs());
        }
        Ok(worst)
    }

    /// Orthonormal basis of the constraint functionals in Hermitian
    /// coordinates, with linearly dependent rows removed.
    pub fn lower(&self) -> Result<LoweredConstraints> {
        let d = self.layout.dim();
        let nc = d * d;
        let mut gram = DMatrix::<f64>::zeros(nc, nc);
        for cond in &self.conditions {
            let mut map = DMatrix::<f64>::zeros(nc, nc);
            for q in 0..nc {
                let mut e = vec![0.0; nc];
                e[q] = 1.0;
                let basis = HermitianOperator::from_coords(self.layout.clone(), &e)?;
                map.set_column(q, &cond.apply(&basis)?.coords());
            }
            gram += map.tr_mul(&map);
        }
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.amax();
        let mut rows: Vec<DVector<f64>> = (0..nc)
            .filter(|&k| top > 0.0 && eig.eigenvalues[k] > 1e-9 * top)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        let mut t = hermitian_coords(&nalgebra::DMatrix::<C64>::identity(d, d));
        for r in &rows {
            t -= r * r.dot(&t);
        }
        let tn = t.norm();
        t /= tn;
        let trace_rhs = self.trace * tn / (d as f64);
        let m = rows.len() + 1;
        rows.push(t);
        let mut a = DMatrix::zeros(nc, m);
        for (k, r) in rows.iter().enumerate() {
            a.set_column(k, r);
        }
        let mut b = DVector::zeros(m);
        b[m - 1] = trace_rhs;
        Ok(LoweredConstraints { a, b })
    }
}

fn labels(prefix: &str, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    range.map(|n| format!("{prefix}{n}")).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

fn output_trace(dims: ChannelDims, copies: usize) -> f64 {
    (dims.d_out as f64).powi(copies as i32)
}

/// `W = _{O1…Ok}[W]`, `Tr W = d_O^k`.
pub fn constraints_parallel(copies: usize, dims: ChannelDims) -> Result<ConstraintSet> {
    if copies == 0 {
        return Err(Error::InvalidParameter("need at least one channel use".into()));
    }
    let outs = labels("O", 1..=copies);
    Ok(ConstraintSet {
        layout: SystemLayout::channel_uses(dims.d_in, dims.d_out, copies),
        conditions: vec![LinearCondition::invariant(&refs(&outs))],
        trace: output_trace(dims, copies),
    })
}

/// Comb conditions: `W = _{Ok}[W]` and
/// `_{In On … Ik Ok}[W] = _{O(n−1) In On … Ik Ok}[W]` for `n = k … 2`.
pub fn constraints_sequential(copies: usize, dims: ChannelDims) -> Result<ConstraintSet> {
    if copies == 0 {
        return Err(Error::InvalidParameter("need at least one channel use".into()));
    }
    let mut conditions = vec![LinearCondition::invariant(&[&format!("O{copies}")])];
    for n in (2..=copies).rev() {
        let mut tail = Vec::new();
        for m in n..=copies {
            tail.push(format!("I{m}"));
            tail.push(format!("O{m}"));
        }
        let mut with_prev = vec![format!("O{}", n - 1)];
        with_prev.extend(tail.iter().cloned());
        conditions.push(LinearCondition::equal(&refs(&tail), &refs(&with_prev)));
    }
    Ok(ConstraintSet {
        layout: SystemLayout::channel_uses(dims.d_in, dims.d_out, copies),
        conditions,
        trace: output_trace(dims, copies),
    })
}

/// Bipartite process-matrix conditions for two channel uses.
pub fn constraints_general_k2(dims: ChannelDims) -> Result<ConstraintSet> {
    let conditions = vec![
        LinearCondition::equal(&["I2", "O2"], &["O1", "I2", "O2"]),
        LinearCondition::equal(&["I1", "O1"], &["O2", "I1", "O1"]),
        LinearCondition {
            terms: vec![
                (1.0, vec![]),
                (-1.0, vec!["O1".into()]),
                (-1.0, vec!["O2".into()]),
                (1.0, vec!["O1".into(), "O2".into()]),
            ],
        },
    ];
    Ok(ConstraintSet {
        layout: SystemLayout::channel_uses(dims.d_in, dims.d_out, 2),
        conditions,
        trace: output_trace(dims, 2),
    })
}

pub fn constraints_for(class: StrategyClass, dims: ChannelDims) -> Result<ConstraintSet> {
    match class.kind {
        StrategyKind::Parallel => constraints_parallel(class.copies, dims),
        StrategyKind::Sequential => constraints_sequential(class.copies, dims),
        StrategyKind::General => match class.copies {
            1 => constraints_parallel(1, dims),
            2 => constraints_general_k2(dims),
            _ => Err(Error::Unsupported("general (indefinite causal order)", "one or two channel uses")),
        },
    }
}

/// `N_O` PSD operators whose sum satisfies the class constraints.
#[derive(Clone, Debug)]
pub struct TesterSet {
    class: StrategyClass,
    elements: Vec<HermitianOperator>,
    coords: DMatrix<f64>,
}

impl TesterSet {
    pub fn new(class: StrategyClass, elements: Vec<HermitianOperator>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidParameter("tester needs at least one element".into()))?;
        let layout = first.layout().clone();
        for e in &elements {
            if e.layout() != &layout {
                return Err(Error::LayoutMismatch(format!("{} vs {}", e.layout(), layout)));
            }
        }
        let d = layout.dim();
        let mut coords = DMatrix::zeros(d * d, elements.len());
        for (i, e) in elements.iter().enumerate() {
            coords.set_column(i, &e.coords());
        }
        Ok(Self { class, elements, coords })
    }

    pub fn class(&self) -> StrategyClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn layout(&self) -> &SystemLayout {
        self.elements[0].layout()
    }

    pub fn element_coords(&self, i: usize) -> DVector<f64> {
        self.coords.column(i).into_owned()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// `W = Σ_i T_i`.
    pub fn sum(&self) -> HermitianOperator {
        let d = self.layout().dim();
        let total: DVector<f64> = self.coords.column_sum();
        HermitianOperator::from_parts_unchecked(self.layout().clone(), hermitian_from_coords(d, total.as_slice()))
    }

    /// `P_ji = Tr(T_i J_j)` for every cached hypothesis.
    pub fn likelihoods(&self, h: &HypothesisSet) -> Result<DMatrix<f64>> {
        let cache = h.require_cache()?;
        if cache.layout != *self.layout() {
            return Err(Error::LayoutMismatch(format!("testers on {} but cache on {}", self.layout(), cache.layout)));
        }
        Ok(cache.coords.tr_mul(&self.coords))
    }

    /// `p(i | J) = Tr(T_i J)` for one Choi operator.
    pub fn probabilities(&self, j: &HermitianOperator) -> Result<Vec<f64>> {
        self.elements.iter().map(|t| t.inner(j)).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.elements.iter().map(|t| t.min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }
}

/// Per-outcome coefficient operators `C_i` of the linear objective
/// `Σ_i Tr(T_i C_i)`, stored as Hermitian coordinates.
#[derive(Clone, Debug)]
pub struct TesterObjective {
    pub layout: SystemLayout,
    pub coords: DMatrix<f64>,
    pub direction: Direction,
}

impl TesterObjective {
    pub fn from_operators(ops: &[HermitianOperator], direction: Direction) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidParameter("objective needs an outcome".into()))?;
        let layout = first.layout().clone();
        let d = layout.dim();
        let mut coords = DMatrix::zeros(d * d, ops.len());
        for (i, o) in ops.iter().enumerate() {
            o.same_layout(first)?;
            coords.set_column(i, &o.coords());
        }
        Ok(Self { layout, coords, direction })
    }

    pub fn n_outcomes(&self) -> usize {
        self.coords.ncols()
    }

    pub fn operator(&self, i: usize) -> HermitianOperator {
        let d = self.layout.dim();
        HermitianOperator::from_parts_unchecked(self.layout.clone(), hermitian_from_coords(d, self.coords.column(i).as_slice()))
    }
}

/// `C_i = Σ_j p_j c(θ_j, θ̂_i) J_j^{⊗k}`.
pub fn build_objective(h: &HypothesisSet, kernel: CostKernel, estimators: &EstimatorSet) -> Result<TesterObjective> {
    let cache = h.require_cache()?;
    let mut weighted = cost_matrix(kernel, h.points(), estimators)?;
    for (j, p) in h.weights().iter().enumerate() {
        weighted.row_mut(j).scale_mut(*p);
    }
    Ok(TesterObjective {
        layout: cache.layout.clone(),
        coords: &cache.coords * weighted,
        direction: kernel.direction(),
    })
}

/// `Σ_i Tr(T_i C_i)`.
pub fn score(testers: &TesterSet, objective: &TesterObjective) -> Result<f64> {
    if testers.len() != objective.n_outcomes() {
        return Err(Error::Dimension(format!(
            "{} tester elements for {} objective outcomes",
            testers.len(),
            objective.n_outcomes()
        )));
    }
    Ok(testers.coords.dot(&objective.coords))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Complex Hermitian blocks handled directly.
    #[default]
    Complex,
    /// Complex blocks lowered to real symmetric blocks of twice the size.
    RealEmbedding,
}

/// Diagnostics of one tester solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub value: f64,
    pub dual_bound: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub constraint_residual: f64,
}

/// Reusable lowering of a strategy class.
#[derive(Clone, Debug)]
pub struct TesterProgram {
    pub class: StrategyClass,
    pub constraints: ConstraintSet,
    pub lowered: LoweredConstraints,
    pub backend: Backend,
}

impl TesterProgram {
    pub fn new(class: StrategyClass, dims: ChannelDims) -> Result<Self> {
        let constraints = constraints_for(class, dims)?;
        let lowered = constraints.lower()?;
        Ok(Self { class, constraints, lowered, backend: Backend::default() })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.constraints.layout
    }

    /// The block SDP for an objective (minimization form).
    pub fn block_sdp(&self, objective: &TesterObjective) -> Result<BlockSdp<C64>> {
        if objective.layout != *self.layout() {
            return Err(Error::LayoutMismatch(format!("objective on {} but program on {}", objective.layout, self.layout())));
        }
        let d = self.layout().dim();
        let sign = match objective.direction {
            Direction::Maximize => -1.0,
            Direction::Minimize => 1.0,
        };
        let c = (0..objective.n_outcomes())
            .map(|i| hermitian_from_coords(d, (objective.coords.column(i) * sign).as_slice()))
            .collect();
        BlockSdp::new(d, self.lowered.a.clone(), self.lowered.b.clone(), c)
    }

    /// Project `Σ T_i` onto the affine constraint set and spread the
    /// correction over the elements in proportion to their traces.
    fn polish(&self, mut elements: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
        let a = &self.lowered.a;
        let w: DVector<f64> = elements.iter().fold(DVector::zeros(a.nrows()), |acc, e| acc + e);
        let r = a.tr_mul(&w) - &self.lowered.b;
        let delta = -(a * r);
        let d = self.layout().dim();
        let trace = |v: &DVector<f64>| v.rows(0, d).sum();
        let total = trace(&w);
        if total.abs() > 1e-300 {
            for e in elements.iter_mut() {
                let share = trace(e) / total;
                *e += &delta * share;
            }
        }
        elements
    }

    pub fn solve(&self, objective: &TesterObjective, opts: &SdpOptions) -> Result<(TesterSet, SolveReport)> {
        let prob = self.block_sdp(objective)?;
        let sol = match self.backend {
            Backend::Complex => sdp::solve(&prob, opts)?,
            Backend::RealEmbedding => embed::extract_solution(sdp::solve(&embed::embed_program(&prob)?, opts)?),
        };
        if sol.status != SdpStatus::Optimal {
            log::warn!(
                "tester SDP stopped after {} iterations (pinf {:.2e}, dinf {:.2e}, gap {:.2e})",
                sol.iterations,
                sol.primal_infeasibility,
                sol.dual_infeasibility,
                sol.relative_gap
            );
        }
        let raw: Vec<DVector<f64>> = sol.x.iter().map(hermitian_coords).collect();
        let polished = self.polish(raw);
        let d = self.layout().dim();
        let elements = polished
            .iter()
            .map(|v| HermitianOperator::from_parts_unchecked(self.layout().clone(), hermitian_from_coords(d, v.as_slice())))
            .collect();
        let testers = TesterSet::new(self.class, elements)?;
        let value = score(&testers, objective)?;
        let sign = match objective.direction {
            Direction::Maximize => -1.0,
            Direction::Minimize => 1.0,
        };
        let constraint_residual = self.constraints.residual(&testers.sum())?;
        Ok((
            testers,
            SolveReport {
                value,
                dual_bound: sign * sol.dual_objective,
                status: sol.status,
                iterations: sol.iterations,
                primal_infeasibility: sol.primal_infeasibility,
                dual_infeasibility: sol.dual_infeasibility,
                relative_gap: sol.relative_gap,
                constraint_residual,
            },
        ))
    }
}

/// One-shot convenience wrapper around [`TesterProgram`].
pub fn solve_testers(
    class: StrategyClass,
    dims: ChannelDims,
    objective: &TesterObjective,
    opts: &SdpOptions,
) -> Result<(TesterSet, SolveReport)> {
    TesterProgram::new(class, dims)?.solve(objective, opts)
}

/// Default number of outcomes for a channel family.
pub fn default_n_outcomes(channel: &ChannelModel) -> usize {
    match channel.cost_reference() {
        ChannelModel::Thermometry { .. } => 20,
        _ => 27,
    }
}
