//! Parameter-encoded qubit channels.
//!
//! Units for thermometry: the probe energy and the spectral density are set
//! to one by default, so temperatures are measured in units of the energy
//! gap and times are dimensionless.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{choi_from_kraus, CMatrix, HermitianOperator, SystemLayout, C64};

const SERIES_CUTOFF: f64 = 1e-6;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Unit quaternion `(q0, q1, q2, q3)` with `U = q0·1 − i(q1σx + q2σy + q3σz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn unitary(&self) -> CMatrix {
        let [q0, q1, q2, q3] = self.0;
        CMatrix::from_row_slice(2, 2, &[c(q0, -q3), c(-q2, -q1), c(q2, -q1), c(q0, q3)])
    }

    /// Rotation vector `θ` with `e^{−iθ·σ}` equal to this quaternion, using
    /// the representative with `q0 ≥ 0` (so `‖θ‖ ≤ π/2`).
    pub fn to_theta(&self) -> [f64; 3] {
        let q = if self.0[0] < 0.0 { self.0.map(|x| -x) } else { self.0 };
        let v = (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let r = v.atan2(q[0]);
        if v < 1e-300 {
            return [0.0; 3];
        }
        let s = r / v;
        [q[1] * s, q[2] * s, q[3] * s]
    }

    pub fn from_theta(theta: &[f64; 3]) -> Quaternion {
        let r = (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]).sqrt();
        let sinc = if r < SERIES_CUTOFF { 1.0 - r * r / 6.0 } else { r.sin() / r };
        Quaternion([r.cos(), sinc * theta[0], sinc * theta[1], sinc * theta[2]])
    }
}

/// `U = e^{−iθ·σ}` together with its quaternion.
pub fn su2_unitary(theta: &[f64; 3]) -> (CMatrix, Quaternion) {
    let q = Quaternion::from_theta(theta);
    (q.unitary(), q)
}

/// `diag(e^{−iθt/2}, e^{iθt/2})`.
pub fn phase_unitary(theta: f64, time: f64) -> CMatrix {
    let phi = theta * time / 2.0;
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::from_polar(1.0, -phi),
        C64::from_polar(1.0, phi),
    ]))
}

pub fn amplitude_damping_kraus(p: f64) -> Result<Vec<CMatrix>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("damping probability {p} outside [0, 1]")));
    }
    let k1 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p).sqrt(), 0.0)]);
    let k2 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(p.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    Ok(vec![k1, k2])
}

/// Thermal occupation, ground-state weight and decay factor of the
/// thermalization channel.
#[derive(Clone, Copy, Debug)]
pub struct ThermalRates {
    pub occupation: f64,
    pub ground: f64,
    pub gamma: f64,
}

pub fn thermal_rates(theta: f64, energy: f64, spectral: f64, time: f64) -> Result<ThermalRates> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {theta}")));
    }
    if !(time >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {time}")));
    }
    if !(spectral > 0.0) || !(energy > 0.0) {
        return Err(Error::InvalidParameter("energy and spectral density must be positive".into()));
    }
    let occupation = 1.0 / (energy / theta).exp_m1();
    Ok(rates_from_occupation(occupation, spectral, time))
}

pub fn rates_from_occupation(occupation: f64, spectral: f64, time: f64) -> ThermalRates {
    let ground = (occupation + 1.0) / (2.0 * occupation + 1.0);
    let gamma = (-spectral * (2.0 * occupation + 1.0) * time).exp();
    ThermalRates { occupation, ground, gamma }
}

pub fn thermal_kraus_from_rates(r: ThermalRates) -> Vec<CMatrix> {
    let (p, g) = (r.ground, r.gamma);
    let sp = p.sqrt();
    let sq = (1.0 - p).sqrt();
    let z = c(0.0, 0.0);
    let re = |x: f64| c(x, 0.0);
    vec![
        CMatrix::from_row_slice(2, 2, &[re(sp), z, z, re(sp * g.sqrt())]),
        CMatrix::from_row_slice(2, 2, &[z, re(sp * (1.0 - g).sqrt()), z, z]),
        CMatrix::from_row_slice(2, 2, &[re(sq * g.sqrt()), z, z, re(sq)]),
        CMatrix::from_row_slice(2, 2, &[z, z, re(sq * (1.0 - g).sqrt()), z]),
    ]
}

pub fn thermometry_kraus(theta: f64, energy: f64, spectral: f64, time: f64) -> Result<Vec<CMatrix>> {
    Ok(thermal_kraus_from_rates(thermal_rates(theta, energy, spectral, time)?))
}

/// Closed-form Choi operator of the thermalization channel on `(I, O)`.
pub fn thermometry_choi(theta: f64, energy: f64, spectral: f64, time: f64) -> Result<HermitianOperator> {
    let r = thermal_rates(theta, energy, spectral, time)?;
    let (n, g) = (r.occupation, r.gamma);
    let z = 2.0 * n + 1.0;
    let mut m = DMatrix::<f64>::zeros(4, 4);
    m[(0, 0)] = (1.0 + n * (g + 1.0)) / z;
    m[(1, 1)] = n * (1.0 - g) / z;
    m[(2, 2)] = (n + 1.0) * (1.0 - g) / z;
    m[(3, 3)] = (n + g * (1.0 + n)) / z;
    m[(0, 3)] = g.sqrt();
    m[(3, 0)] = g.sqrt();
    let layout = SystemLayout::new([("I", 2), ("O", 2)])?;
    HermitianOperator::new(layout, m.map(|x| c(x, 0.0)))
}

/// A parameter-encoding qubit channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    /// `e^{−iθ·σ}` with a three-component parameter.
    Su2Unitary,
    /// `e^{−iθtσz/2}`.
    PhaseUnitary { time: f64 },
    /// Parameter-free amplitude damping.
    AmplitudeDamping { p: f64 },
    /// Thermalization with temperature as the parameter.
    Thermometry { energy: f64, spectral: f64, time: f64 },
    /// `noise ∘ base`.
    Composed { noise: Box<ChannelModel>, base: Box<ChannelModel> },
}

impl ChannelModel {
    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn output_dim(&self) -> usize {
        2
    }

    /// Number of real parameters (zero for parameter-free channels).
    pub fn param_dim(&self) -> usize {
        match self {
            ChannelModel::Su2Unitary => 3,
            ChannelModel::PhaseUnitary { .. } | ChannelModel::Thermometry { .. } => 1,
            ChannelModel::AmplitudeDamping { .. } => 0,
            ChannelModel::Composed { noise, base } => noise.param_dim().max(base.param_dim()),
        }
    }

    fn theta_scalar(theta: &[f64]) -> Result<f64> {
        theta
            .first()
            .copied()
            .ok_or_else(|| Error::InvalidParameter("missing scalar parameter".into()))
    }

    pub fn kraus(&self, theta: &[f64]) -> Result<Vec<CMatrix>> {
        match self {
            ChannelModel::Su2Unitary => {
                if theta.len() != 3 {
                    return Err(Error::InvalidParameter(format!(
                        "SU(2) parameter needs 3 components, got {}",
                        theta.len()
                    )));
                }
                Ok(vec![su2_unitary(&[theta[0], theta[1], theta[2]]).0])
            }
            ChannelModel::PhaseUnitary { time } => Ok(vec![phase_unitary(Self::theta_scalar(theta)?, *time)]),
            ChannelModel::AmplitudeDamping { p } => amplitude_damping_kraus(*p),
            ChannelModel::Thermometry { energy, spectral, time } => {
                thermometry_kraus(Self::theta_scalar(theta)?, *energy, *spectral, *time)
            }
            ChannelModel::Composed { noise, base } => {
                let outer = noise.kraus(theta)?;
                let inner = base.kraus(theta)?;
                let mut out = Vec::with_capacity(outer.len() * inner.len());
                for a in &outer {
                    for b in &inner {
                        out.push(a * b);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Single-use Choi operator on `(in_label, out_label)`.
    pub fn choi_labeled(&self, theta: &[f64], in_label: &str, out_label: &str) -> Result<HermitianOperator> {
        choi_from_kraus(&self.kraus(theta)?, in_label, out_label)
    }

    pub fn choi(&self, theta: &[f64]) -> Result<HermitianOperator> {
        self.choi_labeled(theta, "I", "O")
    }

    /// `J_θ^{⊗k}` on `(I1, O1, …, Ik, Ok)`.
    pub fn choi_power(&self, theta: &[f64], copies: usize) -> Result<HermitianOperator> {
        let single = self.choi(theta)?.into_matrix();
        let mut mat = CMatrix::from_element(1, 1, c(1.0, 0.0));
        for _ in 0..copies {
            mat = mat.kronecker(&single);
        }
        let layout = SystemLayout::channel_uses(self.input_dim(), self.output_dim(), copies);
        HermitianOperator::new(layout, mat)
    }

    /// Noiseless unitary part, used to define fidelity-type costs.
    pub fn cost_reference(&self) -> &ChannelModel {
        match self {
            ChannelModel::Composed { base, .. } => base.cost_reference(),
            other => other,
        }
    }
}

/// `noise ∘ base`, checking that the dimensions chain.
pub fn compose(noise: ChannelModel, base: ChannelModel) -> Result<ChannelModel> {
    if base.output_dim() != noise.input_dim() {
        return Err(Error::Dimension(format!(
            "cannot feed a {}-dimensional output into a {}-dimensional input",
            base.output_dim(),
            noise.input_dim()
        )));
    }
    Ok(ChannelModel::Composed { noise: Box::new(noise), base: Box::new(base) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn assert_valid_choi(j: &HermitianOperator) {
        assert!(j.min_eigenvalue() >= -1e-10);
        let tr = j.partial_trace(&["O"]).unwrap();
        assert!(linalg::max_abs(&(tr.matrix() - CMatrix::identity(2, 2))) < 1e-10);
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        linalg::max_abs(&(a - b)) < tol
    }

    #[test]
    fn su2_special_points() {
        let (u, q) = su2_unitary(&[0.0, 0.0, 0.0]);
        assert_eq!(q, Quaternion::IDENTITY);
        assert!(close(&u, &CMatrix::identity(2, 2), 1e-15));
        let (u, q) = su2_unitary(&[PI / 2.0, 0.0, 0.0]);
        assert!(q.0[0].abs() < 1e-15 && (q.0[1] - 1.0).abs() < 1e-15);
        let want = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        assert!(close(&u, &want, 1e-15));
    }

    #[test]
    fn su2_series_branch_is_continuous() {
        let (_, a) = su2_unitary(&[0.999e-6, 0.0, 0.0]);
        let (_, b) = su2_unitary(&[1.001e-6, 0.0, 0.0]);
        assert!((a.0[1] - b.0[1]).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn su2_fidelity_matches_quaternion_overlap(
            a in prop::array::uniform3(-1.8f64..1.8),
            b in prop::array::uniform3(-1.8f64..1.8),
        ) {
            let (u, qa) = su2_unitary(&a);
            let (v, qb) = su2_unitary(&b);
            prop_assert!(close(&(u.adjoint() * &u), &CMatrix::identity(2, 2), 1e-12));
            let overlap = (u.adjoint() * v).trace().norm_sqr() / 4.0;
            prop_assert!((overlap - qa.dot(&qb).powi(2)).abs() < 1e-12);
        }

        #[test]
        fn theta_round_trip(a in prop::array::uniform3(-0.9f64..0.9)) {
            let q = Quaternion::from_theta(&a);
            let back = q.to_theta();
            for i in 0..3 {
                prop_assert!((back[i] - a[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn thermometry_closed_form_matches_kraus(theta in 0.5f64..25.0, t in 0.0f64..6.0) {
            let closed = thermometry_choi(theta, 1.0, 1.0, t).unwrap();
            let kraus = choi_from_kraus(&thermometry_kraus(theta, 1.0, 1.0, t).unwrap(), "I", "O").unwrap();
            prop_assert!(close(closed.matrix(), kraus.matrix(), 1e-10));
            assert_valid_choi(&closed);
        }
    }

    #[test]
    fn phase_unitary_cases() {
        assert!(close(&phase_unitary(0.0, 1.0), &CMatrix::identity(2, 2), 1e-15));
        assert!(close(&phase_unitary(2.0 * PI, 1.0), &(-CMatrix::identity(2, 2)), 1e-15));
        let model = ChannelModel::PhaseUnitary { time: 1.0 };
        let j = model.choi(&[PI / 2.0]).unwrap();
        // ⟨00|J|11⟩ = U_00 conj(U_11) = e^{−iπ/4} e^{−iπ/4}.
        let z = j.matrix()[(0, 3)];
        assert_abs_diff_eq!(z.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, -1.0, epsilon = 1e-15);
        let wrapped = model.choi(&[2.0 * PI]).unwrap();
        let id = ChannelModel::AmplitudeDamping { p: 0.0 }.choi(&[]).unwrap();
        assert!(close(wrapped.matrix(), id.matrix(), 1e-14));
    }

    #[test]
    fn amplitude_damping_cases() {
        let id = ChannelModel::AmplitudeDamping { p: 0.0 }.choi(&[]).unwrap();
        let ident = choi_from_kraus(&[CMatrix::identity(2, 2)], "I", "O").unwrap();
        assert_eq!(id.matrix(), ident.matrix());

        let full = ChannelModel::AmplitudeDamping { p: 1.0 }.choi(&[]).unwrap();
        let mut rng = rand::rng();
        let rho = linalg::random_density(2, &mut rng);
        let out = crate::operator::apply_choi(full.matrix(), 2, &rho);
        let ground = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(close(&out, &ground, 1e-14));

        let half = ChannelModel::AmplitudeDamping { p: 0.5 }.choi(&[]).unwrap();
        assert_abs_diff_eq!(half.eigenvalues().sum(), 2.0, epsilon = 1e-12);
        assert!(amplitude_damping_kraus(1.5).is_err());
    }

    #[test]
    fn thermometry_limits() {
        let j0 = thermometry_choi(3.0, 1.0, 1.0, 0.0).unwrap();
        let ident = choi_from_kraus(&[CMatrix::identity(2, 2)], "I", "O").unwrap();
        assert!(close(j0.matrix(), ident.matrix(), 1e-14));

        // Long-time limit: 1_I ⊗ thermal state.
        let theta = 2.0;
        let n = 1.0 / (1.0f64 / theta).exp_m1();
        let jinf = thermometry_choi(theta, 1.0, 1.0, 200.0).unwrap();
        let thermal = CMatrix::from_row_slice(
            2,
            2,
            &[c((n + 1.0) / (2.0 * n + 1.0), 0.0), c(0.0, 0.0), c(0.0, 0.0), c(n / (2.0 * n + 1.0), 0.0)],
        );
        let want = CMatrix::identity(2, 2).kronecker(&thermal);
        assert!(close(jinf.matrix(), &want, 1e-12));

        assert!(thermometry_choi(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(thermometry_choi(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn printed_output_first_matrix_is_the_same_channel() {
        // The printed closed form orders the output factor first; permuting
        // the factors must recover the input-first Choi operator.
        let (theta, t) = (4.0, 0.7);
        let r = thermal_rates(theta, 1.0, 1.0, t).unwrap();
        let (n, g) = (r.occupation, r.gamma);
        let z = 2.0 * n + 1.0;
        let diag = [
            (1.0 + n * (g + 1.0)) / z,
            (n + 1.0) * (1.0 - g) / z,
            n * (1.0 - g) / z,
            (n + g * (1.0 + n)) / z,
        ];
        let mut printed = CMatrix::zeros(4, 4);
        for (i, d) in diag.iter().enumerate() {
            printed[(i, i)] = c(*d, 0.0);
        }
        printed[(0, 3)] = c(g.sqrt(), 0.0);
        printed[(3, 0)] = c(g.sqrt(), 0.0);
        let printed = HermitianOperator::new(SystemLayout::new([("O", 2), ("I", 2)]).unwrap(), printed).unwrap();
        let kraus = choi_from_kraus(&thermometry_kraus(theta, 1.0, 1.0, t).unwrap(), "I", "O").unwrap();
        assert!(close(printed.permute(&["I", "O"]).unwrap().matrix(), kraus.matrix(), 1e-12));
    }

    #[test]
    fn composition_cases() {
        let theta = [0.3, -0.2, 0.5];
        let clean = ChannelModel::Su2Unitary.choi(&theta).unwrap();
        let ad0 = compose(ChannelModel::AmplitudeDamping { p: 0.0 }, ChannelModel::Su2Unitary).unwrap();
        assert!(close(ad0.choi(&theta).unwrap().matrix(), clean.matrix(), 1e-14));

        let ad1 = compose(ChannelModel::AmplitudeDamping { p: 1.0 }, ChannelModel::Su2Unitary).unwrap();
        let a = ad1.choi(&theta).unwrap();
        let b = ad1.choi(&[1.1, 0.4, -0.3]).unwrap();
        assert!(close(a.matrix(), b.matrix(), 1e-14));

        let half = compose(ChannelModel::AmplitudeDamping { p: 0.5 }, ChannelModel::AmplitudeDamping { p: 0.0 }).unwrap();
        assert_valid_choi(&half.choi(&[]).unwrap());
        assert_eq!(ad1.cost_reference(), &ChannelModel::Su2Unitary);
    }

    #[test]
    fn composition_matches_link_product() {
        // Brute-force link product: J = Σ_{a,b} |a⟩⟨b| ⊗ Λ2(Λ1(|a⟩⟨b|)).
        let noise = ChannelModel::AmplitudeDamping { p: 0.3 };
        let base = ChannelModel::Su2Unitary;
        let theta = [0.4, 0.1, -0.7];
        let j1 = base.choi(&theta).unwrap();
        let j2 = noise.choi(&theta).unwrap();
        let mut want = CMatrix::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                let mut e = CMatrix::zeros(2, 2);
                e[(a, b)] = c(1.0, 0.0);
                let mid = crate::operator::apply_choi(j1.matrix(), 2, &e);
                let out = crate::operator::apply_choi(j2.matrix(), 2, &mid);
                want.view_mut((2 * a, 2 * b), (2, 2)).copy_from(&out);
            }
        }
        let got = compose(noise, base).unwrap().choi(&theta).unwrap();
        assert!(close(got.matrix(), &want, 1e-14));
    }

    #[test]
    fn choi_power_layout_and_trace() {
        let j2 = ChannelModel::Su2Unitary.choi_power(&[0.1, 0.2, 0.3], 2).unwrap();
        assert_eq!(j2.layout(), &SystemLayout::channel_uses(2, 2, 2));
        assert_abs_diff_eq!(j2.trace(), 4.0, epsilon = 1e-12);
    }
}
