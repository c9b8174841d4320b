use proptest::prelude::*;
use qmetro::channels::ChannelModel;
use qmetro::cost::{initial_estimators, CostKernel, Direction};
use qmetro::linalg::{eigvalsh, random_density, random_hermitian, random_kraus};
use qmetro::operator::{choi_from_kraus, CMatrix, HermitianOperator, SystemLayout, C64};
use qmetro::prior::{haar_prior_su2, HypothesisSet, SamplingMode};
use qmetro::sdp::SdpOptions;
use qmetro::testers::{
    build_objective, constraints_for, constraints_general_k2, Backend, ChannelDims, StrategyClass, StrategyKind, TesterObjective,
    TesterProgram, TesterSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QUBIT: ChannelDims = ChannelDims { d_in: 2, d_out: 2 };
const KINDS: [StrategyKind; 3] = [StrategyKind::Parallel, StrategyKind::Sequential, StrategyKind::General];

fn opts() -> SdpOptions {
    SdpOptions::default()
}

fn channel_pair<R: Rng>(rng: &mut R) -> HermitianOperator {
    let j1 = choi_from_kraus(&random_kraus(2, 2, 2, rng), "I1", "O1").unwrap();
    let j2 = choi_from_kraus(&random_kraus(2, 2, 3, rng), "I2", "O2").unwrap();
    j1.kron(&j2).unwrap()
}

fn random_objective(layout: &SystemLayout, n: usize, seed: u64, direction: Direction) -> TesterObjective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops: Vec<HermitianOperator> = (0..n)
        .map(|_| {
            let g = random_hermitian(layout.dim(), &mut rng);
            HermitianOperator::from_hermitian_part(layout.clone(), &g * g.adjoint() / C64::new(layout.dim() as f64, 0.0)).unwrap()
        })
        .collect();
    TesterObjective::from_operators(&ops, direction).unwrap()
}

fn solve(kind: StrategyKind, copies: usize, objective: &TesterObjective) -> (TesterSet, f64) {
    let (t, report) = TesterProgram::new(StrategyClass::new(kind, copies), QUBIT).unwrap().solve(objective, &opts()).unwrap();
    (t, report.value)
}

/// Memoryless comb: state on `I1`, a random channel `O1 → I2`, identity on `O2`.
fn product_comb(seed: u64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = HermitianOperator::new(SystemLayout::new([("I1", 2)]).unwrap(), random_density(2, &mut rng)).unwrap();
    let link = choi_from_kraus(&random_kraus(2, 2, 2, &mut rng), "O1", "I2").unwrap();
    let out = HermitianOperator::identity(SystemLayout::new([("O2", 2)]).unwrap());
    rho.kron(&link).unwrap().kron(&out).unwrap()
}

/// `σ_{I1 I2} ⊗ 1_{O1 O2}` in canonical order.
fn parallel_w(seed: u64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = HermitianOperator::new(SystemLayout::new([("I1", 2), ("I2", 2)]).unwrap(), random_density(4, &mut rng)).unwrap();
    let ones = HermitianOperator::identity(SystemLayout::new([("O1", 2), ("O2", 2)]).unwrap());
    sigma.kron(&ones).unwrap().permute(&["I1", "O1", "I2", "O2"]).unwrap()
}

#[test]
fn feasible_sets_are_nested() {
    let sets: Vec<_> = KINDS.iter().map(|k| constraints_for(StrategyClass::new(*k, 2), QUBIT).unwrap()).collect();
    for seed in 0..10 {
        let par = parallel_w(seed);
        assert!(sets.iter().all(|c| c.residual(&par).unwrap() < 1e-12));
        let comb = product_comb(seed);
        assert!(sets[1].residual(&comb).unwrap() < 1e-12);
        assert!(sets[2].residual(&comb).unwrap() < 1e-12);
        // A signalling comb is not a parallel tester.
        assert!(sets[0].residual(&comb).unwrap() > 1e-3);
    }
}

#[test]
fn general_testers_normalize_every_channel_pair() {
    let layout = SystemLayout::channel_uses(2, 2, 2);
    let (t, _) = solve(StrategyKind::General, 2, &random_objective(&layout, 3, 5, Direction::Maximize));
    let w = t.sum();
    assert!(constraints_general_k2(QUBIT).unwrap().residual(&w).unwrap() < 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let j = channel_pair(&mut rng);
        assert!((w.inner(&j).unwrap() - 1.0).abs() < 1e-8);
        let p = t.probabilities(&j).unwrap();
        assert!(p.iter().all(|x| *x > -1e-8));
    }
}

#[test]
fn orthogonal_unitaries_are_perfectly_distinguished() {
    let i = CMatrix::identity(2, 2);
    let mut z = CMatrix::identity(2, 2);
    z[(1, 1)] = C64::new(-1.0, 0.0);
    let ops: Vec<HermitianOperator> = [i, z]
        .iter()
        .map(|u| {
            let j = choi_from_kraus(std::slice::from_ref(u), "I1", "O1").unwrap();
            HermitianOperator::new(j.layout().clone(), j.matrix() * C64::new(0.5, 0.0)).unwrap()
        })
        .collect();
    let objective = TesterObjective::from_operators(&ops, Direction::Maximize).unwrap();
    let (_, value) = solve(StrategyKind::Parallel, 1, &objective);
    assert!((value - 1.0).abs() < 1e-7, "value {value}");
}

#[test]
fn constant_cost_scores_one_for_every_class() {
    let h = haar_prior_su2(40, SamplingMode::Importance, 1).unwrap().with_cache(&ChannelModel::Su2Unitary, 2).unwrap();
    let cache = h.cache().unwrap();
    let layout = SystemLayout::channel_uses(2, 2, 2);
    let d = layout.dim();
    let mean = h
        .weights()
        .iter()
        .enumerate()
        .fold(nalgebra::DVector::zeros(d * d), |acc, (j, w)| acc + cache.coords.column(j) * *w);
    let avg = HermitianOperator::from_coords(layout, mean.as_slice()).unwrap();
    for kind in KINDS {
        for direction in [Direction::Maximize, Direction::Minimize] {
            let objective = TesterObjective::from_operators(&[avg.clone(), avg.clone()], direction).unwrap();
            let (_, value) = solve(kind, 2, &objective);
            assert!((value - 1.0).abs() < 1e-7, "{kind} {direction:?}: {value}");
        }
    }
}

#[test]
fn prior_rescaling_leaves_the_optimum_unchanged() {
    let base = haar_prior_su2(60, SamplingMode::Importance, 2).unwrap();
    let scaled = HypothesisSet::new(
        base.points().to_vec(),
        base.weights().iter().map(|w| w * 7.5).collect(),
        base.domain().clone(),
        base.mode(),
    )
    .unwrap();
    let est = initial_estimators(&base, 6, 3);
    let value = |h: &HypothesisSet| {
        let h = h.clone().with_cache(&ChannelModel::Su2Unitary, 1).unwrap();
        let objective = build_objective(&h, CostKernel::FidelitySu2, &est).unwrap();
        solve(StrategyKind::Parallel, 1, &objective).1
    };
    assert!((value(&base) - value(&scaled)).abs() < 1e-9);
}

#[test]
fn real_embedding_matches_complex_backend() {
    let layout = SystemLayout::channel_uses(2, 2, 1);
    for seed in 0..3 {
        let objective = random_objective(&layout, 3, seed, Direction::Maximize);
        let program = TesterProgram::new(StrategyClass::new(StrategyKind::Parallel, 1), QUBIT).unwrap();
        let (_, a) = program.clone().solve(&objective, &opts()).unwrap();
        let (_, b) = program.with_backend(Backend::RealEmbedding).solve(&objective, &opts()).unwrap();
        assert!((a.value - b.value).abs() < 1e-7, "{} vs {}", a.value, b.value);
    }
}

#[test]
fn helstrom_value_for_random_state_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let p0: f64 = rng.random_range(0.05..0.95);
        let rhos = [random_density(3, &mut rng), random_density(3, &mut rng)];
        let layout = SystemLayout::new([("I1", 2), ("O1", 3)]).unwrap();
        let ops: Vec<_> = rhos
            .iter()
            .zip([p0, 1.0 - p0])
            .map(|(r, p)| HermitianOperator::new(layout.clone(), CMatrix::identity(2, 2).kronecker(r) * C64::new(p, 0.0)).unwrap())
            .collect();
        let objective = TesterObjective::from_operators(&ops, Direction::Maximize).unwrap();
        let program = TesterProgram::new(StrategyClass::new(StrategyKind::Parallel, 1), ChannelDims { d_in: 2, d_out: 3 }).unwrap();
        let (_, report) = program.solve(&objective, &opts()).unwrap();
        let delta = &rhos[0] * C64::new(p0, 0.0) - &rhos[1] * C64::new(1.0 - p0, 0.0);
        let brute = (1.0 - p0) + eigvalsh(&delta).iter().filter(|v| **v > 0.0).sum::<f64>();
        assert!((report.value - brute).abs() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn class_values_are_ordered(seed in any::<u64>(), maximize in any::<bool>()) {
        let layout = SystemLayout::channel_uses(2, 2, 2);
        let direction = if maximize { Direction::Maximize } else { Direction::Minimize };
        let objective = random_objective(&layout, 3, seed, direction);
        let v: Vec<f64> = KINDS.iter().map(|k| solve(*k, 2, &objective).1).collect();
        let slack = 2e-8 * v.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let sign = if maximize { 1.0 } else { -1.0 };
        prop_assert!(sign * (v[1] - v[0]) >= -slack, "{:?}", v);
        prop_assert!(sign * (v[2] - v[1]) >= -slack, "{:?}", v);
    }

    #[test]
    fn returned_testers_are_normalized_on_channels(seed in any::<u64>(), pick in 0usize..3) {
        let layout = SystemLayout::channel_uses(2, 2, 2);
        let (t, _) = solve(KINDS[pick], 2, &random_objective(&layout, 4, seed, Direction::Maximize));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for _ in 0..10 {
            let total: f64 = t.probabilities(&channel_pair(&mut rng)).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }
        prop_assert!(t.min_eigenvalue() > -1e-8);
    }
}
