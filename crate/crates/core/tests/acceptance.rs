//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines are printed on every `cargo test`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use qmetro::analysis::{operator_norm, prior_fisher_info, thermometry_beta, van_trees_check, analytic_su2_score, classical_fisher_info};
use qmetro::channels::{compose, ChannelModel};
use qmetro::cost::{CostKernel, Direction};
use qmetro::greedy::{adaptive_comb, run_greedy, GreedyConfig, GreedyProblem, GreedyReport};
use qmetro::linalg::{eigvalsh, random_density, trace_norm};
use qmetro::operator::{CMatrix, HermitianOperator, SystemLayout, C64};
use qmetro::prior::{haar_density, haar_grid_mass, haar_prior_su2, sine_exp_density, sine_exp_prior, uniform_prior, HypothesisSet, SamplingMode};
use qmetro::realization::{realize_parallel, realize_sequential_k2};
use qmetro::sdp::SdpOptions;
use qmetro::seesaw::{run_seesaw_with_starts, warm_start, SeesawConfig, SeesawProblem, SeesawResult};
use qmetro::testers::{ChannelDims, StrategyClass, StrategyKind, TesterObjective, TesterProgram, TesterSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;
const KINDS: [StrategyKind; 3] = [StrategyKind::Parallel, StrategyKind::Sequential, StrategyKind::General];

struct Suite {
    failures: usize,
    regressions: Vec<(String, f64)>,
}

impl Suite {
    fn report(&mut self, n: usize, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] #{n:<2} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn seesaw(&mut self, tag: &str, problem: &SeesawProblem, cfg: &SeesawConfig, starts: &[qmetro::cost::EstimatorSet]) -> SeesawResult {
        let r = run_seesaw_with_starts(problem, cfg, starts).expect("seesaw failed");
        self.regressions.push((tag.to_string(), r.largest_regression));
        r
    }

    fn greedy(&mut self, tag: &str, problem: &GreedyProblem, cfg: &GreedyConfig) -> GreedyReport {
        let r = run_greedy(problem, cfg).expect("greedy failed");
        self.regressions.push((tag.to_string(), r.seesaw_regression));
        r
    }
}

fn seesaw_cfg(n_restarts: usize, n_outcomes: usize) -> SeesawConfig {
    SeesawConfig { n_restarts, n_outcomes, sdp: SdpOptions { tol: TOL, ..Default::default() }, ..Default::default() }
}

fn problem(kind: StrategyKind, copies: usize, channel: &ChannelModel, h: &HypothesisSet, kernel: CostKernel) -> SeesawProblem {
    let h = h.clone().with_cache(channel, copies).unwrap();
    SeesawProblem::new(StrategyClass::new(kind, copies), ChannelDims::of(channel), h, kernel).unwrap()
}

fn su2_prior() -> HypothesisSet {
    haar_prior_su2(2000, SamplingMode::Grid, 0).unwrap()
}

fn criterion_1(s: &mut Suite) {
    let t = Instant::now();
    let p = problem(StrategyKind::Parallel, 1, &ChannelModel::Su2Unitary, &su2_prior(), CostKernel::FidelitySu2);
    let r = s.seesaw("su2 k=1", &p, &seesaw_cfg(5, 16), &[]);
    let secs = t.elapsed().as_secs_f64();
    let pass = (r.score() - 0.5).abs() <= 5e-3 && secs < 120.0;
    s.report(1, "SU(2) Haar k=1 parallel", pass, format!("score {:.8} (target 0.5 ± 5e-3, N_H 2000, N_O 16), {secs:.1} s", r.score()));
}

fn criteria_2_and_9(s: &mut Suite) {
    let t = Instant::now();
    let h = su2_prior();
    let target = analytic_su2_score(2);
    let mut scores = Vec::new();
    let mut testers = Vec::new();
    for kind in KINDS {
        let p = problem(kind, 2, &ChannelModel::Su2Unitary, &h, CostKernel::FidelitySu2);
        let r = s.seesaw(&format!("su2 k=2 {kind}"), &p, &seesaw_cfg(3, 27), &[]);
        scores.push(r.score());
        testers.push(r.best.testers);
    }
    let secs = t.elapsed().as_secs_f64();
    let spread = scores.iter().cloned().fold(f64::MIN, f64::max) - scores.iter().cloned().fold(f64::MAX, f64::min);
    let pass = scores.iter().all(|x| (x - target).abs() <= 1.5e-2) && spread <= 5e-3 && secs < 1800.0;
    s.report(
        2,
        "SU(2) Haar k=2 all classes",
        pass,
        format!("par {:.8} seq {:.8} gen {:.8} (target {target:.8} ± 1.5e-2), spread {spread:.2e} (≤ 5e-3), {secs:.1} s", scores[0], scores[1], scores[2]),
    );

    // Realization round trips on the k=2 optimal testers.
    let points = haar_prior_su2(100, SamplingMode::Importance, 2024).unwrap().points().to_vec();
    let model = ChannelModel::Su2Unitary;
    let par = realize_parallel(&testers[0]).unwrap();
    let seq = realize_sequential_k2(&testers[1]).unwrap();
    let (mut dev_par, mut dev_seq) = (0.0_f64, 0.0_f64);
    for theta in &points {
        let jj = model.choi_power(theta, 2).unwrap();
        let j = model.choi(theta).unwrap();
        let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        dev_par = dev_par.max(dev(&par.probabilities(&jj).unwrap(), &testers[0].probabilities(&jj).unwrap()));
        dev_seq = dev_seq.max(dev(&seq.probabilities(&j, &j), &testers[1].probabilities(&jj).unwrap()));
    }
    s.report(
        9,
        "realization round trips",
        dev_par <= 1e-7 && dev_seq <= 1e-7,
        format!("max |Δp| parallel {dev_par:.2e}, sequential {dev_seq:.2e} on 100 points (≤ 1e-7)"),
    );
}

fn damped_su2(p: f64) -> ChannelModel {
    compose(ChannelModel::AmplitudeDamping { p }, ChannelModel::Su2Unitary).unwrap()
}

fn criterion_3(s: &mut Suite) {
    let h = su2_prior();
    let channel = damped_su2(1.0);
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in KINDS {
        let p = problem(kind, 2, &channel, &h, CostKernel::FidelitySu2);
        let r = s.seesaw(&format!("damped p=1 {kind}"), &p, &seesaw_cfg(2, 27), &[]);
        pass &= (r.score() - 0.25).abs() <= 1e-3;
        parts.push(format!("{} {:.8}", kind.short_name(), r.score()));
    }
    let g = GreedyProblem::new(channel, h, CostKernel::FidelitySu2);
    let cfg = GreedyConfig { n_traj: 10_000, rounds: 2, seesaw: seesaw_cfg(2, 27), ..Default::default() };
    let r = s.greedy("damped p=1 greedy", &g, &cfg);
    let last = r.last();
    pass &= (last.conditional_mean - 0.25).abs() <= 1e-3;
    parts.push(format!("greedy {:.8} (realized {:.4} ± {:.4})", last.conditional_mean, last.mean, last.std_error));
    s.report(3, "damped SU(2) p=1", pass, format!("{} (target 0.25 ± 1e-3)", parts.join(", ")));
}

fn criterion_4(s: &mut Suite) {
    let h = su2_prior();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for p in [0.25, 0.5, 0.75] {
        let channel = damped_su2(p);
        let cfg = seesaw_cfg(2, 27);
        let mut scores = Vec::new();
        let mut previous: Option<TesterSet> = None;
        for kind in KINDS {
            let prob = problem(kind, 2, &channel, &h, CostKernel::FidelitySu2);
            // Each class starts from the optimum of the class below it.
            let starts = match &previous {
                Some(t) => vec![warm_start(&prob, t, cfg.n_outcomes).unwrap()],
                None => Vec::new(),
            };
            let r = s.seesaw(&format!("damped p={p} {kind}"), &prob, &cfg, &starts);
            scores.push(r.score());
            previous = Some(r.best.testers);
        }
        worst = worst.max(scores[0] - scores[1]).max(scores[1] - scores[2]);
        let gaps = if p == 0.5 {
            format!(" [gaps seq−par {:.2e}, gen−seq {:.2e}]", scores[1] - scores[0], scores[2] - scores[1])
        } else {
            String::new()
        };
        parts.push(format!("p={p}: {:.8} ≤ {:.8} ≤ {:.8}{gaps}", scores[0], scores[1], scores[2]));
    }
    s.report(
        4,
        "damped SU(2) class ordering",
        worst <= 2.0 * TOL,
        format!("{}; worst violation {:.2e} (≤ {:.0e})", parts.join("; "), worst.max(0.0), 2.0 * TOL),
    );
}

fn criterion_5(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let theta = 1.0 + 19.0 * i as f64 / 4.0;
            let t = 0.1 + 4.9 * j as f64 / 4.0;
            worst = worst.max(operator_norm(&thermometry_beta(theta, 1.0, 1.0, t).unwrap()));
        }
    }
    s.report(5, "thermometry β vanishes", worst <= 1e-8, format!("max ‖β‖ {worst:.2e} on 5×5 (θ, t) grid (≤ 1e-8)"));
}

fn criterion_6(s: &mut Suite) {
    let h = uniform_prior(1.0, 20.0, 2500).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for time in [0.1, 1.0, 5.0] {
        let channel = ChannelModel::Thermometry { energy: 1.0, spectral: 1.0, time };
        let g = GreedyProblem::new(channel.clone(), h.clone(), CostKernel::RelativeMse);
        let cfg = GreedyConfig { n_traj: 10_000, rounds: 2, seesaw: seesaw_cfg(2, 4), ..Default::default() };
        let greedy = s.greedy(&format!("thermometry t={time} greedy"), &g, &cfg);
        // The greedy tree is itself a sequential comb and seeds the
        // sequential seesaw next to random starts.
        let comb = adaptive_comb(&g, &cfg).unwrap();
        let prob = problem(StrategyKind::Sequential, 2, &channel, &h, CostKernel::RelativeMse);
        let scfg = seesaw_cfg(2, 20);
        let seed = warm_start(&prob, &comb, scfg.n_outcomes).unwrap();
        let seq = s.seesaw(&format!("thermometry t={time} seq"), &prob, &scfg, &[seed]);
        let last = greedy.last();
        let z = (last.mean - seq.score()).abs() / last.std_error;
        pass &= z <= 3.0;
        parts.push(format!("t={time}: greedy {:.5} ± {:.5} vs seq {:.6} ({z:.2} SE)", last.mean, last.std_error, seq.score()));
    }
    s.report(6, "thermometry greedy matches sequential", pass, format!("{} (≤ 3 SE)", parts.join("; ")));
}

fn criterion_7(s: &mut Suite) {
    // Cartesian midpoint rule over the cube containing the ball.
    let n = 160;
    let h = 2.0 * PI / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = -PI + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -PI + (j as f64 + 0.5) * h;
            for k in 0..n {
                let z = -PI + (k as f64 + 0.5) * h;
                total += haar_density(&[x, y, z]);
            }
        }
    }
    total *= h * h * h;
    let grid = haar_grid_mass(2000);
    let pass = (total - 1.0).abs() <= 1e-3 && (grid - 1.0).abs() <= 1e-3;
    s.report(7, "Haar density normalization", pass, format!("cartesian {total:.8}, radial {grid:.8} (1 ± 1e-3)"));
}

fn criterion_8(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut worst_formula: f64 = 0.0;
    for inst in 0..20 {
        let d_out = 2 + inst % 2;
        let dims = ChannelDims { d_in: 2, d_out };
        let p0: f64 = rng.random_range(0.1..0.9);
        let priors = [p0, 1.0 - p0];
        let rhos = [random_density(d_out, &mut rng), random_density(d_out, &mut rng)];
        let layout = SystemLayout::channel_uses(2, d_out, 1);
        let ops: Vec<HermitianOperator> = rhos
            .iter()
            .zip(priors)
            .map(|(r, p)| HermitianOperator::new(layout.clone(), CMatrix::identity(2, 2).kronecker(r) * C64::new(p, 0.0)).unwrap())
            .collect();
        let objective = TesterObjective::from_operators(&ops, Direction::Maximize).unwrap();
        let program = TesterProgram::new(StrategyClass::new(StrategyKind::Parallel, 1), dims).unwrap();
        let (_, report) = program.solve(&objective, &SdpOptions { tol: TOL, ..Default::default() }).unwrap();
        // Projector onto the positive part of p₀ρ₀ − p₁ρ₁.
        let delta = &rhos[0] * C64::new(priors[0], 0.0) - &rhos[1] * C64::new(priors[1], 0.0);
        let brute = priors[1] + eigvalsh(&delta).iter().filter(|v| **v > 0.0).sum::<f64>();
        let closed = 0.5 * (1.0 + trace_norm(&delta));
        worst = worst.max((report.value - brute).abs());
        worst_formula = worst_formula.max((closed - brute).abs());
    }
    s.report(
        8,
        "Helstrom discrimination",
        worst <= 1e-7 && worst_formula <= 1e-12,
        format!("max |SDP − Helstrom| {worst:.2e} over 20 instances (≤ 1e-7); optimum ½(1 + ‖p₀ρ₀ − p₁ρ₁‖₁)"),
    );
}

fn criterion_11(s: &mut Suite) {
    let g = GreedyProblem::new(ChannelModel::Su2Unitary, su2_prior(), CostKernel::FidelitySu2);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [2, 3] {
        let run = |s: &mut Suite, adaptive: bool| {
            let cfg = GreedyConfig { n_traj: 10_000, rounds: k, adaptive, seed: 11, seesaw: seesaw_cfg(2, 27), ..Default::default() };
            s.greedy(&format!("su2 greedy k={k} adaptive={adaptive}"), &g, &cfg)
        };
        let a = run(s, true);
        let n = run(s, false);
        let (a, n) = (a.last().clone(), n.last().clone());
        let combined = (a.std_error.powi(2) + n.std_error.powi(2)).sqrt();
        pass &= a.mean >= n.mean - 3.0 * combined;
        parts.push(format!("k={k}: adaptive {:.4} ± {:.4}, non-adaptive {:.4} ± {:.4}", a.mean, a.std_error, n.mean, n.std_error));
    }
    s.report(11, "adaptive ≥ non-adaptive greedy", pass, format!("{} (3 combined SE)", parts.join("; ")));
}

/// QFI of `U_θ^{⊗k}|GHZ⟩` for the noiseless phase, by finite differences of
/// the pure state.
fn ghz_phase_qfi(k: usize, time: f64, theta: f64) -> f64 {
    let model = ChannelModel::PhaseUnitary { time };
    let state = |t: f64| {
        let u = model.kraus(&[t]).unwrap().remove(0);
        let mut big = CMatrix::identity(1, 1);
        for _ in 0..k {
            big = big.kronecker(&u);
        }
        let d = big.nrows();
        let mut ghz = DVector::<C64>::zeros(d);
        ghz[0] = C64::new(0.5_f64.sqrt(), 0.0);
        ghz[d - 1] = C64::new(0.5_f64.sqrt(), 0.0);
        big * ghz
    };
    let h = 1e-5;
    let psi = state(theta);
    let dpsi = (state(theta + h) - state(theta - h)) / C64::new(2.0 * h, 0.0);
    4.0 * (dpsi.norm_squared() - psi.dotc(&dpsi).norm_sqr())
}

fn criterion_12(s: &mut Suite) {
    let (lo, hi, alpha, time) = (0.0, 2.0 * PI, 100.0, 1.0);
    let channel = compose(ChannelModel::AmplitudeDamping { p: 0.0 }, ChannelModel::PhaseUnitary { time }).unwrap();
    let h = sine_exp_prior(alpha, lo, hi, 1000).unwrap();
    let prob = problem(StrategyKind::Sequential, 2, &channel, &h, CostKernel::CosSquared);
    let r = s.seesaw("phase sharp prior", &prob, &seesaw_cfg(2, 27), &[]);
    let f0 = prior_fisher_info(|x| sine_exp_density(alpha, lo, hi, x), lo, hi, 20_000).unwrap();
    let qfi = ghz_phase_qfi(2, time, PI);
    let achieved = classical_fisher_info(&r.best.testers, &channel, PI, 1e-4).unwrap();
    let v = van_trees_check(f0, qfi, r.score());
    let pass = v.discrepancy <= 1e-2 && (v.baseline - 0.995).abs() <= 1e-3;
    s.report(
        12,
        "Van Trees sharp-prior relation",
        pass,
        format!(
            "observed {:.6}, predicted {:.6} (|Δ| {:.2e} ≤ 1e-2), C {:.5}, F₀ {:.3}, F* {qfi:.4}, tester FI {achieved:.4}",
            v.observed, v.predicted, v.discrepancy, v.baseline, f0
        ),
    );
}

fn criterion_10(s: &mut Suite) {
    let (tag, worst) = s.regressions.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let detail = if worst > 0.0 {
        format!("largest regression {worst:.2e} in \"{tag}\" over {} runs (≤ 1e-9)", s.regressions.len())
    } else {
        format!("no regression over {} runs (≤ 1e-9)", s.regressions.len())
    };
    s.report(10, "seesaw monotonicity", worst <= 1e-9, detail);
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut s = Suite { failures: 0, regressions: Vec::new() };
    criterion_1(&mut s);
    criteria_2_and_9(&mut s);
    criterion_3(&mut s);
    criterion_4(&mut s);
    criterion_5(&mut s);
    criterion_6(&mut s);
    criterion_7(&mut s);
    criterion_8(&mut s);
    criterion_11(&mut s);
    criterion_12(&mut s);
    criterion_10(&mut s);
    println!("acceptance: {} failure(s), {:.0} s", s.failures, start.elapsed().as_secs_f64());
    if s.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
