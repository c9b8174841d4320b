//! Seesaw optimization over the requested strategy classes.

use log::info;
use qmetro::greedy::{adaptive_comb, GreedyProblem};
use qmetro::realization::realize;
use qmetro::cost::estimator_grid;
use qmetro::seesaw::{run_seesaw_with_starts, solve_fixed_estimators, warm_start, SeesawProblem, SeesawResult};
use qmetro::testers::{ChannelDims, StrategyClass, StrategyKind, TesterSet};
use serde::Serialize;

use crate::config::{Config, Method};
use crate::error::CliError;
use crate::run::RunDir;
use crate::table::Row;

#[derive(Clone, Debug, Serialize)]
pub struct ClassResult {
    pub class: StrategyKind,
    pub copies: usize,
    pub score: f64,
    pub agreement: f64,
    pub start_scores: Vec<f64>,
    pub largest_regression: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Number of warm starts run next to the random ones.
    pub warm_starts: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeReport {
    pub n_hypotheses: usize,
    pub n_outcomes: usize,
    pub copies: usize,
    pub results: Vec<ClassResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub realization_errors: Vec<String>,
}

impl OptimizeReport {
    pub fn rows(&self, value: f64) -> Vec<Row> {
        self.results.iter().map(|r| Row::ok(value, class_name(r.class), r.score, 0.0)).collect()
    }
}

/// The config spelling of a class, used in file names and tables.
pub fn class_name(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Parallel => "parallel",
        StrategyKind::Sequential => "sequential",
        StrategyKind::General => "general",
    }
}

/// Hierarchy order, so each class can start from the one below it.
fn ordered(classes: &[StrategyKind]) -> Vec<StrategyKind> {
    StrategyKind::ALL.into_iter().filter(|k| classes.contains(k)).collect()
}

/// Runs every class; `on_class` sees each finished class so callers can
/// persist partial output. On failure the report holds the classes that
/// finished.
pub fn optimize(
    cfg: &Config,
    mut on_class: impl FnMut(&ClassResult, &SeesawResult) -> Result<(), CliError>,
) -> (OptimizeReport, Result<(), CliError>) {
    let ex = match cfg.experiment() {
        Ok(ex) => ex,
        Err(e) => return (empty_report(cfg, 0), Err(e)),
    };
    let scfg = cfg.seesaw.build(&ex.channel, cfg.seed);
    let copies = cfg.optimize.copies;
    let mut report = empty_report(cfg, ex.prior.len());
    report.n_outcomes = scfg.n_outcomes;

    let outcome = (|| {
        let h = ex.prior.clone().with_cache(&ex.channel, copies)?;
        let comb = if cfg.optimize.seed_from_greedy {
            let g = GreedyProblem::new(ex.channel.clone(), ex.prior.clone(), ex.kernel);
            Some(adaptive_comb(&g, &cfg.greedy.build(&ex.channel, cfg.seed, true))?)
        } else {
            None
        };
        let mut previous: Option<TesterSet> = None;
        for kind in ordered(&cfg.optimize.classes) {
            let problem = SeesawProblem::new(StrategyClass::new(kind, copies), ChannelDims::of(&ex.channel), h.clone(), ex.kernel)?;
            let mut seeds = Vec::new();
            if cfg.optimize.warm_start {
                if let Some(t) = &previous {
                    seeds.push(warm_start(&problem, t, scfg.n_outcomes)?);
                }
            }
            if let (Some(c), true) = (&comb, kind != StrategyKind::Parallel) {
                if c.len() <= scfg.n_outcomes {
                    seeds.push(warm_start(&problem, c, scfg.n_outcomes)?);
                } else {
                    log::warn!("greedy comb has {} outcomes, more than n_outcomes = {}; not used", c.len(), scfg.n_outcomes);
                }
            }
            info!("optimizing {kind} with {copies} copies");
            let r = match cfg.optimize.method {
                Method::Seesaw => run_seesaw_with_starts(&problem, &scfg, &seeds)?,
                Method::EstimatorGrid => solve_fixed_estimators(&problem, &scfg, estimator_grid(&problem.hypotheses, scfg.n_outcomes))?,
            };
            let result = ClassResult {
                class: kind,
                copies,
                score: r.score(),
                agreement: r.agreement,
                start_scores: r.start_scores.clone(),
                largest_regression: r.largest_regression,
                converged: r.best.converged,
                iterations: r.best.iterations.len(),
                warm_starts: seeds.len(),
            };
            info!("{kind}: score {:.10}", result.score);
            report.results.push(result.clone());
            on_class(&result, &r)?;
            previous = Some(r.best.testers);
        }
        Ok(())
    })();
    (report, outcome)
}

fn empty_report(cfg: &Config, n_hypotheses: usize) -> OptimizeReport {
    OptimizeReport { n_hypotheses, n_outcomes: 0, copies: cfg.optimize.copies, results: Vec::new(), realization_errors: Vec::new() }
}

/// `optimize` command: traces and realizations are written as classes finish.
pub fn run(cfg: &Config, dir: &mut RunDir) -> Result<OptimizeReport, CliError> {
    let mut realization_errors = Vec::new();
    let (mut report, outcome) = optimize(cfg, |res, r| {
        let name = format!("traces/seesaw_{}.csv", class_name(res.class));
        dir.write_with(&name, |out| r.write_trace_csv(out).map_err(CliError::from))?;
        if cfg.optimize.realize {
            match realize(&r.best.testers) {
                Ok(real) => dir.write_json(&format!("realization_{}.json", class_name(res.class)), &real.to_json())?,
                Err(e) => realization_errors.push(format!("{}: {e}", class_name(res.class))),
            }
        }
        Ok(())
    });
    report.realization_errors = realization_errors;
    dir.write_report("optimize", &report)?;
    let rows = report.rows(cfg.optimize.copies as f64);
    dir.write_with("scores.csv", |out| crate::table::write_rows(out, &rows))?;
    outcome.map(|_| report)
}
