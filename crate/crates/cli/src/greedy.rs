//! Adaptive greedy Monte Carlo, optionally against its non-adaptive twin.

use log::info;
use qmetro::greedy::{run_greedy, GreedyProblem, GreedyReport};
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::run::RunDir;
use crate::table::Row;

#[derive(Clone, Debug, Serialize)]
pub struct GreedyRuns {
    pub adaptive: Option<GreedyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub non_adaptive: Option<GreedyReport>,
}

impl GreedyRuns {
    fn named(&self) -> impl Iterator<Item = (&'static str, &GreedyReport)> {
        [("greedy", self.adaptive.as_ref()), ("non_adaptive", self.non_adaptive.as_ref())]
            .into_iter()
            .filter_map(|(n, r)| r.map(|r| (n, r)))
    }

    /// One row per round and variant, with the round number as `value`.
    pub fn curve(&self) -> Vec<Row> {
        self.named()
            .flat_map(|(name, r)| r.rounds.iter().map(move |s| Row::ok(s.round as f64, name, s.mean, s.std_error)))
            .collect()
    }

    /// Final-round scores at a sweep point.
    pub fn final_rows(&self, value: f64) -> Vec<Row> {
        self.named().map(|(name, r)| Row::ok(value, name, r.last().mean, r.last().std_error)).collect()
    }
}

pub fn greedy(cfg: &Config, mut on_run: impl FnMut(&str, &GreedyReport) -> Result<(), CliError>) -> (GreedyRuns, Result<(), CliError>) {
    let mut runs = GreedyRuns { adaptive: None, non_adaptive: None };
    let outcome = (|| {
        let ex = cfg.experiment()?;
        let problem = GreedyProblem::new(ex.channel.clone(), ex.prior, ex.kernel);
        let mut variants = vec![true];
        if cfg.greedy.compare_non_adaptive {
            variants.push(false);
        }
        for adaptive in variants {
            let name = if adaptive { "greedy" } else { "non_adaptive" };
            info!("running {name} with {} trajectories", cfg.greedy.n_traj);
            let r = run_greedy(&problem, &cfg.greedy.build(&ex.channel, cfg.seed, adaptive))?;
            info!("{name}: final score {:.6} ± {:.6}", r.last().mean, r.last().std_error);
            on_run(name, &r)?;
            if adaptive {
                runs.adaptive = Some(r);
            } else {
                runs.non_adaptive = Some(r);
            }
        }
        Ok(())
    })();
    (runs, outcome)
}

pub fn run(cfg: &Config, dir: &mut RunDir) -> Result<GreedyRuns, CliError> {
    let (runs, outcome) = greedy(cfg, |name, r| dir.write_with(&format!("traces/{name}.csv"), |out| r.write_csv(out).map_err(CliError::from)));
    dir.write_report("greedy", &runs)?;
    let rows = runs.curve();
    dir.write_with("curve.csv", |out| crate::table::write_rows(out, &rows))?;
    outcome.map(|_| runs)
}
