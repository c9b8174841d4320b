//! Parameter sweeps: one optimization (and optionally greedy run) per value.

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::greedy::{greedy, GreedyRuns};
use crate::optimize::{class_name, optimize, OptimizeReport};
use crate::run::RunDir;
use crate::table::{write_rows, Row};

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub optimize: OptimizeReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy: Option<GreedyRuns>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub parameters: Vec<String>,
    pub points: Vec<SweepPoint>,
    pub n_failed: usize,
}

struct PointOutput {
    point: SweepPoint,
    rows: Vec<Row>,
    traces: Vec<(String, Vec<u8>)>,
}

fn run_point(index: usize, cfg: &Config, with_greedy: bool) -> PointOutput {
    let mut traces = Vec::new();
    let (report, outcome) = optimize(cfg, |res, r| {
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf)?;
        traces.push((format!("traces/point{index:03}_seesaw_{}.csv", class_name(res.class)), buf));
        Ok(())
    });
    let value = cfg.sweep.as_ref().map_or(f64::NAN, |s| s.values[index]);
    let mut rows = report.rows(value);
    let mut errors = Vec::new();
    if let Err(e) = outcome {
        warn!("point {value}: {e}");
        for kind in &cfg.optimize.classes {
            if !report.results.iter().any(|r| r.class == *kind) {
                rows.push(Row::failed(value, class_name(*kind), &e));
            }
        }
        errors.push(e.to_string());
    }
    let greedy_runs = with_greedy.then(|| {
        let (runs, outcome) = greedy(cfg, |name, r| {
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            traces.push((format!("traces/point{index:03}_{name}.csv"), buf));
            Ok(())
        });
        rows.extend(runs.final_rows(value));
        if let Err(e) = outcome {
            warn!("point {value}: {e}");
            if runs.adaptive.is_none() {
                rows.push(Row::failed(value, "greedy", &e));
            }
            if cfg.greedy.compare_non_adaptive && runs.non_adaptive.is_none() {
                rows.push(Row::failed(value, "non_adaptive", &e));
            }
            errors.push(e.to_string());
        }
        runs
    });
    PointOutput { point: SweepPoint { value, optimize: report, greedy: greedy_runs, errors }, rows, traces }
}

/// Every point is validated before any is run; a bad value is a schema
/// error. Solver failures at a point are recorded and the sweep goes on.
pub fn run(cfg: &Config, dir: &mut RunDir) -> Result<SweepReport, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Schema("sweep: the sweep command needs a [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(CliError::Schema("sweep.values: list at least one value".into()));
    }
    let configs: Vec<Config> = sweep
        .values
        .iter()
        .map(|v| cfg.with_value(&sweep.parameters, *v).map_err(|e| CliError::Schema(format!("sweep value {v}: {e}"))))
        .collect::<Result<_, _>>()?;

    let outputs: Vec<PointOutput> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            info!("sweep point {} = {}", sweep.parameters.join(", "), sweep.values[i]);
            run_point(i, c, sweep.greedy)
        })
        .collect();

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for out in outputs {
        for (name, bytes) in &out.traces {
            dir.write_with(name, |w| Ok(w.write_all(bytes)?))?;
        }
        rows.extend(out.rows);
        points.push(out.point);
    }
    let n_failed = points.iter().filter(|p| !p.errors.is_empty()).count();
    let report = SweepReport { parameters: sweep.parameters.clone(), points, n_failed };
    dir.write_report("sweep", &report)?;
    dir.write_with("sweep.csv", |w| write_rows(w, &rows))?;
    if n_failed > 0 {
        return Err(CliError::PartialFailure(format!("{n_failed} of {} sweep points failed; see sweep.csv", report.points.len())));
    }
    Ok(report)
}
