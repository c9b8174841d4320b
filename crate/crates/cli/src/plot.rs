//! Score-versus-parameter curves with error bars, rendered to SVG.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::CliError;
use crate::table::{read_rows, Row};

/// Tables looked for, in order, when an input is a run directory.
const RUN_TABLES: [&str; 3] = ["sweep.csv", "curve.csv", "scores.csv"];

pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { title: String::new(), x_label: "value".into(), y_label: "score".into(), width: 800, height: 500 }
    }
}

pub fn resolve_input(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_dir() {
        return RUN_TABLES
            .iter()
            .map(|t| path.join(t))
            .find(|p| p.is_file())
            .ok_or_else(|| CliError::Input(format!("{}: no {} found", path.display(), RUN_TABLES.join(" / "))));
    }
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::Input(format!("{}: no such file or directory", path.display())))
    }
}

/// Series keyed by label, each a value-sorted list of `(x, y, stderr)`.
pub type Series = BTreeMap<String, Vec<(f64, f64, f64)>>;

pub fn collect_series(inputs: &[PathBuf]) -> Result<Series, CliError> {
    let mut series = Series::new();
    for input in inputs {
        let file = resolve_input(input)?;
        let name = file.display().to_string();
        let rows: Vec<Row> = read_rows(File::open(&file)?, &name)?;
        for r in rows {
            let Some(score) = r.score.filter(|s| s.is_finite()) else { continue };
            let label = if inputs.len() > 1 { format!("{}: {}", input.display(), r.class) } else { r.class.clone() };
            series.entry(label).or_default().push((r.value, score, r.stderr.unwrap_or(0.0)));
        }
    }
    if series.is_empty() {
        return Err(CliError::Input("nothing to plot: the input has no successful rows".into()));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(series)
}

fn padded(lo: f64, hi: f64, frac: f64, min_pad: f64) -> (f64, f64) {
    let pad = ((hi - lo) * frac).max(min_pad);
    (lo - pad, hi + pad)
}

pub fn render_svg(series: &Series, opts: &PlotOptions) -> Result<String, CliError> {
    let all = series.values().flatten();
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, e) in all {
        xl = xl.min(*x);
        xh = xh.max(*x);
        yl = yl.min(y - e);
        yh = yh.max(y + e);
    }
    let (xl, xh) = padded(xl, xh, 0.05, 0.5);
    let (yl, yh) = padded(yl, yh, 0.08, 1e-3);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (opts.width, opts.height)).into_drawing_area();
        let plot_err = |e: &dyn std::fmt::Display| CliError::Io(format!("plot: {e}"));
        root.fill(&WHITE).map_err(|e| plot_err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&opts.title, ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(xl..xh, yl..yh)
            .map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc(&opts.x_label)
            .y_desc(&opts.y_label)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for (i, (label, points)) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(points.iter().map(|(x, y, _)| (*x, *y)), color.stroke_width(2)))
                .map_err(|e| plot_err(&e))?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(points.iter().map(|(x, y, e)| ErrorBar::new_vertical(*x, y - e, *y, y + e, color.filled(), 8)))
                .map_err(|e| plot_err(&e))?;
            chart
                .draw_series(points.iter().map(|(x, y, _)| Circle::new((*x, *y), 3, color.filled())))
                .map_err(|e| plot_err(&e))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(&e))?;
        root.present().map_err(|e| plot_err(&e))?;
    }
    Ok(svg)
}

pub fn run(inputs: &[PathBuf], out: Option<&Path>, opts: &PlotOptions) -> Result<PathBuf, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("plot: give at least one input".into()));
    }
    let series = collect_series(inputs)?;
    let svg = render_svg(&series, opts)?;
    let target = match out {
        Some(p) if p.is_dir() => p.join("plot.svg"),
        Some(p) => p.to_path_buf(),
        None => {
            let first = resolve_input(&inputs[0])?;
            first.with_file_name("plot.svg")
        }
    };
    std::fs::write(&target, svg).map_err(|e| CliError::Io(format!("{}: {e}", target.display())))?;
    Ok(target)
}
