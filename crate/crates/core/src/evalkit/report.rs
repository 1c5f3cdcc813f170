use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{PredStep, ResultRow, ResultTable};
use crate::error::{Error, Result};
use crate::nets::{estimate_flops, spec_param_count, ModelKind, ModelSpec};

/// Files written by [`emit_plots`] plus any non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn series_label(r: &ResultRow) -> String {
    let mut s = r.model.clone();
    if let Some(v) = r.velocity {
        s.push_str(&format!(" v={v}"));
    }
    s.push_str(&format!(" ctx={}", r.context_len));
    if r.sampling_steps > 0 {
        s.push_str(&format!(" T={}", r.sampling_steps));
    }
    s
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn line_chart(path: &Path, title: &str, x_desc: &str, series: &BTreeMap<String, Vec<(f64, f64)>>) -> Result<()> {
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.1).max(0.5);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc("NMSE (dB)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

fn file_token(x: f64) -> String {
    format!("{x}").replace('-', "m").replace('.', "p")
}

/// Writes NMSE-vs-step charts (one per SNR) and NMSE-vs-SNR charts (one per
/// prediction step, including the average) as SVG files. The table is only read.
pub fn emit_plots(table: &ResultTable, out_dir: &Path) -> Result<PlotReport> {
    let mut report = PlotReport::default();
    if table.is_empty() {
        report.warnings.push("result table is empty; no plots written".into());
        return Ok(report);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut by_snr: BTreeMap<u64, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    let mut by_step: BTreeMap<PredStep, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in &table.rows {
        if let PredStep(Some(k)) = r.prediction_step {
            by_snr
                .entry(r.snr_db.to_bits())
                .or_default()
                .entry(series_label(r))
                .or_default()
                .push((k as f64, r.nmse_db));
        }
        by_step
            .entry(r.prediction_step)
            .or_default()
            .entry(series_label(r))
            .or_default()
            .push((r.snr_db, r.nmse_db));
    }
    for (bits, mut series) in by_snr {
        let snr = f64::from_bits(bits);
        series.values_mut().for_each(|v| v.sort_by(|a, b| a.0.total_cmp(&b.0)));
        let path = out_dir.join(format!("nmse_vs_step_snr_{}dB.svg", file_token(snr)));
        line_chart(
            &path,
            &format!("NMSE per prediction step, SNR {snr} dB"),
            "prediction step",
            &series,
        )?;
        report.files.push(path);
    }
    for (step, mut series) in by_step {
        series.values_mut().for_each(|v| v.sort_by(|a, b| a.0.total_cmp(&b.0)));
        let path = out_dir.join(format!("nmse_vs_snr_step_{}.svg", step.label()));
        let title = match step.0 {
            Some(k) => format!("NMSE vs SNR, prediction step {k}"),
            None => "NMSE vs SNR, average over steps".to_string(),
        };
        line_chart(&path, &title, "SNR (dB)", &series)?;
        report.files.push(path);
    }
    Ok(report)
}

/// Magnitude heatmap `|h|` of one packed frame `[2, n_rows, n_cols]`.
pub fn export_heatmap(frame: &[f64], n_rows: usize, n_cols: usize, path: &Path) -> Result<()> {
    let cells = n_rows * n_cols;
    if frame.len() != 2 * cells || cells == 0 {
        return Err(Error::Input(format!(
            "heatmap expects 2x{n_rows}x{n_cols} values, got {}",
            frame.len()
        )));
    }
    let mag: Vec<f64> = (0..cells).map(|i| frame[i].hypot(frame[cells + i])).collect();
    let peak = mag.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let root = SVGBackend::new(path, (24 * n_cols as u32 + 20, 24 * n_rows as u32 + 20)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .build_cartesian_2d(0..n_cols, 0..n_rows)
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series((0..cells).map(|i| {
            let (r, c) = (i / n_cols, i % n_cols);
            let a = mag[i] / peak;
            let color = RGBColor((255.0 * a) as u8, (200.0 * a) as u8, (140.0 * (1.0 - a)) as u8);
            Rectangle::new([(c, r), (c + 1, r + 1)], color.filled())
        }))
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Best and worst entry for one figure panel (fixed SNR, velocity, context and step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub snr_db: f64,
    pub velocity: Option<f64>,
    pub context_len: usize,
    pub prediction_step: String,
    pub best: String,
    pub best_nmse_db: f64,
    pub worst: String,
    pub worst_nmse_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub panels: Vec<PanelSummary>,
}

pub fn summarize(table: &ResultTable) -> Summary {
    type Key = (u64, Option<u64>, usize, PredStep);
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        let key = (
            r.snr_db.to_bits(),
            r.velocity.map(f64::to_bits),
            r.context_len,
            r.prediction_step,
        );
        groups.entry(key).or_default().push(r);
    }
    let name = |r: &ResultRow| match r.sampling_steps {
        0 => r.model.clone(),
        s => format!("{} (T={s})", r.model),
    };
    let mut panels: Vec<PanelSummary> = groups
        .into_values()
        .map(|rows| {
            let best = rows
                .iter()
                .min_by(|a, b| a.nmse_db.total_cmp(&b.nmse_db))
                .expect("non-empty group");
            let worst = rows
                .iter()
                .max_by(|a, b| a.nmse_db.total_cmp(&b.nmse_db))
                .expect("non-empty group");
            PanelSummary {
                snr_db: best.snr_db,
                velocity: best.velocity,
                context_len: best.context_len,
                prediction_step: best.prediction_step.label(),
                best: name(best),
                best_nmse_db: best.nmse_db,
                worst: name(worst),
                worst_nmse_db: worst.nmse_db,
            }
        })
        .collect();
    panels.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then(a.velocity.unwrap_or(-1.0).total_cmp(&b.velocity.unwrap_or(-1.0)))
            .then(a.context_len.cmp(&b.context_len))
    });
    Summary { panels }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::io(path, e.into()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub model: String,
    pub params: usize,
    pub est_flops: u64,
}

/// The model zoo at its published widths with `N_p = 30`, `N_f = 10` on 16x16 CSI.
pub fn paper_specs() -> Vec<ModelSpec> {
    ModelKind::ALL
        .iter()
        .map(|&k| ModelSpec::paper(k, 30, 10, 16, 16))
        .collect()
}

/// Parameter count and analytic FLOPs of one forward pass for each spec.
pub fn complexity_report(specs: &[ModelSpec]) -> Result<Vec<ComplexityRow>> {
    specs
        .iter()
        .map(|s| {
            Ok(ComplexityRow {
                model: s.name.label().to_string(),
                params: spec_param_count(s)?,
                est_flops: estimate_flops(s)?,
            })
        })
        .collect()
}

pub fn export_complexity_csv(rows: &[ComplexityRow], path: &Path) -> Result<()> {
    let mut text = String::from("model,params,est_flops\n");
    for r in rows {
        text.push_str(&format!("{},{},{}\n", r.model, r.params, r.est_flops));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
