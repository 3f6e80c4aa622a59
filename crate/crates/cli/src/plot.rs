//! Static PNG plots: training curves and Bland-Altman agreement.
//!
//! Text needs a TrueType font at runtime. It is looked up in
//! `FETAL_BIOMETRY_FONT` and a few common system locations; without one the
//! plots are still drawn, just without captions, tick labels or legends.

use std::path::Path;
use std::sync::OnceLock;

use fetal_biometry::metrics::BlandAltman;
use fetal_biometry::model::EpochCurves;
use plotters::prelude::*;

use crate::error::{CliError, CliResult};

pub const FONT_ENV: &str = "FETAL_BIOMETRY_FONT";

const FONT_CANDIDATES: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
    "/Library/Fonts/Arial.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];

const FAMILY: &str = "sans-serif";
const WIDTH: u32 = 1200;
const HEIGHT: u32 = 500;

/// Registers a font once per process; `false` when none could be loaded.
pub fn font_available() -> bool {
    static LOADED: OnceLock<bool> = OnceLock::new();
    *LOADED.get_or_init(|| {
        let env = std::env::var_os(FONT_ENV).map(std::path::PathBuf::from);
        let candidates = env.into_iter().chain(FONT_CANDIDATES.iter().map(Into::into));
        for path in candidates {
            if let Ok(bytes) = std::fs::read(&path) {
                // plotters keeps a 'static reference for the process lifetime
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font(FAMILY, FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        false
    })
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::internal(format!("plot: {e}"))
}

fn palette(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
    ];
    COLORS[i % COLORS.len()]
}

fn padded_range(values: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad)..(hi + pad)
}

type Panel<'a> = DrawingArea<BitMapBackend<'a>, plotters::coord::Shift>;

fn curve_panel(area: &Panel<'_>, title: &str, y_desc: &str, series: &[(&str, Vec<f64>, Option<usize>)], text: bool) -> CliResult<()> {
    let epochs = series.iter().map(|(_, v, _)| v.len()).max().unwrap_or(1).max(2);
    let y = padded_range(series.iter().flat_map(|(_, v, _)| v.iter().copied()));
    let mut builder = ChartBuilder::on(area);
    builder.margin(12).x_label_area_size(if text { 40 } else { 8 }).y_label_area_size(if text { 60 } else { 8 });
    if text {
        builder.caption(title, (FAMILY, 20));
    }
    let mut chart = builder.build_cartesian_2d(1.0..epochs as f64, y.clone()).map_err(plot_err)?;
    let mut mesh = chart.configure_mesh();
    if text {
        mesh.x_desc("epoch").y_desc(y_desc).label_style((FAMILY, 13));
    } else {
        mesh.x_labels(0).y_labels(0);
    }
    mesh.draw().map_err(plot_err)?;

    for (i, (label, values, best)) in series.iter().enumerate() {
        let color = palette(i);
        let points = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(e, &v)| (e as f64 + 1.0, v));
        let drawn = chart
            .draw_series(LineSeries::new(points, color.stroke_width(2)))
            .map_err(plot_err)?;
        if text {
            drawn
                .label(*label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        if let Some(b) = best {
            // best-epoch marker: dashed vertical line through the whole panel
            let x = *b as f64 + 1.0;
            let dash = (y.end - y.start) / 40.0;
            let segments = (0..40).step_by(2).map(|k| {
                let y0 = y.start + k as f64 * dash;
                PathElement::new(vec![(x, y0), (x, y0 + dash)], color.mix(0.8).stroke_width(2))
            });
            chart.draw_series(segments).map_err(plot_err)?;
        }
    }
    if text {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .label_font((FAMILY, 13))
            .draw()
            .map_err(plot_err)?;
    }
    Ok(())
}

/// Training loss and validation error against epoch, one line per run,
/// with a dashed line at each run's best epoch.
pub fn convergence_plot(path: &Path, title: &str, runs: &[(String, &EpochCurves)]) -> CliResult<()> {
    let text = font_available();
    let root = BitMapBackend::new(path, (WIDTH, HEIGHT)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (left, right) = root.split_horizontally(WIDTH / 2);
    let loss: Vec<_> = runs
        .iter()
        .map(|(l, c)| (l.as_str(), c.train_loss.clone(), c.best_epoch()))
        .collect();
    let error: Vec<_> = runs
        .iter()
        .map(|(l, c)| (l.as_str(), c.val_median_px_error.clone(), c.best_epoch()))
        .collect();
    curve_panel(&left, &format!("{title}: training loss"), "MSE", &loss, text)?;
    curve_panel(&right, &format!("{title}: validation error"), "median error (px)", &error, text)?;
    root.present().map_err(plot_err)
}

/// Difference against mean per case with bias and 95% limit lines.
pub fn bland_altman_plot(path: &Path, title: &str, ba: &BlandAltman) -> CliResult<()> {
    let text = font_available();
    let root = BitMapBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let x = padded_range(ba.points.iter().map(|p| p.0));
    let y = padded_range(
        ba.points
            .iter()
            .map(|p| p.1)
            .chain([ba.upper, ba.lower, 0.0]),
    );
    let mut builder = ChartBuilder::on(&root);
    builder.margin(16).x_label_area_size(if text { 45 } else { 8 }).y_label_area_size(if text { 65 } else { 8 });
    if text {
        builder.caption(title, (FAMILY, 20));
    }
    let mut chart = builder.build_cartesian_2d(x.clone(), y).map_err(plot_err)?;
    let mut mesh = chart.configure_mesh();
    if text {
        mesh.x_desc("mean of methods (mm)")
            .y_desc("ground truth - prediction (mm)")
            .label_style((FAMILY, 13));
    } else {
        mesh.x_labels(0).y_labels(0);
    }
    mesh.draw().map_err(plot_err)?;
    chart
        .draw_series(ba.points.iter().map(|&(m, d)| Circle::new((m, d), 3, palette(0).filled())))
        .map_err(plot_err)?;
    let lines = [
        ("bias", ba.bias, palette(3)),
        ("+95%", ba.upper, palette(1)),
        ("-95%", ba.lower, palette(1)),
    ];
    for (label, level, color) in lines {
        let drawn = chart
            .draw_series(LineSeries::new([(x.start, level), (x.end, level)], color.stroke_width(2)))
            .map_err(plot_err)?;
        if text {
            drawn
                .label(format!("{label} {level:.2}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
    }
    if text {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .label_font((FAMILY, 13))
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
