//! SVG regret plots: one line per algorithm with a shaded stderr band.

use crate::{invalid, Error, Result};
use plotters::prelude::*;
use std::path::Path;

/// One curve to draw: a label plus the sampled mean and standard error.
#[derive(Debug, Clone)]
pub struct SeriesSpec {
    pub label: String,
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

const COLORS: &[RGBColor] = &[
    RGBColor(214, 69, 65),
    RGBColor(31, 119, 180),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(23, 130, 135),
];

/// Draws all series into one chart at `path`.
pub fn plot_regret<P: AsRef<Path>>(series: &[SeriesSpec], title: &str, path: P) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.grid.is_empty()) {
        return Err(invalid("series", "nothing to plot"));
    }
    for s in series {
        if s.grid.len() != s.mean.len() || s.grid.len() != s.stderr.len() {
            return Err(invalid(
                "series",
                format!("series `{}` has mismatched grid/mean/stderr lengths", s.label),
            ));
        }
    }
    let x_max = series.iter().filter_map(|s| s.grid.last()).max().copied().unwrap_or(1) as f64;
    let y_max = series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.stderr).map(|(m, e)| m + e))
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };

    let err = |e: String| Error::Io(format!("{}: {e}", path.as_ref().display()));
    let root = SVGBackend::new(path.as_ref(), (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(14)
        .x_label_area_size(46)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..x_max.max(1.0), 0.0..y_max)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("oracle queries")
        .y_desc("cumulative regret")
        .draw()
        .map_err(|e| err(e.to_string()))?;

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if s.grid.is_empty() {
            continue;
        }
        let band: Vec<(f64, f64)> = s
            .grid
            .iter()
            .zip(s.mean.iter().zip(&s.stderr))
            .map(|(&q, (m, e))| (q as f64, m + e))
            .chain(
                s.grid
                    .iter()
                    .zip(s.mean.iter().zip(&s.stderr))
                    .rev()
                    .map(|(&q, (m, e))| (q as f64, m - e)),
            )
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.15))))
            .map_err(|e| err(e.to_string()))?;
        chart
            .draw_series(LineSeries::new(
                s.grid.iter().zip(&s.mean).map(|(&q, &m)| (q as f64, m)),
                color.stroke_width(2),
            ))
            .map_err(|e| err(e.to_string()))?
            .label(s.label.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.85))
        .border_style(RGBColor(120, 120, 120))
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}
