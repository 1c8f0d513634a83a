//! SVG charts of benchmark CSVs.

use std::path::Path;

use anyhow::{anyhow, ensure, Result};
use plotters::prelude::*;

use kdgrid_core::bench::{RoundtripRow, ScalingRow};

const SIZE: (u32, u32) = (800, 500);

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.05).max(hi.abs() * 1e-3).max(1e-12);
    (lo - pad, hi + pad)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    padded(lo, hi)
}

fn draw(path: &Path, caption: &str, (x_desc, y_desc): (&str, &str), series: &[(&str, Vec<(f64, f64)>)]) -> Result<()> {
    ensure!(series.iter().any(|s| !s.1.is_empty()), "nothing to plot");
    let all = || series.iter().flat_map(|s| s.1.iter());
    let (x0, x1) = range(all().map(|p| p.0));
    let (y0, y1) = range(all().map(|p| p.1));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    let err = |e: &dyn std::fmt::Display| anyhow!("drawing {}: {e}", path.display());
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, (name, points)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart
            .draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE)
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

pub fn roundtrip(path: &Path, rows: &[RoundtripRow]) -> Result<()> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let series: Vec<(&str, Vec<(f64, f64)>)> = methods
        .iter()
        .map(|&m| {
            let mut pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.ratio, r.error))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (m, pts)
        })
        .collect();
    draw(
        path,
        "Round-trip interpolation error",
        ("oversampling ratio", "L2 relative error"),
        &series,
    )
}

pub fn scaling(path: &Path, rows: &[ScalingRow]) -> Result<()> {
    let pts = rows.iter().map(|r| (r.m as f64, r.seconds)).collect();
    draw(path, "Decomposition time", ("points", "seconds"), &[("decompose", pts)])
}
