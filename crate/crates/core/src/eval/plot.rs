//! Static ROC plots. No font backend is compiled in, so plots carry no
//! text; colours are fixed per series kind (see the README).

use std::path::Path;

use plotters::prelude::*;

use super::roc::RocCurve;
use super::scoring::{BEST, ORIGINAL, RANDOM};
use crate::error::{Error, Result};

pub const PLOT_SIZE: u32 = 320;

fn series_style(member: &str, index: usize) -> ShapeStyle {
    match member {
        ORIGINAL => BLACK.stroke_width(2),
        BEST => RED.stroke_width(2),
        RANDOM => BLUE.stroke_width(2),
        _ => Palette99::pick(index + 3).mix(0.5).stroke_width(1),
    }
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Eval(format!("plot rendering failed: {e}"))
}

/// Renders all curves of one predictor (or matcher) into a PNG.
pub fn render_roc_plot(curves: &[(&str, &RocCurve)], path: &Path) -> Result<()> {
    let (w, h) = (PLOT_SIZE, PLOT_SIZE);
    let mut buf = vec![0u8; (w * h * 3) as usize];
    {
        let root = BitMapBackend::with_buffer(&mut buf, (w, h)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let area = root.margin(12, 12, 12, 12);
        let mut chart = ChartBuilder::on(&area)
            .build_cartesian_2d(0f64..1f64, 0f64..1f64)
            .map_err(plot_err)?;
        let frame = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        chart
            .draw_series(LineSeries::new(frame, BLACK.stroke_width(1)))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.mix(0.2).stroke_width(1)))
            .map_err(plot_err)?;
        // members first so the policy and baseline lines stay on top
        let mut ordered: Vec<(usize, &(&str, &RocCurve))> = curves.iter().enumerate().collect();
        ordered.sort_by_key(|(_, (m, _))| matches!(*m, ORIGINAL | BEST | RANDOM));
        for (i, (member, curve)) in ordered {
            let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
            chart
                .draw_series(LineSeries::new(pts, series_style(member, i)))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    let img = ::image::RgbImage::from_raw(w, h, buf).ok_or_else(|| plot_err("buffer size"))?;
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
