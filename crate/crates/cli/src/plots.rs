//! Minimal hand-rolled SVG charts for the diagnostics: per-class bar charts
//! and eigenvalue decay curves. Content mirrors the CSV files; no plotting
//! dependency.

use std::path::Path;

use hpm_core::report::SpectrumRow;
use hpm_core::{NullScatterReport, RadiusProfile};

use crate::config::CliError;

const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub fn emit(
    dir: &Path,
    radius: &RadiusProfile,
    scatter: Option<&NullScatterReport>,
    spectra: &[SpectrumRow],
) -> Result<(), CliError> {
    let radius_vals: Vec<Option<f64>> = radius.per_class_mean_norm.clone();
    write(
        &dir.join("radius.svg"),
        &bar_chart("mean feature norm per class", &radius_vals),
    )?;
    if let Some(s) = scatter {
        write(
            &dir.join("null_scatter.svg"),
            &bar_chart("classifier-null scatter per class", &s.per_class),
        )?;
    }
    // one eigenvalue curve per variant: pooled rows directly, the largest
    // (first) class row otherwise
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for variant in ["md", "rp-md", "hc-md", "hpm"] {
        if let Some(row) = spectra.iter().find(|r| r.variant == variant) {
            let label = format!("{} ({})", variant, row.scope);
            series.push((label, row.diagnostics.eigenvalues.to_vec()));
        }
    }
    write(&dir.join("spectrum.svg"), &line_chart_log10("covariance eigenvalues (log10)", &series))
}

fn write(path: &Path, svg: &str) -> Result<(), CliError> {
    std::fs::write(path, svg).map_err(|e| {
        CliError::Core(hpm_core::HpmError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = W,
        h = H,
        tx = W / 2.0,
        title = title
    )
}

fn bar_chart(title: &str, values: &[Option<f64>]) -> String {
    let mut svg = header(title);
    let max = values
        .iter()
        .flatten()
        .cloned()
        .fold(f64::MIN_POSITIVE, f64::max);
    let n = values.len().max(1);
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let bw = (plot_w / n as f64) * 0.8;
    for (i, v) in values.iter().enumerate() {
        let x = MARGIN + plot_w * (i as f64 + 0.1) / n as f64;
        match v {
            Some(v) => {
                let bh = plot_h * (v / max).clamp(0.0, 1.0);
                svg.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4878cf\"/>\n",
                    x,
                    H - MARGIN - bh,
                    bw,
                    bh
                ));
            }
            None => {
                svg.push_str(&format!(
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">skipped</text>\n",
                    x,
                    H - MARGIN - 4.0
                ));
            }
        }
        if n <= 40 || i % (n / 20).max(1) == 0 {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                x + bw / 2.0,
                H - MARGIN + 14.0,
                i
            ));
        }
    }
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>\n",
        m = MARGIN,
        y = H - MARGIN,
        x2 = W - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">max {:.4}</text>\n",
        MARGIN,
        MARGIN - 8.0,
        max
    ));
    svg.push_str("</svg>\n");
    svg
}

fn line_chart_log10(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let colors = ["#c44e52", "#dd8452", "#55a868", "#4878cf"];
    let mut svg = header(title);
    let floor = 1e-16;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut len = 1usize;
    for (_, vals) in series {
        len = len.max(vals.len());
        for &v in vals {
            let l = v.max(floor).log10();
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    if !lo.is_finite() || !hi.is_finite() || lo == hi {
        lo = -1.0;
        hi = 1.0;
    }
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    for (s, (name, vals)) in series.iter().enumerate() {
        let color = colors[s % colors.len()];
        let mut points = String::new();
        for (i, &v) in vals.iter().enumerate() {
            let x = MARGIN + plot_w * i as f64 / (len.max(2) - 1) as f64;
            let frac = (v.max(floor).log10() - lo) / (hi - lo);
            let y = H - MARGIN - plot_h * frac;
            points.push_str(&format!("{x:.1},{y:.1} "));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            points.trim_end(),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            W - MARGIN - 140.0,
            MARGIN + 16.0 * s as f64,
            color,
            name
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>\n",
        m = MARGIN,
        y = H - MARGIN,
        x2 = W - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">log10 range [{:.2}, {:.2}]</text>\n",
        MARGIN,
        MARGIN - 8.0,
        lo,
        hi
    ));
    svg.push_str("</svg>\n");
    svg
}
