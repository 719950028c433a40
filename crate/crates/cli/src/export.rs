use std::fmt::Write as _;
use std::io::Write;

use ricci_lab::bounds::TheoremReport;
use ricci_lab::flow::FlowTrace;

/// One row per snapshot: `t, V, r, R_min, R_max, lambda_1..lambda_k`, preceded
/// by `#` comment lines.
pub fn write_trace_csv<W: Write>(trace: &FlowTrace, eigen_count: usize, header: &[String], mut out: W) -> csv::Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut columns: Vec<String> = ["t", "V", "r", "R_min", "R_max"].iter().map(|s| s.to_string()).collect();
    columns.extend((1..=eigen_count).map(|i| format!("lambda_{i}")));
    w.write_record(&columns)?;
    for snap in &trace.snapshots {
        let c = &snap.curvature;
        let mut row = vec![snap.t(), c.volume, c.average_scalar, c.min_scalar(), c.max_scalar()];
        if let Some(s) = &snap.spectrum {
            row.extend(s.eigenvalues.iter().skip(1).take(eigen_count));
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A plain SVG line chart with axes, tick labels and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 180.0, 40.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !(x0 < x1) {
        x1 = x0 + 1.0;
    }
    if !(y0 < y1) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, top + ph / 2.0, top + ph / 2.0, escape(y_label));
    for (n, series) in series.iter().enumerate() {
        let mut d = String::new();
        for (k, &(x, y)) in series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, series.color);
        let ly = top + 14.0 + 18.0 * n as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/>"#, lx + 24.0, series.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimum scalar curvature against the barrier `s(t)`.
pub fn curvature_chart(report: &TheoremReport) -> String {
    let samples = &report.max_principle.samples;
    line_chart(
        "Minimum scalar curvature and barrier",
        "t",
        "curvature",
        &[
            Series { name: "min R".into(), points: samples.iter().map(|s| (s.t, s.min_scalar)).collect(), color: PALETTE[0], dashed: false },
            Series { name: "s(t)".into(), points: samples.iter().map(|s| (s.t, s.barrier)).collect(), color: PALETTE[1], dashed: true },
        ],
    )
}

/// Tracked eigenvalues against their lower bounds `B_i(t)`.
pub fn eigen_chart(report: &TheoremReport, times: &[Vec<(f64, f64)>]) -> String {
    let mut series = Vec::new();
    for (n, (idx, track)) in report.indices.iter().zip(times).enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        series.push(Series { name: format!("lambda_{}", idx.index), points: track.clone(), color, dashed: false });
        let bound = track.iter().zip(&idx.eigen_bound.bound).map(|(&(t, _), &b)| (t, b)).collect();
        series.push(Series { name: format!("B_{}", idx.index), points: bound, color, dashed: true });
    }
    line_chart("Tracked eigenvalues and lower bounds", "t", "eigenvalue", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let svg = line_chart(
            "a < b",
            "t",
            "y",
            &[Series { name: "x".into(), points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)], color: "red", dashed: true }],
        );
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("M70.00,"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn flat_series_gets_a_range() {
        let svg = line_chart("flat", "t", "y", &[Series { name: "c".into(), points: vec![(0.0, 3.0), (0.0, 3.0)], color: "blue", dashed: false }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
