//! Static SVG figures with CSV sidecars.

use std::fmt::Write as _;

use crate::survival::CalibrationBin;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        LEFT + (x - self.x0) / span * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        H - BOTTOM - (y - self.y0) / span * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn open(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(title));
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bx}" stroke="black"/>"#);
    for i in 0..=5 {
        let xv = f.x0 + (f.x1 - f.x0) * i as f64 / 5.0;
        let yv = f.y0 + (f.y1 - f.y0) * i as f64 / 5.0;
        let (x, y) = (f.px(xv), f.py(yv));
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{bx}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bx + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bx + 18.0, tick_label(xv));
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 7.0, y + 4.0, tick_label(yv));
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn legend(svg: &mut String, labels: &[(&str, &str, bool)]) {
    for (i, (label, color, dashed)) in labels.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let dash = if *dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
}

/// Right-continuous step curves on shared axes. y is fixed to [0, 1].
pub fn step_plot_svg(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let x1 = xs.fold(0.0f64, f64::max);
    let f = Frame { x0: 0.0, x1, y0: 0.0, y1: 1.0 };
    let mut svg = String::new();
    open(&mut svg, &f, title, xlabel, ylabel);
    let mut entries = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let _ = write!(d, "M{:.2},{:.2}", f.px(0.0), f.py(1.0));
        for &(x, y) in &s.points {
            let _ = write!(d, " H{:.2} V{:.2}", f.px(x), f.py(y));
        }
        let _ = write!(d, " H{:.2}", f.px(x1));
        let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        entries.push((s.label.as_str(), color, false));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

/// Wide CSV: `time` then one column per series, each series evaluated as
/// a right-continuous step function (1 before its first point).
pub fn step_plot_csv(series: &[Series]) -> String {
    let mut times: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut out = String::from("time");
    for s in series {
        out.push(',');
        out.push_str(&s.label);
    }
    out.push('\n');
    for t in times {
        out.push_str(&t.to_string());
        for s in series {
            let idx = s.points.partition_point(|p| p.0 <= t);
            let y = if idx == 0 { 1.0 } else { s.points[idx - 1].1 };
            let _ = write!(out, ",{y}");
        }
        out.push('\n');
    }
    out
}

/// Observed fraction against mean predicted probability per non-empty bin,
/// with the identity line for reference.
pub fn calibration_svg(bins: &[CalibrationBin], title: &str) -> String {
    let f = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    let mut svg = String::new();
    open(&mut svg, &f, title, "predicted failure probability", "observed failure fraction");
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0)
    );
    let pts: Vec<(f64, f64)> = bins.iter().filter_map(|b| Some((b.mean_predicted?, b.observed_fraction?))).collect();
    if !pts.is_empty() {
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, d.join(" "), COLORS[0]);
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/>"#, f.px(x), f.py(y), COLORS[0]);
        }
    }
    legend(&mut svg, &[("model", COLORS[0], false), ("ideal", "#888888", true)]);
    svg.push_str("</svg>\n");
    svg
}

pub fn calibration_csv(bins: &[CalibrationBin]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("lower,upper,count,mean_predicted,observed_fraction\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.count, opt(b.mean_predicted), opt(b.observed_fraction));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(label: &str, pts: &[(f64, f64)]) -> Series {
        Series { label: label.into(), points: pts.to_vec() }
    }

    #[test]
    fn csv_steps_are_right_continuous() {
        let csv = step_plot_csv(&[s("a", &[(1.0, 0.8), (3.0, 0.5)]), s("b", &[(2.0, 0.9)])]);
        assert_eq!(csv, "time,a,b\n1,0.8,1\n2,0.8,0.9\n3,0.5,0.9\n");
    }

    #[test]
    fn svg_is_well_formed_and_escaped() {
        let svg = step_plot_svg(&[s("failed <1y>", &[(10.0, 0.5)])], "S & t", "days", "S(t)");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("failed &lt;1y&gt;") && svg.contains("S &amp; t"));
        assert_eq!(svg.matches("<path").count(), 1);
    }

    #[test]
    fn calibration_outputs() {
        let bins = crate::survival::calibration_curve(&[0.05, 0.95, 0.9], &[false, true, true]).unwrap();
        let csv = calibration_csv(&bins);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0.1,1,0.05,0"));
        let svg = calibration_svg(&bins, "Calibration");
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
    }
}
