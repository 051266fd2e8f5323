//! Static SVG figures: null-distribution histograms and ROC curves.

use std::fmt::Write as _;

use crate::stats::RocCurve;

const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r##"<rect width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str, x_ticks: &[(f64, String)], y_ticks: &[(f64, String)]) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(s, r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000"/>"##);
    let _ = writeln!(s, r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000"/>"##);
    for (px, label) in x_ticks {
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="#000"/>"##, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{label}</text>"#, y0 + 16.0);
    }
    for (py, label) in y_ticks {
        let _ = writeln!(s, r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#000"/>"##, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, x0 - 6.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Histogram of `values` with a vertical marker at `observed`. The x range
/// always includes the marker.
pub fn histogram(title: &str, x_label: &str, values: &[f64], observed: f64, bins: usize) -> String {
    let bins = bins.max(1);
    let mut lo = values.iter().cloned().fold(observed, f64::min);
    let mut hi = values.iter().cloned().fold(observed, f64::max);
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - lo) / (hi - lo) * pw;
    let py = |c: f64| H - BOTTOM - c / max_count * ph;

    let mut s = open(title);
    let _ = writeln!(s, r#"<g class="histogram">"#);
    for (b, &c) in counts.iter().enumerate() {
        let x = px(lo + b as f64 * width);
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##,
            py(c as f64),
            pw / bins as f64,
            H - BOTTOM - py(c as f64)
        );
    }
    let _ = writeln!(s, "</g>");
    let ox = px(observed);
    let _ = writeln!(
        s,
        r##"<line class="observed" x1="{ox:.2}" y1="{}" x2="{ox:.2}" y2="{}" stroke="#d62728" stroke-width="2"/>"##,
        H - BOTTOM,
        TOP
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{}" fill="#d62728">observed {observed:.4}</text>"##,
        (ox + 4.0).min(W - RIGHT - 90.0),
        TOP + 12.0
    );
    let x_ticks: Vec<(f64, String)> = (0..=4)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 4.0;
            (px(x), format!("{x:.3}"))
        })
        .collect();
    let y_ticks = vec![(py(0.0), "0".to_string()), (py(max_count), format!("{}", max_count as usize))];
    axes(&mut s, x_label, "count", &x_ticks, &y_ticks);
    s.push_str("</svg>\n");
    s
}

/// ROC curves on the unit square with the chance diagonal.
pub fn roc_plot(title: &str, curves: &[(String, &RocCurve)]) -> String {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + x * pw;
    let py = |y: f64| H - BOTTOM - y * ph;
    let mut s = open(title);
    let _ = writeln!(
        s,
        r##"<line class="chance" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="roc" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = py(0.0) - 14.0 * (curves.len() - i) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{} (AUC {:.4})</text>"#,
            px(0.55),
            escape(label),
            curve.area()
        );
    }
    let ticks: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
    let x_ticks: Vec<(f64, String)> = ticks.iter().map(|&t| (px(t), format!("{t:.2}"))).collect();
    let y_ticks: Vec<(f64, String)> = ticks.iter().map(|&t| (py(t), format!("{t:.2}"))).collect();
    axes(&mut s, "false positive rate", "true positive rate", &x_ticks, &y_ticks);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::roc_curve;

    #[test]
    fn histogram_has_bars_and_marker() {
        let values: Vec<f64> = (0..100).map(|i| (i % 17) as f64 / 10.0).collect();
        let svg = histogram("EStoTH <VS>", "mean VS", &values, 0.2, 20);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 20);
        assert_eq!(svg.matches(r#"class="observed""#).count(), 1);
        assert!(svg.contains("EStoTH &lt;VS&gt;"));
    }

    #[test]
    fn marker_outside_null_range_is_still_drawn() {
        let svg = histogram("t", "x", &[1.0, 1.0, 1.0], 0.0, 5);
        assert!(svg.contains(r#"class="observed" x1="56.00""#));
        let svg = histogram("t", "x", &[], 3.0, 5);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 5);
    }

    #[test]
    fn roc_plot_lists_every_curve() {
        let a = roc_curve(&[0.9, 0.1, 0.6, 0.4], &[1, 0, 1, 0]).unwrap();
        let b = roc_curve(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        let svg = roc_plot("ROC", &[("ES".into(), &a), ("TH".into(), &b)]);
        assert_eq!(svg.matches(r#"class="roc""#).count(), 2);
        assert!(svg.contains("ES (AUC 1.0000)"));
        assert!(svg.contains("TH (AUC 0.5000)"));
    }
}
