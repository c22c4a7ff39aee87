//! Minimal SVG rendering for sweep curves and certainty-delta box plots.

use gwin_core::evaluation::{CertaintyDeltaStats, ThresholdRow};
use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    y_min: f64,
    y_max: f64,
    slots: usize,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        LEFT + (i as f64 + 0.5) * (W - LEFT - RIGHT) / self.slots as f64
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (self.y_max - v) / (self.y_max - self.y_min) * (H - TOP - BOTTOM)
    }

    fn axes(&self, s: &mut String, title: &str, labels: &[String]) {
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, self.y(self.y_min), self.y(self.y_max));
        let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
        for k in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * k as f64 / 4.0;
            let y = self.y(v);
            let _ = writeln!(s, r##"<line x1="{x0}" x2="{x1}" y1="{y}" y2="{y}" stroke="#ddd"/>"##);
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
        }
        for (i, l) in labels.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{l}</text>"#, self.x(i), y0 + 18.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">τ</text>"#, W / 2.0, H - 10.0);
    }
}

fn series(s: &mut String, f: &Frame, points: &[(usize, f64, f64)], color: &str, name: &str, legend_row: usize) {
    let path: Vec<String> = points
        .iter()
        .enumerate()
        .map(|(k, &(i, m, _))| format!("{}{:.1},{:.1}", if k == 0 { "M" } else { "L" }, f.x(i), f.y(m)))
        .collect();
    let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, path.join(" "));
    for &(i, m, sd) in points {
        let (x, lo, hi) = (f.x(i), f.y(m - sd), f.y(m + sd));
        let _ = writeln!(s, r#"<line x1="{x}" x2="{x}" y1="{lo}" y2="{hi}" stroke="{color}"/>"#);
        let _ = writeln!(s, r#"<circle cx="{x}" cy="{}" r="3" fill="{color}"/>"#, f.y(m));
    }
    let ly = TOP + 14.0 + 16.0 * legend_row as f64;
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, LEFT + 10.0, ly - 9.0);
    let _ = writeln!(s, r#"<text x="{}" y="{ly}">{name}</text>"#, LEFT + 26.0);
}

/// Rejected-subset accuracy with and without the generator, plus the reject rate.
pub fn accuracy_curves(rows: &[ThresholdRow], title: &str) -> String {
    let f = Frame { y_min: 0.0, y_max: 100.0, slots: rows.len() };
    let labels: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.tau)).collect();
    let mut s = String::new();
    f.axes(&mut s, title, &labels);
    let pick = |g: &dyn Fn(&ThresholdRow) -> Option<gwin_core::evaluation::MeanStd>| -> Vec<(usize, f64, f64)> {
        rows.iter().enumerate().filter_map(|(i, r)| g(r).map(|m| (i, m.mean, m.std))).collect()
    };
    series(&mut s, &f, &pick(&|r| r.bnn_acc_rejected), "#1f77b4", "BNN (rejected)", 0);
    series(&mut s, &f, &pick(&|r| r.bnn_gwin_acc_rejected), "#d62728", "BNN+GWIN (rejected)", 1);
    series(&mut s, &f, &pick(&|r| Some(r.pct_reject)), "#7f7f7f", "% rejected", 2);
    s.push_str("</svg>\n");
    s
}

/// One box per threshold.
pub fn certainty_boxes(stats: &[CertaintyDeltaStats], title: &str) -> String {
    let lo =
        stats.iter().flat_map(|d| d.stats.outliers.iter().copied().chain([d.stats.whisker_low])).fold(0.0f64, f64::min);
    let hi = stats
        .iter()
        .flat_map(|d| d.stats.outliers.iter().copied().chain([d.stats.whisker_high]))
        .fold(0.0f64, f64::max);
    let f = Frame { y_min: lo.min(-0.05), y_max: hi.max(0.05), slots: stats.len() };
    let labels: Vec<String> = stats.iter().map(|d| format!("{:.2}", d.tau)).collect();
    let mut s = String::new();
    f.axes(&mut s, title, &labels);
    let half = 0.3 * (W - LEFT - RIGHT) / stats.len().max(1) as f64;
    for (i, d) in stats.iter().enumerate() {
        let b = &d.stats;
        let x = f.x(i);
        let _ =
            writeln!(s, r#"<line x1="{x}" x2="{x}" y1="{}" y2="{}" stroke="black"/>"#, f.y(b.whisker_low), f.y(b.q1));
        let _ =
            writeln!(s, r#"<line x1="{x}" x2="{x}" y1="{}" y2="{}" stroke="black"/>"#, f.y(b.q3), f.y(b.whisker_high));
        for w in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                s,
                r#"<line x1="{}" x2="{}" y1="{2}" y2="{2}" stroke="black"/>"#,
                x - half / 2.0,
                x + half / 2.0,
                f.y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#9ecae1" stroke="black"/>"##,
            x - half,
            f.y(b.q3),
            2.0 * half,
            (f.y(b.q1) - f.y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{2}" y2="{2}" stroke="black" stroke-width="2"/>"#,
            x - half,
            x + half,
            f.y(b.median)
        );
        for &o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{}" r="2" fill="none" stroke="black"/>"#, f.y(o));
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" x2="{}" y1="{1}" y2="{1}" stroke="red" stroke-dasharray="4 3"/>"#,
        W - RIGHT,
        f.y(0.0)
    );
    s.push_str("</svg>\n");
    s
}
