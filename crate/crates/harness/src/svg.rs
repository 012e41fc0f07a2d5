//! Grouped bar charts as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

/// Bars for `groups` x `series`; `values[g][s]` may be missing.
pub struct BarChart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub groups: &'a [String],
    pub series: &'a [String],
    pub values: &'a [Vec<Option<f64>>],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl BarChart<'_> {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );
        let all: Vec<f64> = self.values.iter().flatten().flatten().copied().filter(|v| v.is_finite()).collect();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        if all.is_empty() || self.groups.is_empty() || self.series.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
                WIDTH / 2.0,
                HEIGHT / 2.0
            );
            out.push_str("</svg>\n");
            return out;
        }
        let lo = all.iter().copied().fold(0.0, f64::min);
        let hi = all.iter().copied().fold(0.0, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let y = |v: f64| MARGIN_TOP + plot_h * (hi - v) / (hi - lo);

        // axes and ticks
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{}" stroke="black"/>"#,
            MARGIN_TOP + plot_h
        );
        for i in 0..=4 {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 4.0,
                MARGIN_LEFT - 6.0,
                y(v) + 4.0,
                tick(v),
                y = y(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_LEFT}" y1="{z:.2}" x2="{}" y2="{z:.2}" stroke="black"/>"#,
            MARGIN_LEFT + plot_w,
            z = y(0.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(self.y_label)
        );

        let group_w = plot_w / self.groups.len() as f64;
        let bar_w = group_w * 0.8 / self.series.len() as f64;
        for (g, name) in self.groups.iter().enumerate() {
            let x0 = MARGIN_LEFT + g as f64 * group_w + group_w * 0.1;
            for (s, _) in self.series.iter().enumerate() {
                let Some(v) = self.values.get(g).and_then(|row| row.get(s)).copied().flatten() else {
                    continue;
                };
                if !v.is_finite() {
                    continue;
                }
                let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
                    x0 + s as f64 * bar_w,
                    (bottom - top).max(0.0),
                    PALETTE[s % PALETTE.len()]
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x0 + group_w * 0.4,
                MARGIN_TOP + plot_h + 18.0,
                escape(name)
            );
        }
        for (s, name) in self.series.iter().enumerate() {
            let ly = MARGIN_TOP + 14.0 * s as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                PALETTE[s % PALETTE.len()],
                lx + 14.0,
                ly + 9.0,
                escape(name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
