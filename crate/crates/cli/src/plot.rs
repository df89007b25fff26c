//! Minimal self-contained SVG charts. Plots are views of the emitted CSV:
//! every number drawn here also appears in a CSV row.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One polyline on a line chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks.max(1) as f64;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(0.01..1000.0).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT
            + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn chart_prelude(svg: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="26" font-family="sans-serif" font-size="17" text-anchor="middle" font-weight="bold">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = write!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        x_label
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        y_label
    );

    // Ticks and gridlines.
    let x_step = nice_step(frame.x_max - frame.x_min, 8);
    let mut t = (frame.x_min / x_step).ceil() * x_step;
    while t <= frame.x_max + 1e-9 {
        let px = frame.x(t);
        let _ = write!(
            svg,
            r##"<line x1="{px}" y1="{y0}" x2="{px}" y2="{y1}" stroke="#dddddd"/><line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"##,
            y0 + 5.0,
            y0 + 20.0,
            fmt_tick(t)
        );
        t += x_step;
    }
    let y_step = nice_step(frame.y_max - frame.y_min, 7);
    let mut t = (frame.y_min / y_step).ceil() * y_step;
    while t <= frame.y_max + 1e-9 {
        let py = frame.y(t);
        let _ = write!(
            svg,
            r##"<line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" stroke="#dddddd"/><line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/><text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"##,
            x0 - 5.0,
            x0 - 9.0,
            py + 4.0,
            fmt_tick(t)
        );
        t += y_step;
    }
}

/// Renders a multi-series line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    if points.is_empty() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_min == x_max {
        x_max += 1.0;
    }
    if y_min == y_max {
        y_max += 1.0;
    }
    let pad = (y_max - y_min) * 0.06;
    let frame = Frame {
        x_min,
        x_max,
        y_min: (y_min - pad).min(0.0f64.max(y_min - pad)),
        y_max: y_max + pad,
    };

    let mut svg = String::new();
    chart_prelude(&mut svg, title, x_label, y_label, &frame);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (j, (x, y)) in s.points.iter().enumerate() {
            let _ = write!(
                path,
                "{}{},{}",
                if j == 0 { "" } else { " " },
                frame.x(*x),
                frame.y(*y)
            );
        }
        let _ = write!(
            svg,
            r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>"#
        );
        // Legend entry.
        let ly = MARGIN_TOP + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = write!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2.5"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Renders grouped vertical bars: one group per x label, one bar per series.
pub fn grouped_bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    group_labels: &[String],
    series: &[(String, Vec<f64>)],
) -> String {
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let y_min = all.iter().copied().fold(0.0f64, f64::min);
    let y_max = all.iter().copied().fold(0.0f64, f64::max).max(1e-9);
    let pad = (y_max - y_min) * 0.08;
    let frame = Frame {
        x_min: 0.0,
        x_max: group_labels.len() as f64,
        y_min: y_min - if y_min < 0.0 { pad } else { 0.0 },
        y_max: y_max + pad,
    };
    let mut svg = String::new();
    chart_prelude(&mut svg, title, x_label, y_label, &frame);
    let group_width = frame.x(1.0) - frame.x(0.0);
    let bar_width = group_width * 0.8 / series.len().max(1) as f64;
    let zero_y = frame.y(0.0f64.max(frame.y_min));
    for (gi, glabel) in group_labels.iter().enumerate() {
        for (si, (_, values)) in series.iter().enumerate() {
            let Some(&v) = values.get(gi) else { continue };
            let color = PALETTE[si % PALETTE.len()];
            let x = frame.x(gi as f64) + group_width * 0.1 + bar_width * si as f64;
            let y = frame.y(v);
            let (top, h) = if y <= zero_y {
                (y, zero_y - y)
            } else {
                (zero_y, y - zero_y)
            };
            let _ = write!(
                svg,
                r#"<rect x="{x}" y="{top}" width="{bar_width}" height="{h}" fill="{color}"/>"#
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            frame.x(gi as f64 + 0.5),
            HEIGHT - MARGIN_BOTTOM + 20.0,
            glabel
        );
    }
    for (si, (label, _)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let ly = MARGIN_TOP + 18.0 * si as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = write!(
            svg,
            r#"<rect x="{lx}" y="{}" width="14" height="10" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            ly - 8.0,
            lx + 20.0,
            ly + 2.0,
            label
        );
    }
    svg.push_str("</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_valid_svg_with_all_series() {
        let svg = line_chart(
            "goodput",
            "nodes",
            "%",
            &[
                Series {
                    label: "Aloha".into(),
                    points: vec![(1.0, 100.0), (25.0, 70.0), (50.0, 55.0)],
                },
                Series {
                    label: "Buffered".into(),
                    points: vec![(1.0, 100.0), (50.0, 52.0)],
                },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("Aloha"));
    }

    #[test]
    fn bar_chart_draws_negative_bars_too() {
        let svg = grouped_bar_chart(
            "gains",
            "fragments",
            "pp",
            &["2".into(), "3".into()],
            &[("frag only".into(), vec![-1.5, 2.0])],
        );
        assert!(svg.contains("<rect"));
    }

    #[test]
    fn empty_chart_still_renders() {
        let svg = line_chart("empty", "x", "y", &[]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
    }
}
