//! SVG timeline of true versus predicted occupancy.

use std::fmt::Write as _;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub timestamp: i64,
    pub truth: u32,
    pub prediction: u32,
}

/// Reads `timestamp,truth,prediction` rows.
pub fn parse_series_csv(text: &str) -> Result<Vec<SeriesRow>, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().map(|(_, l)| l.trim().to_ascii_lowercase());
    if header.as_deref() != Some("timestamp,truth,prediction") {
        return Err(CliError::Usage("series CSV must start with `timestamp,truth,prediction`".into()));
    }
    lines
        .map(|(n, l)| {
            let bad = || CliError::Usage(format!("series line {}: malformed row `{l}`", n + 1));
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(SeriesRow {
                timestamp: f[0].parse().map_err(|_| bad())?,
                truth: f[1].parse().map_err(|_| bad())?,
                prediction: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const Y_MAX: f64 = 15.0;
const TRUTH_COLOR: &str = "#ff7f0e";
const PREDICTION_COLOR: &str = "#1f77b4";

fn step_points(values: &[u32], x_of: impl Fn(usize) -> f64, y_of: impl Fn(u32) -> f64) -> String {
    let mut pts = String::new();
    for (i, &v) in values.iter().enumerate() {
        let y = y_of(v);
        let _ = write!(pts, "{:.2},{:.2} {:.2},{:.2} ", x_of(i), y, x_of(i + 1), y);
    }
    pts.pop();
    pts
}

/// Renders both series as step lines over sample index. Output depends
/// only on the rows.
pub fn render_svg(rows: &[SeriesRow], title: &str) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let n = rows.len().max(1) as f64;
    let x_of = |i: usize| LEFT + plot_w * i as f64 / n;
    let y_of = |v: u32| TOP + plot_h * (1.0 - (v as f64).min(Y_MAX) / Y_MAX);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    // Axes, with horizontal grid lines every 5 people.
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    for v in [0u32, 5, 10, 15] {
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{v}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">time (window end, in order)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">people count</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let truth: Vec<u32> = rows.iter().map(|r| r.truth).collect();
    let pred: Vec<u32> = rows.iter().map(|r| r.prediction).collect();
    for (name, values, color) in [("truth", &truth, TRUTH_COLOR), ("prediction", &pred, PREDICTION_COLOR)] {
        let _ = writeln!(
            svg,
            r#"<polyline id="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            step_points(values, x_of, y_of)
        );
    }

    // Legend.
    for (k, (name, color)) in [("truth", TRUTH_COLOR), ("prediction", PREDICTION_COLOR)].iter().enumerate() {
        let x = WIDTH - RIGHT - 190.0 + 100.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="20" x2="{:.2}" y2="20" stroke="{color}" stroke-width="3"/>"#,
            x + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="12">{name}</text>"#,
            x + 25.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(pairs: &[(u32, u32)]) -> Vec<SeriesRow> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(truth, prediction))| SeriesRow { timestamp: i as i64 * 300, truth, prediction })
            .collect()
    }

    fn polyline_points(svg: &str, id: &str) -> String {
        let start = svg.find(&format!(r#"<polyline id="{id}""#)).unwrap();
        let rest = &svg[start..];
        let p = rest.find("points=\"").unwrap() + 8;
        rest[p..p + rest[p..].find('"').unwrap()].to_string()
    }

    #[test]
    fn two_points_two_polylines() {
        let svg = render_svg(&rows(&[(0, 1), (3, 3)]), "test");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">truth<") && svg.contains(">prediction<"));
        assert!(svg.contains("people count"));
    }

    #[test]
    fn identical_series_identical_lines() {
        let svg = render_svg(&rows(&[(0, 0), (4, 4), (12, 12)]), "same");
        assert_eq!(polyline_points(&svg, "truth"), polyline_points(&svg, "prediction"));
    }

    #[test]
    fn deterministic_output() {
        let r = rows(&[(1, 2), (2, 2)]);
        assert_eq!(render_svg(&r, "a"), render_svg(&r, "a"));
    }

    #[test]
    fn malformed_series() {
        assert!(parse_series_csv("a,b\n").is_err());
        assert!(parse_series_csv("timestamp,truth,prediction\n1,2\n").is_err());
        assert!(parse_series_csv("timestamp,truth,prediction\n1,x,2\n").is_err());
        assert_eq!(parse_series_csv("timestamp,truth,prediction\n5,1,2\n").unwrap(), rows(&[(1, 2)]).iter().map(|r| SeriesRow { timestamp: 5, ..*r }).collect::<Vec<_>>());
    }
}
