//! Minimal log-log SVG chart for the scaling study.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const PAD: f64 = 64.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

/// Plots `log10 y` against `log10 x`. Non-positive values are skipped.
pub fn loglog_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let all: Vec<(f64, f64)> = logs.iter().flatten().copied().collect();
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    // whole decades on the y axis, a little slack on x
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let slack = 0.05 * (x1 - x0).max(0.1);
    x0 -= slack;
    x1 += slack;

    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * PAD);
    let sy = |y: f64| HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * PAD,
        HEIGHT - 2.0 * PAD
    );
    let mut decade = y0;
    while decade <= y1 + 1e-9 {
        let y = sy(decade);
        let _ = writeln!(svg, r#"<line x1="{PAD}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="lightgray"/>"#, WIDTH - PAD);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#, PAD - 6.0, y + 4.0, decade as i64);
        decade += 1.0;
    }
    if let Some(s) = series.iter().find(|s| s.markers) {
        for &(x, _) in &s.points {
            if x > 0.0 {
                let px = sx(x.log10());
                let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, HEIGHT - PAD + 16.0, trim(x));
            }
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, (s, pts)) in series.iter().zip(&logs).enumerate() {
        if s.markers {
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, sx(x), sy(y), s.color);
            }
        } else if pts.len() >= 2 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, path.join(" "), s.color);
        }
        let ly = PAD + 16.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, WIDTH - PAD - 180.0, ly - 9.0, s.color);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, WIDTH - PAD - 165.0, escape(s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_contains_markers_and_line() {
        let svg = loglog_svg(
            "E(v)",
            "v",
            "error",
            &[
                Series { label: "measured", color: "black", points: vec![(8.0, 0.1), (64.0, 0.01)], markers: true },
                Series { label: "fit", color: "red", points: vec![(8.0, 0.1), (64.0, 0.01)], markers: false },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(">64<"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = loglog_svg("a<b", "x", "y", &[]);
        assert!(svg.contains("a&lt;b"));
    }
}
