use std::fmt::Write;

use anyhow::bail;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// One success-rate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(epoch, success_rate)` pairs in epoch order.
    pub points: Vec<(f64, f64)>,
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// XML comments may not contain `--`.
fn comment_safe(s: &str) -> String {
    let mut out = s.replace("--", "- -");
    if out.ends_with('-') {
        out.push(' ');
    }
    out
}

/// Success rate against epoch, one line per series, with the plotted values
/// repeated in a comment block as CSV.
pub fn render_svg(title: &str, series: &[Series]) -> anyhow::Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        bail!("nothing to plot: every series needs at least one epoch");
    }
    let max_epoch = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |epoch: f64| MARGIN_LEFT + plot_w * epoch / max_epoch;
    let y = |rate: f64| MARGIN_TOP + plot_h * (1.0 - rate.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    svg.push_str("<!-- data\nseries,epoch,success_rate\n");
    for s in series {
        for &(e, r) in &s.points {
            let _ = writeln!(svg, "{},{e},{r}", comment_safe(&s.label).replace(',', ";"));
        }
    }
    svg.push_str("-->\n");
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape_xml(title)
    );

    for i in 0..=5 {
        let rate = i as f64 / 5.0;
        let yy = y(rate);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#e0e0e0"/>"##,
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{rate:.1}</text>"#,
            MARGIN_LEFT - 6.0,
            yy + 4.0
        );
    }
    let ticks = 5usize;
    for i in 0..=ticks {
        let epoch = max_epoch * i as f64 / ticks as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(epoch),
            HEIGHT - MARGIN_BOTTOM + 18.0,
            (epoch * 10.0).round() / 10.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">success rate</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(e, r)| format!("{:.2},{:.2}", x(e), y(r)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 16.0 + 16.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape_xml(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, n: usize) -> Series {
        Series {
            label: label.into(),
            points: (1..=n).map(|e| (e as f64, e as f64 / n as f64)).collect(),
        }
    }

    #[test]
    fn one_polyline_per_series() {
        let svg = render_svg("Reach", &[series("with BC", 4), series("without BC", 3)]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("with BC</text>"));
        assert!(svg.contains("without BC,3,1\n"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(render_svg("x", &[]).is_err());
        assert!(render_svg("x", &[series("a", 0)]).is_err());
    }

    #[test]
    fn labels_cannot_break_comments_or_markup() {
        let svg = render_svg("a<b", &[series("run--1 <x>", 2)]).unwrap();
        let comment = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
        assert!(!comment.contains("--"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("run--1 &lt;x&gt;"));
    }
}
