use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const FLOOR: f64 = 1e-6;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// `ln((v - min) / (max - min) + 1e-6)`, per curve. A flat curve maps to 0.
pub fn log_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| {
            let u = if span > 0.0 { (v - lo) / span } else { 1.0 };
            (u + FLOOR).ln()
        })
        .collect()
}

/// Line plot of log-normalized curves against masked fraction. `series` holds
/// `(label, x in [0, 1], raw y)`.
pub fn curves_svg(header: &str, series: &[(String, Vec<f64>, Vec<f64>)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<!-- {} -->", header.replace("--", "- -"));
    let _ = writeln!(
        s,
        "<!-- y = ln((v - min) / (max - min) + {FLOOR:e}), min and max taken per curve -->"
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let y_lo = FLOOR.ln();
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let px = |x: f64| MARGIN + x.clamp(0.0, 1.0) * pw;
    let py = |y: f64| MARGIN + (y / y_lo).clamp(0.0, 1.0) * ph;
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">fraction of pixels masked</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">log-normalized score</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (label, xs, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(log_normalize(ys))
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + pw - 150.0,
            MARGIN + 15.0 + 14.0 * i as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
