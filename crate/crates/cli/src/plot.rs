//! Static SVG rendering of threshold sweeps.

use std::fmt::Write;

use sitefusion::dta::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_X_TICKS: usize = 11;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// TPR, PPV and F1 against threshold, with the fitted threshold marked.
pub fn sweep_svg(title: &str, rows: &[SweepRow], fitted: f64) -> String {
    let (mut lo, mut hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.threshold), hi.max(r.threshold)));
    if rows.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - lo) / (hi - lo) * plot_w;
    let sy = |v: f64| TOP + (1.0 - v) * plot_h;

    let mut s = String::new();
    // writing into a String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = rows.len().div_ceil(MAX_X_TICKS).max(1);
    for r in rows.iter().step_by(step) {
        let x = sx(r.threshold);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            label(r.threshold)
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">threshold</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    let fx = sx(fitted);
    let _ = writeln!(
        s,
        r##"<line x1="{fx:.1}" y1="{TOP}" x2="{fx:.1}" y2="{:.1}" stroke="#666" stroke-dasharray="4 3"/>"##,
        TOP + plot_h
    );

    let series: [(&str, &str, fn(&SweepRow) -> f64); 3] = [
        ("TPR", "#1f77b4", |r| r.tpr),
        ("PPV", "#ff7f0e", |r| r.ppv),
        ("F1", "#2ca02c", |r| r.f1),
    ];
    for (i, (name, color, value)) in series.iter().enumerate() {
        let points: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.1},{:.1}", sx(r.threshold), sy(value(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">t* = {}</text>"#,
        LEFT + plot_w + 15.0,
        TOP + 80.0,
        label(fitted)
    );
    s.push_str("</svg>\n");
    s
}
