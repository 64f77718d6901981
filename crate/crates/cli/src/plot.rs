//! A minimal SVG report: the marginal-likelihood trace and histograms of
//! tree length and log-likelihood over posterior samples.

use std::fmt::Write;

use vipr::trainer::TraceRecord;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;
const BINS: usize = 30;

struct Frame {
    x0: f64,
    y0: f64,
}

impl Frame {
    fn px(&self, u: f64) -> f64 {
        self.x0 + MARGIN + u * (PANEL_W - 2.0 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN - v * (PANEL_H - 2.0 * MARGIN)
    }
}

fn range(xs: &[f64]) -> Option<(f64, f64)> {
    let mut it = xs.iter().copied().filter(|x| x.is_finite());
    let first = it.next()?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi > lo {
        Some((lo, hi))
    } else {
        Some((lo - 0.5, hi + 0.5))
    }
}

fn axes(svg: &mut String, f: &Frame, title: &str, x: (f64, f64), y: (f64, f64)) {
    let _ = write!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        f.px(0.0),
        f.py(1.0),
        f.px(1.0) - f.px(0.0),
        f.py(0.0) - f.py(1.0)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{title}</text>"#,
        f.x0 + PANEL_W / 2.0,
        f.y0 + 22.0
    );
    for (u, label) in [(0.0, x.0), (1.0, x.1)] {
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
            f.px(u),
            f.py(0.0) + 14.0,
            short(label)
        );
    }
    for (v, label) in [(0.0, y.0), (1.0, y.1)] {
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#,
            f.px(0.0) - 4.0,
            f.py(v) + 3.0,
            short(label)
        );
    }
}

fn short(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        format!("{x:.3}")
    }
}

fn trace_panel(svg: &mut String, f: &Frame, trace: &[TraceRecord]) {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter_map(|r| r.mll.filter(|m| m.is_finite()).map(|m| (r.iteration as f64, m)))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (Some(xr), Some(yr)) = (range(&xs), range(&ys)) else {
        axes(svg, f, "MLL estimate (no data)", (0.0, 1.0), (0.0, 1.0));
        return;
    };
    axes(svg, f, "MLL estimate by iteration", xr, yr);
    let path: Vec<String> = pts
        .iter()
        .map(|(x, y)| {
            format!(
                "{:.2},{:.2}",
                f.px((x - xr.0) / (xr.1 - xr.0)),
                f.py((y - yr.0) / (yr.1 - yr.0))
            )
        })
        .collect();
    let _ = write!(
        svg,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        path.join(" ")
    );
}

fn histogram_panel(svg: &mut String, f: &Frame, title: &str, values: &[f64]) {
    let Some(xr) = range(values) else {
        axes(svg, f, title, (0.0, 1.0), (0.0, 1.0));
        return;
    };
    let mut counts = [0usize; BINS];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - xr.0) / (xr.1 - xr.0)) * BINS as f64) as usize;
        counts[b.min(BINS - 1)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64;
    axes(svg, f, title, xr, (0.0, top));
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = f.px(i as f64 / BINS as f64);
        let w = f.px((i + 1) as f64 / BINS as f64) - x;
        let y = f.py(c as f64 / top);
        let _ = write!(
            svg,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#ff7f0e" stroke="white" stroke-width="0.5"/>"##,
            w,
            f.py(0.0) - y
        );
    }
}

pub fn render(trace: &[TraceRecord], tree_lengths: &[f64], log_likelihoods: &[f64]) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        3.0 * PANEL_W,
        PANEL_H
    );
    trace_panel(&mut svg, &Frame { x0: 0.0, y0: 0.0 }, trace);
    histogram_panel(&mut svg, &Frame { x0: PANEL_W, y0: 0.0 }, "Tree length", tree_lengths);
    histogram_panel(&mut svg, &Frame { x0: 2.0 * PANEL_W, y0: 0.0 }, "Log-likelihood", log_likelihoods);
    svg.push_str("</svg>\n");
    svg
}
