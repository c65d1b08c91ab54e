//! Minimal SVG line charts of `t_s,truth,predicted` series.

use std::fmt::Write as _;
use std::path::Path;

use spo2cam_core::{Error, Result};

pub struct Series {
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn read_series(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h.trim()).unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let (it, itruth, ipred) = (find("t_s")?, find("truth")?, find("predicted")?);
    let mut s = Series { t: Vec::new(), truth: Vec::new(), predicted: Vec::new() };
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields.get(i).and_then(|f| f.trim().parse().ok()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                msg: format!("bad number in column {}", i + 1),
            })
        };
        s.t.push(get(it)?);
        s.truth.push(get(itruth)?);
        s.predicted.push(get(ipred)?);
    }
    if s.t.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(s)
}

const W: f64 = 720.0;
const H: f64 = 320.0;
const MARGIN: f64 = 48.0;

fn polyline(out: &mut String, xs: &[f64], ys: &[f64], map: impl Fn(f64, f64) -> (f64, f64), color: &str) {
    let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points=""#);
    for (x, y) in xs.iter().zip(ys) {
        let (px, py) = map(*x, *y);
        let _ = write!(out, "{px:.2},{py:.2} ");
    }
    out.push_str("\"/>\n");
}

/// Prediction and truth over time on shared axes.
pub fn render_svg(title: &str, s: &Series) -> String {
    let (t0, t1) = (s.t[0], s.t[s.t.len() - 1].max(s.t[0] + 1.0));
    let all = s.truth.iter().chain(&s.predicted);
    let lo = all.clone().fold(f64::INFINITY, |a, &b| a.min(b)).floor() - 1.0;
    let hi = all.fold(f64::NEG_INFINITY, |a, &b| a.max(b)).ceil() + 1.0;
    let map = |t: f64, v: f64| {
        let x = MARGIN + (t - t0) / (t1 - t0) * (W - 2.0 * MARGIN);
        let y = H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);
        (x, y)
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let (x0, y0) = map(t0, lo);
    let (x1, y1) = map(t1, hi);
    let _ = writeln!(out, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for v in [lo, (lo + hi) / 2.0, hi] {
        let (_, y) = map(t0, v);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1}</text>"#,
            x0 - 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.0} s</text>"#,
        y0 + 16.0,
        t1
    );
    polyline(&mut out, &s.t, &s.truth, map, "black");
    polyline(&mut out, &s.t, &s.predicted, map, "#d62728");
    let _ = writeln!(
        out,
        r##"<text x="{}" y="24" font-family="sans-serif" font-size="11" text-anchor="end"><tspan fill="black">truth</tspan> <tspan fill="#d62728">predicted</tspan></text>"##,
        W - MARGIN
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
