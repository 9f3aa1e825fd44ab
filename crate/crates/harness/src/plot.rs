//! Minimal SVG line plots with confidence bands, rendered directly from a
//! suite summary.csv. One figure = one metric, all variants overlaid.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dawn_core::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug, Clone)]
struct Series {
    steps: Vec<f64>,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn parse_summary(path: &Path, metric: &str) -> Result<BTreeMap<String, Series>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "variant,step,metric,mean,ci_lower,ci_upper" {
        return Err(Error::Config(format!("unexpected summary header {header:?}")));
    }
    let mut out: BTreeMap<String, Series> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Config(format!("malformed summary row {line:?}")));
        }
        if f[2] != metric {
            continue;
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("bad number {s:?} in {line:?}")))
        };
        let e = out.entry(f[0].to_string()).or_insert_with(|| Series {
            steps: vec![],
            mean: vec![],
            lo: vec![],
            hi: vec![],
        });
        e.steps.push(parse(f[1])?);
        e.mean.push(parse(f[3])?);
        e.lo.push(parse(f[4])?);
        e.hi.push(parse(f[5])?);
    }
    Ok(out)
}

fn poly(points: impl Iterator<Item = (f64, f64)>) -> String {
    points.map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// Render the named metric from a summary.csv as an SVG line plot with a
/// shaded 95% CI band per variant. An empty metric yields an annotated
/// empty plot rather than an error.
pub fn plot_metric(summary: &Path, metric: &str, out: &Path) -> Result<()> {
    let series = parse_summary(summary, metric)?;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;

    if series.is_empty() || series.values().all(|s| s.steps.is_empty()) {
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"16\">no data for metric {metric}</text>\n</svg>\n",
            MARGIN_L + plot_w / 2.0,
            MARGIN_T + plot_h / 2.0,
        ));
        fs::write(out, svg)?;
        return Ok(());
    }

    let xs: Vec<f64> = series.values().flat_map(|s| s.steps.iter().copied()).collect();
    let ys: Vec<f64> = series
        .values()
        .flat_map(|s| s.lo.iter().chain(s.hi.iter()).copied())
        .filter(|v| v.is_finite())
        .collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = move |x: f64| MARGIN_L + (x - x0) / (x1 - x0).max(1e-12) * plot_w;
    let sy = move |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0).max(1e-12) * plot_h;

    // axes and labels
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h,
    ));
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{fx:.0}</text>\n",
            sx(fx),
            MARGIN_T + plot_h + 18.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{fy:.3}</text>\n",
            MARGIN_L - 6.0,
            sy(fy) + 4.0,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">env steps</text>\n\
         <text x=\"{:.0}\" y=\"14\" font-family=\"sans-serif\" font-size=\"14\">{metric}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0,
        MARGIN_L,
    ));

    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // CI band: upper edge forward, lower edge reversed
        let band = poly(
            s.steps
                .iter()
                .zip(&s.hi)
                .map(|(&x, &y)| (sx(x), sy(y)))
                .chain(s.steps.iter().zip(&s.lo).rev().map(|(&x, &y)| (sx(x), sy(y)))),
        );
        svg.push_str(&format!(
            "<polygon points=\"{band}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
        ));
        let line = poly(s.steps.iter().zip(&s.mean).map(|(&x, &y)| (sx(x), sy(y))));
        svg.push_str(&format!(
            "<polyline points=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        let ly = MARGIN_T + 16.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            "<rect x=\"{:.0}\" y=\"{:.0}\" width=\"12\" height=\"3\" fill=\"{color}\"/>\n\
             <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
            WIDTH - MARGIN_R + 10.0,
            ly - 2.0,
            WIDTH - MARGIN_R + 28.0,
            ly + 3.0,
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(out, svg)?;
    Ok(())
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
