//! Static SVG scatter plots of the error / total-effect trade-off.
//!
//! One marker series per group (the `method` column by default); rows of one
//! group spanning several mixing weights are aggregated per weight and joined
//! by a polyline, rendering sweep frontiers. Pure text emission, no plotting
//! dependency, deterministic output.

use anyhow::{bail, Context, Result};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub x_col: String,
    pub y_col: String,
    pub group_by: String,
    pub width: f64,
    pub height: f64,
    pub title: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            x_col: "te".into(),
            y_col: "error".into(),
            group_by: "method".into(),
            width: 640.0,
            height: 440.0,
            title: String::new(),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];
const MARKERS: [MarkerShape; 5] = [
    MarkerShape::Circle,
    MarkerShape::Square,
    MarkerShape::Diamond,
    MarkerShape::TriangleUp,
    MarkerShape::TriangleDown,
];

#[derive(Debug, Clone, Copy)]
enum MarkerShape {
    Circle,
    Square,
    Diamond,
    TriangleUp,
    TriangleDown,
}

struct Series {
    name: String,
    /// (x, y, lambda) triples in row order.
    points: Vec<(f64, f64, Option<f64>)>,
}

/// Renders a CSV results table to an SVG string.
pub fn plot_csv_str(csv: &str, opts: &PlotOptions) -> Result<String> {
    let mut lines = csv.lines();
    let header = lines.next().context("empty CSV input")?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .with_context(|| format!("missing column `{name}` in CSV header"))
    };
    let xi = find(&opts.x_col)?;
    let yi = find(&opts.y_col)?;
    let gi = find(&opts.group_by)?;
    let li = cols.iter().position(|c| *c == "lambda");

    let mut series: Vec<Series> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            bail!("row {} has {} fields, expected {}", lineno + 2, fields.len(), cols.len());
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number `{}`", lineno + 2, fields[i]))
        };
        let x = parse(xi)?;
        let y = parse(yi)?;
        let lambda = li.map(parse).transpose()?;
        let group = fields[gi].to_string();
        match series.iter_mut().find(|s| s.name == group) {
            Some(s) => s.points.push((x, y, lambda)),
            None => series.push(Series { name: group, points: vec![(x, y, lambda)] }),
        }
    }
    Ok(render(&series, opts))
}

/// Reads a CSV file and writes the rendered SVG.
pub fn plot_file(input: &Path, output: &Path, opts: &PlotOptions) -> Result<()> {
    let csv = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let svg = plot_csv_str(&csv, opts)?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(output, svg).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn render(series: &[Series], opts: &PlotOptions) -> String {
    let (w, h) = (opts.width, opts.height);
    let (ml, mr, mt, mb) = (70.0, 150.0, 30.0, 55.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y, _) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);
    let sx = move |v: f64| ml + (v - x_lo) / (x_hi - x_lo) * pw;
    let sy = move |v: f64| mt + ph - (v - y_lo) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if !opts.title.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            ml + pw / 2.0,
            escape(&opts.title)
        ));
    }

    // Axes and ticks.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let xp = sx(xv);
        svg.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{0}\" x2=\"{xp}\" y2=\"{1}\" stroke=\"black\"/>\n\
             <text x=\"{xp}\" y=\"{2}\" text-anchor=\"middle\">{3}</text>\n",
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 20.0,
            tick_label(xv)
        ));
        let yv = y_lo + f * (y_hi - y_lo);
        let yp = sy(yv);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{yp}\" x2=\"{ml}\" y2=\"{yp}\" stroke=\"black\"/>\n\
             <text x=\"{1}\" y=\"{2}\" text-anchor=\"end\">{3}</text>\n",
            ml - 5.0,
            ml - 8.0,
            yp + 4.0,
            tick_label(yv)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 12.0,
        escape(&opts.x_col)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&opts.y_col)
    ));

    // Series: sweep polylines (aggregated per mixing weight) and markers.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let shape = MARKERS[si % MARKERS.len()];
        let sweep = sweep_vertices(&s.points);
        if let Some(vertices) = &sweep {
            let pts: Vec<String> = vertices
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline class=\"sweep\" points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
            for &(x, y) in vertices {
                svg.push_str(&marker(sx(x), sy(y), shape, color));
            }
        } else {
            for &(x, y, _) in &s.points {
                svg.push_str(&marker(sx(x), sy(y), shape, color));
            }
        }
        // Legend entry.
        let ly = mt + 10.0 + si as f64 * 18.0;
        let lx = ml + pw + 18.0;
        svg.push_str(&marker(lx, ly, shape, color));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 10.0,
            ly + 4.0,
            escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Groups points by mixing weight when the series spans several weights;
/// returns per-weight mean vertices sorted by weight, or `None` for plain
/// scatter series.
fn sweep_vertices(points: &[(f64, f64, Option<f64>)]) -> Option<Vec<(f64, f64)>> {
    let mut lambdas: Vec<u64> = points.iter().filter_map(|p| p.2.map(f64::to_bits)).collect();
    lambdas.sort_unstable();
    lambdas.dedup();
    if lambdas.len() < 2 {
        return None;
    }
    let mut vertices: Vec<(f64, f64, f64)> = Vec::new();
    for bits in lambdas {
        let l = f64::from_bits(bits);
        let group: Vec<&(f64, f64, Option<f64>)> =
            points.iter().filter(|p| p.2 == Some(l)).collect();
        let n = group.len() as f64;
        let x = group.iter().map(|p| p.0).sum::<f64>() / n;
        let y = group.iter().map(|p| p.1).sum::<f64>() / n;
        vertices.push((l, x, y));
    }
    vertices.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite lambda"));
    Some(vertices.into_iter().map(|(_, x, y)| (x, y)).collect())
}

fn marker(x: f64, y: f64, shape: MarkerShape, color: &str) -> String {
    const R: f64 = 4.0;
    match shape {
        MarkerShape::Circle => format!(
            "<circle class=\"marker\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{R}\" fill=\"{color}\"/>\n"
        ),
        MarkerShape::Square => format!(
            "<rect class=\"marker\" x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" \
             fill=\"{color}\"/>\n",
            x - R,
            y - R,
            2.0 * R,
            2.0 * R
        ),
        MarkerShape::Diamond => format!(
            "<polygon class=\"marker\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" \
             fill=\"{color}\"/>\n",
            x,
            y - R,
            x + R,
            y,
            x,
            y + R,
            x - R,
            y
        ),
        MarkerShape::TriangleUp => format!(
            "<polygon class=\"marker\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" \
             fill=\"{color}\"/>\n",
            x,
            y - R,
            x + R,
            y + R,
            x - R,
            y + R
        ),
        MarkerShape::TriangleDown => format!(
            "<polygon class=\"marker\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" \
             fill=\"{color}\"/>\n",
            x,
            y + R,
            x + R,
            y - R,
            x - R,
            y - R
        ),
    }
}

fn padded_range(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (0.001..10000.0).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
