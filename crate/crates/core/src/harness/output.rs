//! Artifact writers: RFC-4180-style CSV with a header row, JSON summaries,
//! and self-contained single-file SVG plots. All output is a pure function
//! of the data, so identical runs produce byte-identical files.

use crate::backward::BackwardSolution;
use crate::error::Result;
use crate::forward::PathBundle;
use crate::grid::TimeGrid;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Forward paths: one row per (particle, node), capped at `limit` particles.
pub fn paths_csv(paths: &PathBundle, grid: &TimeGrid, limit: usize) -> String {
    let mut out = String::new();
    let coords: Vec<String> = (0..paths.dim).map(|j| format!("x{j}")).collect();
    let _ = writeln!(out, "particle,node,t,{}", coords.join(","));
    for p in 0..paths.n_particles.min(limit) {
        for k in 0..paths.n_nodes {
            let vals: Vec<String> = paths.state(p, k).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{p},{k},{},{}", grid.t(k), vals.join(","));
        }
    }
    out
}

/// Backward solution: one row per (particle, node) with Y, K and (for
/// non-terminal nodes) Z.
pub fn solution_csv(sol: &BackwardSolution, limit: usize) -> String {
    let mut out = String::new();
    let ys: Vec<String> = (0..sol.dim_y).map(|j| format!("y{j}")).collect();
    let ks: Vec<String> = (0..sol.dim_y).map(|j| format!("k{j}")).collect();
    let zs: Vec<String> = (0..sol.dim_z).map(|j| format!("z{j}")).collect();
    let _ = writeln!(
        out,
        "particle,node,t,{},{},{}",
        ys.join(","),
        ks.join(","),
        zs.join(",")
    );
    let n = sol.grid.n_steps;
    for p in 0..sol.n_particles.min(limit) {
        for node in 0..=n {
            let y: Vec<String> = sol.y(p, node).iter().map(|v| format!("{v}")).collect();
            let k: Vec<String> = sol.k(p, node).iter().map(|v| format!("{v}")).collect();
            let z: Vec<String> = if node < n {
                sol.z(p, node).iter().map(|v| format!("{v}")).collect()
            } else {
                vec![String::new(); sol.dim_z]
            };
            let _ = writeln!(
                out,
                "{p},{node},{},{},{},{}",
                sol.grid.t(node),
                y.join(","),
                k.join(","),
                z.join(",")
            );
        }
    }
    out
}

/// A labelled series for the SVG plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal self-contained SVG line plot.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (720.0, 480.0);
    let margin = 60.0;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if xmax - xmin < 1e-300 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-300 {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| margin + (x - xmin) / (xmax - xmin) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - ymin) / (ymax - ymin) * (h - 2.0 * margin);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        title
    );
    let _ = writeln!(
        out,
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    // Axis labels and end ticks.
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        h - 16.0,
        x_label
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        h / 2.0,
        h / 2.0,
        y_label
    );
    for (v, at_min) in [(xmin, true), (xmax, false)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{v:.4}</text>",
            if at_min { margin } else { w - margin },
            h - margin + 16.0
        );
    }
    for (v, at_min) in [(ymin, true), (ymax, false)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{v:.4}</text>",
            margin - 6.0,
            if at_min { h - margin } else { margin + 4.0 }
        );
    }
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            s.color
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"{}\">{}</text>",
            w - margin - 150.0,
            margin + 18.0 * (i as f64 + 1.0),
            s.color,
            s.label
        );
    }
    let _ = writeln!(out, "</svg>");
    out
}
