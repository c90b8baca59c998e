use std::fmt::Write as _;
use std::path::Path;

use crate::radial::RadialFunction;

use super::CliError;

/// CSV text with a header row `r,<names...>` and one row per mesh point.
pub fn csv_table(names: &[&str], columns: &[&RadialFunction]) -> String {
    let mesh = columns[0].mesh();
    let mut out = String::from("r");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for i in 0..mesh.n_points() {
        let _ = write!(out, "{:.16e}", mesh.r(i));
        for c in columns {
            let _ = write!(out, ",{:.16e}", c.values()[i]);
        }
        out.push('\n');
    }
    out
}

/// Minimal SVG line plot with one polyline per column.
pub fn svg_plot(names: &[&str], columns: &[&RadialFunction]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

    let mesh = columns[0].mesh();
    let (x0, x1) = (mesh.r_min(), mesh.r_max());
    let (mut lo, mut hi) = columns
        .iter()
        .flat_map(|c| c.values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let sx = |r: f64| PAD + (r - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    // keep files small on dense meshes
    let stride = (mesh.n_points() / 2000).max(1);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * PAD, H - 2.0 * PAD);
    if lo < 0.0 && hi > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(out, r#"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 4"/>"#, W - PAD);
    }
    for (k, (c, name)) in columns.iter().zip(names).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = (0..mesh.n_points())
            .step_by(stride)
            .chain(std::iter::once(mesh.n_points() - 1))
            .map(|i| format!("{:.2},{:.2}", sx(mesh.r(i)), sy(c.values()[i])))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{color}" font-size="14">{name}</text>"#, W - PAD - 60.0, PAD + 20.0 * (k + 1) as f64);
    }
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" font-size="12">r = {x0:e}</text>"#, H - 10.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">r = {x1:e}</text>"#, W - PAD, H - 10.0);
    out.push_str("</svg>\n");
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}
