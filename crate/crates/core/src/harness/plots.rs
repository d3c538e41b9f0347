//! Figure data: one CSV and one self-contained SVG line plot per figure,
//! with the phase transitions marked.

use std::fmt::Write as _;
use std::path::Path;

use crate::controller::Phase;
use crate::error::{Error, Result};
use crate::sim::LogRow;

pub struct Figure {
    pub name: &'static str,
    pub title: &'static str,
    pub unit: &'static str,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Times at which the phase changes, with the phase entered.
pub fn phase_boundaries(rows: &[LogRow]) -> Vec<(f64, Phase)> {
    rows.windows(2)
        .filter(|w| w[0].phase != w[1].phase)
        .map(|w| (w[1].t, w[1].phase))
        .collect()
}

/// End-effector velocities with their references, contact forces and
/// commanded torques.
pub fn figures(rows: &[LogRow]) -> Vec<Figure> {
    let col = |f: &dyn Fn(&LogRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let mut velocity = vec![];
    for i in 0..2 {
        velocity.push((format!("r{i}_vx"), col(&|r| r.ee_twist[i].x)));
        velocity.push((format!("r{i}_ref_vx"), col(&|r| r.ee_reference[i].x)));
        velocity.push((format!("r{i}_vy"), col(&|r| r.ee_twist[i].y)));
        velocity.push((format!("r{i}_ref_vy"), col(&|r| r.ee_reference[i].y)));
    }
    let mut forces = vec![];
    for k in 0..4 {
        forces.push((format!("c{k}_lambda_n"), col(&|r| r.contacts[k].lambda_n)));
    }
    for k in 0..4 {
        forces.push((format!("c{k}_lambda_t"), col(&|r| r.contacts[k].lambda_t)));
    }
    let mut torques = vec![];
    for i in 0..2 {
        for j in 0..3 {
            torques.push((format!("r{i}_tau{j}"), col(&|r| r.tau[i][j])));
        }
    }
    vec![
        Figure {
            name: "velocities",
            title: "End-effector velocities and references",
            unit: "m/s",
            series: velocity,
        },
        Figure {
            name: "contact_forces",
            title: "Contact forces",
            unit: "N",
            series: forces,
        },
        Figure {
            name: "torques",
            title: "Commanded joint torques",
            unit: "N·m",
            series: torques,
        },
    ]
}

pub fn figure_csv(rows: &[LogRow], fig: &Figure) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    let mut header = vec!["t".to_string(), "phase".to_string()];
    header.extend(fig.series.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).expect("in-memory write");
    for (k, r) in rows.iter().enumerate() {
        let mut rec = vec![r.t.to_string(), r.phase.as_str().to_string()];
        rec.extend(fig.series.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line plot. Phase boundaries are dashed vertical lines with
/// class `phase-boundary` and `data-t`/`data-phase` attributes.
pub fn figure_svg(t: &[f64], fig: &Figure, boundaries: &[(f64, Phase)]) -> String {
    let (w, h, margin) = (900.0, 420.0, 60.0);
    let (t0, t1) = match (t.first(), t.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (*a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let values = fig
        .series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let x = |v: f64| margin + (v - t0) / (t1 - t0) * (w - 2.0 * margin);
    let y = |v: f64| h - margin - (v - lo) / (hi - lo) * (h - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        escape(fig.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    for (v, anchor) in [(lo, h - margin), (hi, margin + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>"#,
            margin - 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">t (s) — {t0:.3} … {t1:.3}; y in {}</text>"#,
        w / 2.0,
        h - 20.0,
        escape(fig.unit)
    );
    for (tb, phase) in boundaries {
        let _ = writeln!(
            s,
            r#"<line class="phase-boundary" data-t="{tb}" data-phase="{phase}" x1="{xb:.2}" y1="{margin}" x2="{xb:.2}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
            h - margin,
            xb = x(*tb)
        );
    }
    for (k, (name, v)) in fig.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (ti, vi) in t.iter().zip(v) {
            if vi.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(*ti), y(*vi));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            escape(name),
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            margin + 6.0,
            margin + 14.0 * (k + 1) as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<name>.csv` and `<name>.svg` for every figure into `dir`.
pub fn emit_plots(rows: &[LogRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let boundaries = phase_boundaries(rows);
    for fig in figures(rows) {
        let csv_path = dir.join(format!("{}.csv", fig.name));
        std::fs::write(&csv_path, figure_csv(rows, &fig)).map_err(|e| Error::io(&csv_path, e))?;
        let svg_path = dir.join(format!("{}.svg", fig.name));
        std::fs::write(&svg_path, figure_svg(&t, &fig, &boundaries)).map_err(|e| Error::io(&svg_path, e))?;
    }
    Ok(())
}
