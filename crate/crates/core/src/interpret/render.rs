use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SensitivityMap;
use crate::traj::{Axis, Layout, ScenePast};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Svg,
    Csv,
    #[default]
    Both,
}

impl FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(Self::Svg),
            "csv" => Ok(Self::Csv),
            "both" => Ok(Self::Both),
            other => Err(Error::invalid(format!("unknown render format '{other}' (svg, csv, both)"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    agent: usize,
    timestep: usize,
    axis: Axis,
    sensitivity: f64,
}

/// Writes `sensitivity.svg` and/or `sensitivity.csv` into `out_dir`.
pub fn render(map: &SensitivityMap, scene: &ScenePast, out_dir: &Path, format: RenderFormat) -> Result<Vec<PathBuf>> {
    if scene.layout() != map.layout {
        return Err(Error::invalid("scene layout does not match the sensitivity map"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    if matches!(format, RenderFormat::Csv | RenderFormat::Both) {
        let path = out_dir.join("sensitivity.csv");
        write_csv(map, &path)?;
        written.push(path);
    }
    if matches!(format, RenderFormat::Svg | RenderFormat::Both) {
        let path = out_dir.join("sensitivity.svg");
        write_svg(map, scene, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// One row per coordinate: `agent,timestep,axis,sensitivity`.
pub fn write_csv(map: &SensitivityMap, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for (i, &v) in map.values.iter().enumerate() {
        let (agent, timestep, axis) = map.layout.position(i);
        w.serialize(CsvRow {
            agent,
            timestep,
            axis,
            sensitivity: v,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses a file written by [`write_csv`] back into a map.
pub fn read_csv(path: &Path) -> Result<SensitivityMap> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: CsvRow = row?;
        rows.push(row);
    }
    let n_agents = rows.iter().map(|r| r.agent + 1).max().unwrap_or(0);
    let t_past = rows.iter().map(|r| r.timestep + 1).max().unwrap_or(0);
    let layout = Layout::new(n_agents, t_past);
    if rows.len() != layout.dim() {
        return Err(Error::invalid(format!(
            "{}: expected {} rows for {} agents x {} steps x 2 axes, found {}",
            path.display(),
            layout.dim(),
            n_agents,
            t_past,
            rows.len()
        )));
    }
    let mut values = vec![f64::NAN; layout.dim()];
    for r in rows {
        values[layout.index(r.agent, r.timestep, r.axis)] = r.sensitivity;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(format!("{}: duplicate coordinate rows", path.display())));
    }
    SensitivityMap::from_values(layout, values)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn heat(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = 255.0;
    let g = 255.0 * (1.0 - v);
    let b = 255.0 * (1.0 - v);
    format!("rgb({},{},{})", r as u8, g.round() as u8, b.round() as u8)
}

/// Past paths with per-step arrows whose width and opacity follow the
/// step's sensitivity, and a heatmap inset of the three top-scoring paths.
pub fn write_svg(map: &SensitivityMap, scene: &ScenePast, path: &Path) -> Result<()> {
    std::fs::write(path, svg(map, scene)).map_err(|e| Error::io(path, e))
}

pub(crate) fn svg(map: &SensitivityMap, scene: &ScenePast) -> String {
    let points: Vec<[f64; 2]> = (0..scene.n_agents()).flat_map(|a| scene.path(a).points().to_vec()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (WIDTH.min(HEIGHT) - 2.0 * MARGIN) / span;
    let project = |p: [f64; 2]| (MARGIN + (p[0] - x0) * scale, HEIGHT - MARGIN - (p[1] - y0) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    s.push_str(
        r#"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="4" markerHeight="4" orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 z" fill="context-stroke"/></marker></defs>"#,
    );
    s.push('\n');
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for agent in 0..scene.n_agents() {
        let color = PALETTE[agent % PALETTE.len()];
        let pts = scene.path(agent).points();
        let _ = writeln!(s, r#"<g class="agent" data-agent="{agent}">"#);
        for t in 0..pts.len().saturating_sub(1) {
            let (ax, ay) = project(pts[t]);
            let (bx, by) = project(pts[t + 1]);
            let sens = map.per_step[agent][t + 1];
            let _ = writeln!(
                s,
                r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="{color}" stroke-width="{:.2}" stroke-opacity="{:.3}" marker-end="url(#head)"><title>agent {agent} step {} sensitivity {sens:.4}</title></line>"#,
                1.0 + 7.0 * sens,
                0.25 + 0.75 * sens,
                t + 1
            );
        }
        for (t, &p) in pts.iter().enumerate() {
            let (px, py) = project(p);
            let sens = map.per_step[agent][t];
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="{:.2}" fill="{color}"/>"#,
                2.0 + 4.0 * sens
            );
        }
        let label = if agent == 0 { "target".to_string() } else { format!("neighbor {agent}") };
        let (lx, ly) = project(pts[0]);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{label}</text></g>"#, lx + 4.0, ly - 6.0);
    }

    let top = map.top_paths(3);
    let cell = 14.0;
    let inset_w = 90.0 + cell * map.layout.t_past as f64;
    let ix = WIDTH - inset_w - 10.0;
    let iy = 10.0;
    let _ = writeln!(
        s,
        r##"<g class="heatmap"><rect x="{ix:.1}" y="{iy:.1}" width="{inset_w:.1}" height="{:.1}" fill="white" stroke="#888"/>"##,
        24.0 + cell * top.len() as f64
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10">top paths (sum)</text>"#, ix + 4.0, iy + 12.0);
    for (row, p) in top.iter().enumerate() {
        let y = iy + 18.0 + cell * row as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">a{} {:.3}</text>"#,
            ix + 4.0,
            y + cell - 3.0,
            p.agent,
            p.sum
        );
        for (t, &v) in map.per_step[p.agent].iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{}"/>"#,
                ix + 84.0 + cell * t as f64,
                heat(v)
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}
