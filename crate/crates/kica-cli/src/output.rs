//! CSV, SVG, and manifest emission.
//!
//! CSV files follow RFC 4180 (CRLF line endings); floats use the shortest
//! round-trip representation, so re-running a command byte-reproduces its
//! outputs. SVGs are self-contained 1.1 documents: heatmaps as rect grids,
//! line charts as polylines.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &str) -> std::io::Result<Self> {
        let root = PathBuf::from(root);
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// Manifest with the resolved config, its hash, and tool version. A run
    /// is re-launchable from the manifest alone.
    pub fn write_manifest(
        &self,
        command: &str,
        config: &serde_json::Value,
    ) -> std::io::Result<PathBuf> {
        let config_text = serde_json::to_string_pretty(config).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        let hash = hex_string(&hasher.finalize());
        let manifest = serde_json::json!({
            "command": command,
            "config_sha256": hash,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": std::env::var("KICA_THREADS").ok(),
            "config": config,
        });
        let path = self.path("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
        Ok(path)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf == "-0.0" {
        buf = "0.0".into();
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // csv's float formatting is ryu-based; match it through serde_json
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

/// Map a unit value to a dark-blue -> yellow ramp.
fn color_ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t.powf(0.7)) as u8;
    let g = (255.0 * (0.2 + 0.75 * t)) as u8;
    let b = (255.0 * (0.55 * (1.0 - t) + 0.1)) as u8;
    (r, g, b)
}

/// Heatmap over a value grid; rows map to the y axis (first axis values),
/// columns to the x axis.
pub fn svg_heatmap(
    title: &str,
    x_values: &[f64],
    y_values: &[f64],
    grid: &DMatrix<f64>,
) -> String {
    let cell = 18.0;
    let margin = 55.0;
    let width = margin * 2.0 + cell * grid.ncols() as f64 + 30.0;
    let height = margin * 2.0 + cell * grid.nrows() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in grid.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = (hi - lo).max(1e-300);

    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="20" font-family="monospace" font-size="13">{}</text>"#,
        margin, title
    );
    for i in 0..grid.nrows() {
        for j in 0..grid.ncols() {
            let t = (grid[(i, j)] - lo) / span;
            let (r, g, b) = color_ramp(t);
            let x = margin + cell * j as f64;
            let y = margin + cell * (grid.nrows() - 1 - i) as f64;
            let _ = write!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({r},{g},{b})"/>"#
            );
        }
    }
    // axis tick labels on the corners and centers
    let ticks = |vals: &[f64]| -> Vec<(usize, f64)> {
        let mut t = vec![(0usize, vals[0])];
        if vals.len() > 2 {
            t.push((vals.len() / 2, vals[vals.len() / 2]));
        }
        if vals.len() > 1 {
            t.push((vals.len() - 1, vals[vals.len() - 1]));
        }
        t
    };
    for (j, v) in ticks(x_values) {
        let x = margin + cell * (j as f64 + 0.5);
        let y = margin + cell * y_values.len() as f64 + 16.0;
        let _ = write!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="monospace" font-size="10" text-anchor="middle">{v:.3}</text>"#
        );
    }
    for (i, v) in ticks(y_values) {
        let x = margin - 6.0;
        let y = margin + cell * (y_values.len() - 1 - i) as f64 + cell * 0.5 + 3.0;
        let _ = write!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="monospace" font-size="10" text-anchor="end">{v:.3}</text>"#
        );
    }
    // colorbar
    let bar_x = margin + cell * grid.ncols() as f64 + 10.0;
    let bar_h = cell * grid.nrows() as f64;
    for step in 0..32 {
        let t = step as f64 / 31.0;
        let (r, g, b) = color_ramp(t);
        let y = margin + bar_h * (1.0 - t) - bar_h / 32.0;
        let _ = write!(
            s,
            r#"<rect x="{bar_x:.1}" y="{y:.1}" width="10" height="{:.1}" fill="rgb({r},{g},{b})"/>"#,
            bar_h / 32.0 + 0.5
        );
    }
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="9">{hi:.3}</text>"#,
        bar_x + 12.0,
        margin + 4.0
    );
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="9">{lo:.3}</text>"#,
        bar_x + 12.0,
        margin + bar_h
    );
    s.push_str("</svg>");
    s
}

/// Line chart with one polyline per named series.
pub fn svg_lines(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_x: bool,
    log_y: bool,
) -> String {
    let width = 520.0;
    let height = 360.0;
    let margin = 60.0;
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (_, pts) in series {
        for &(x, y) in pts {
            if (!log_x || x > 0.0) && (!log_y || y > 0.0) {
                xs.push(tx(x));
                ys.push(ty(y));
            }
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |x: f64| margin + (x - x_lo) / (x_hi - x_lo).max(1e-300) * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y - y_lo) / (y_hi - y_lo).max(1e-300) * (height - 2.0 * margin);

    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = write!(
        s,
        r#"<text x="{margin:.0}" y="22" font-family="monospace" font-size="13">{title}</text>"#
    );
    // frame and ticks
    let _ = write!(
        s,
        r#"<rect x="{margin:.0}" y="{margin:.0}" width="{:.0}" height="{:.0}" fill="none" stroke="black" stroke-width="1"/>"#,
        width - 2.0 * margin,
        height - 2.0 * margin
    );
    for frac in [0.0, 0.5, 1.0] {
        let xv = x_lo + frac * (x_hi - x_lo);
        let yv = y_lo + frac * (y_hi - y_lo);
        let xl = if log_x { format!("{:.3e}", 10f64.powf(xv)) } else { format!("{xv:.3}") };
        let yl = if log_y { format!("{:.3e}", 10f64.powf(yv)) } else { format!("{yv:.3}") };
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="9" text-anchor="middle">{xl}</text>"#,
            px(xv),
            height - margin + 14.0
        );
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="9" text-anchor="end">{yl}</text>"#,
            margin - 5.0,
            py(yv) + 3.0
        );
    }
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="middle">{x_label}</text>"#,
        width / 2.0,
        height - 12.0
    );
    let _ = write!(
        s,
        r#"<text x="14" y="{:.1}" font-family="monospace" font-size="11" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
        height / 2.0,
        height / 2.0
    );

    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = palette[idx % palette.len()];
        let mut path = String::new();
        for &(x, y) in pts {
            if (log_x && x <= 0.0) || (log_y && y <= 0.0) {
                continue;
            }
            let _ = write!(path, "{:.2},{:.2} ", px(tx(x)), py(ty(y)));
        }
        let _ = write!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="10" fill="{color}">{name}</text>"#,
            width - margin + 4.0,
            margin + 14.0 * idx as f64 + 10.0
        );
    }
    s.push_str("</svg>");
    s
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Rows of a matrix as CSV strings.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect())
        .collect()
}
