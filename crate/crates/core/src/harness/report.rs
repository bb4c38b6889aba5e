//! CSV tables and standalone SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ResultRow, ResultTable};
use crate::binio::write_atomic;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,x,accuracy,n,config_hash";

pub fn write_csv(table: &ResultTable) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Protocol(e.to_string()))?;
    for r in &table.rows {
        w.serialize(r).map_err(|e| Error::Protocol(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Protocol(e.to_string()))
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::format(0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::format(0, format!("unexpected header {}", header.join(","))));
    }
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let offset = e.position().map_or(0, |p| p.byte());
                Error::format(offset, e.to_string())
            })
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Accuracy-versus-x line chart, one polyline per method. Output depends only
/// on the table contents.
pub fn render_svg(table: &ResultTable) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 180.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let xs: Vec<f64> = table.rows.iter().map(|r| r.x).collect();
    let mut x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if x_hi - x_lo < 1e-9 {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| top + (1.0 - y) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(&table.name));
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"##,
            left + pw,
            left - 6.0,
            py + 4.0
        );
    }
    for k in 0..=5 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#000000"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{x:.2}</text>"##,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 15.0, escape(&table.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, method) in table.methods().iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = table
            .series(method)
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        }
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap();
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(method)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<name>.csv` and, for non-empty tables, `<name>.svg` per table.
/// Returns the written paths in order.
pub fn emit_report(tables: &[ResultTable], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for t in tables {
        let csv_path = out_dir.join(format!("{}.csv", t.name));
        write_atomic(&csv_path, &write_csv(t)?)?;
        written.push(csv_path);
        if t.rows.is_empty() {
            log::warn!("table {} is empty; wrote header only and no plot", t.name);
            continue;
        }
        let svg_path = out_dir.join(format!("{}.svg", t.name));
        write_atomic(&svg_path, render_svg(t).as_bytes())?;
        written.push(svg_path);
    }
    Ok(written)
}
