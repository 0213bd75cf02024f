//! SVG heatmaps and bar charts of calibration results, with their data as CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vacalib_core::calibration::{CalibBlock, CalibResult};
use vacalib_core::normalize_label;

use crate::error::{CliError, Result};
use crate::input::write_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotMode {
    Missmat,
    Csmf,
    Both,
}

impl FromStr for PlotMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "missmat" => Ok(PlotMode::Missmat),
            "csmf" => Ok(PlotMode::Csmf),
            "both" => Ok(PlotMode::Both),
            other => Err(format!("unknown plot mode `{other}` (expected missmat, csmf or both)")),
        }
    }
}

impl PlotMode {
    fn missmat(self) -> bool {
        self != PlotMode::Csmf
    }

    fn csmf(self) -> bool {
        self != PlotMode::Missmat
    }
}

/// Mean matrix used for a block on the full cause set; `None` marks causes
/// left uncalibrated. The ensemble shows the average over its algorithms.
pub fn block_matrix(block: &CalibBlock) -> Vec<Vec<Option<f64>>> {
    let c = block.donotcalib.len();
    let active: Vec<usize> = (0..c).filter(|&j| !block.donotcalib[j]).collect();
    let mut out = vec![vec![None; c]; c];
    if block.missmat_used.is_empty() {
        return out;
    }
    let k = block.missmat_used.len() as f64;
    for spec in block.missmat_used.values() {
        let m = spec.mean_matrix();
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                *out[i][j].get_or_insert(0.0) += m.get(a, b) / k;
            }
        }
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn blue(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let mix = |lo: f64, hi: f64| (lo + (hi - lo) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(247.0, 8.0), mix(251.0, 69.0), mix(255.0, 148.0))
}

pub fn heatmap_svg(title: &str, labels: &[String], m: &[Vec<Option<f64>>]) -> String {
    let c = labels.len();
    let (cell, left, top) = (56.0, 190.0, 190.0);
    let size = cell * c as f64;
    let (w, h) = (left + size + 20.0, top + size + 60.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, esc(title));
    for (j, l) in labels.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(s, r#"<text transform="translate({x},{}) rotate(-60)">{}</text>"#, top - 8.0, esc(l));
    }
    for (i, l) in labels.iter().enumerate() {
        let y = top + cell * (i as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#, left - 8.0, esc(l));
        for j in 0..c {
            let x = left + cell * j as f64;
            let yy = top + cell * i as f64;
            match m[i][j] {
                Some(v) => {
                    let ink = if v > 0.5 { "white" } else { "black" };
                    let _ = writeln!(s, r#"<rect x="{x}" y="{yy}" width="{cell}" height="{cell}" fill="{}" stroke="white"/>"#, blue(v));
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="{ink}" class="value">{v:.2}</text>"#,
                        x + cell / 2.0,
                        yy + cell / 2.0
                    );
                }
                None => {
                    let _ = writeln!(s, r##"<rect x="{x}" y="{yy}" width="{cell}" height="{cell}" fill="#cccccc" stroke="white" class="uncalibrated"/>"##);
                }
            }
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">assigned cause (columns) by true cause (rows)</text>"#, left + size / 2.0, top + size + 30.0);
    s.push_str("</svg>\n");
    s
}

pub fn csmf_svg(title: &str, labels: &[String], block: &CalibBlock) -> String {
    let c = labels.len();
    let (group, left, top, plot_h) = (70.0, 60.0, 50.0, 300.0);
    let w = left + group * c as f64 + 20.0;
    let h = top + plot_h + 170.0;
    let max = block
        .p_uncalib
        .iter()
        .chain(&block.p_calib.upper)
        .fold(0.0f64, |a, b| a.max(*b))
        .max(0.05)
        * 1.1;
    let y = |v: f64| top + plot_h * (1.0 - v / max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, top + plot_h, w - 20.0);
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{v:.2}</text>"#, left - 6.0, y(v));
    }
    let bar = 24.0;
    for j in 0..c {
        let x0 = left + group * j as f64 + 8.0;
        let u = block.p_uncalib[j];
        let m = block.p_calib.mean[j];
        let _ = writeln!(s, r##"<rect x="{x0}" y="{}" width="{bar}" height="{}" fill="#9e9e9e" class="uncalibrated"/>"##, y(u), y(0.0) - y(u));
        let x1 = x0 + bar + 2.0;
        let _ = writeln!(s, r##"<rect x="{x1}" y="{}" width="{bar}" height="{}" fill="#2b6cb0" class="calibrated"/>"##, y(m), y(0.0) - y(m));
        let xc = x1 + bar / 2.0;
        let (lo, hi) = (block.p_calib.lower[j], block.p_calib.upper[j]);
        let _ = writeln!(s, r#"<line x1="{xc}" y1="{}" x2="{xc}" y2="{}" stroke="black"/>"#, y(lo), y(hi));
        for v in [lo, hi] {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#, xc - 5.0, y(v), xc + 5.0);
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate({},{}) rotate(-50)" text-anchor="end">{}</text>"#,
            x0 + bar,
            top + plot_h + 14.0,
            esc(&labels[j])
        );
    }
    let ly = h - 20.0;
    let _ = writeln!(s, r##"<rect x="{left}" y="{}" width="12" height="12" fill="#9e9e9e"/><text x="{}" y="{ly}">uncalibrated</text>"##, ly - 10.0, left + 16.0);
    let _ = writeln!(s, r##"<rect x="{}" y="{}" width="12" height="12" fill="#2b6cb0"/><text x="{}" y="{ly}">calibrated (95% interval)</text>"##, left + 120.0, ly - 10.0, left + 136.0);
    s.push_str("</svg>\n");
    s
}

/// One row per plotted value: `panel,row,column,value,lower,upper`.
pub fn plot_data_csv(labels: &[String], block: &CalibBlock, mode: PlotMode) -> String {
    let q = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut s = String::from("panel,row,column,value,lower,upper\n");
    if mode.missmat() {
        let m = block_matrix(block);
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                let v = m[i][j].map_or("NA".to_string(), |v| v.to_string());
                let _ = writeln!(s, "missmat,{},{},{v},,", q(li), q(lj));
            }
        }
    }
    if mode.csmf() {
        for (j, l) in labels.iter().enumerate() {
            let _ = writeln!(s, "csmf_uncalib,{},,{},,", q(l), block.p_uncalib[j]);
        }
        for (j, l) in labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "csmf_calib,{},,{},{},{}",
                q(l),
                block.p_calib.mean[j],
                block.p_calib.lower[j],
                block.p_calib.upper[j]
            );
        }
    }
    s
}

/// File stem of a block's plots.
pub fn plot_stem(block: &CalibBlock) -> String {
    let n = normalize_label(&block.name);
    if n.is_empty() {
        "block".into()
    } else {
        n
    }
}

/// Writes plots for every algorithm and the ensemble; returns the files written.
pub fn emit_plot(result: &CalibResult, mode: PlotMode, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let labels = result.causes.labels().to_vec();
    let mut written = Vec::new();
    for block in result.blocks() {
        let stem = plot_stem(block);
        if mode.missmat() {
            let p = out_dir.join(format!("{stem}_missmat.svg"));
            let title = format!("Misclassification matrix used: {}", block.name);
            write_text(&p, &heatmap_svg(&title, &labels, &block_matrix(block)))?;
            written.push(p);
        }
        if mode.csmf() {
            let p = out_dir.join(format!("{stem}_csmf.svg"));
            let title = format!("Uncalibrated and calibrated CSMF: {}", block.name);
            write_text(&p, &csmf_svg(&title, &labels, block))?;
            written.push(p);
        }
        let p = out_dir.join(format!("{stem}_plot_data.csv"));
        write_text(&p, &plot_data_csv(&labels, block, mode))?;
        written.push(p);
    }
    Ok(written)
}
