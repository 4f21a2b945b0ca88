use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ConfusionMatrix;
use crate::{Error, LeaningLabel, Result, NUM_CLASSES};

/// Number of equal-width shading bins per row.
pub const NUM_BINS: usize = 5;

/// Shading bin (1..=5) of every cell, computed per row over the row's
/// own `[min, max]` range. A constant row puts every cell in the top bin.
pub fn row_bins(row: &[u64]) -> Vec<usize> {
    let min = row.iter().copied().min().unwrap_or(0);
    let max = row.iter().copied().max().unwrap_or(0);
    row.iter()
        .map(|&v| {
            if max == min {
                NUM_BINS
            } else {
                let frac = (v - min) as f64 / (max - min) as f64;
                ((frac * NUM_BINS as f64).floor() as usize + 1).min(NUM_BINS)
            }
        })
        .collect()
}

// Light to dark.
const SHADES: [&str; NUM_BINS] = ["#eff3ff", "#bdd7e7", "#6baed6", "#3182bd", "#08519c"];

pub fn to_svg(m: &ConfusionMatrix) -> String {
    let cell = 70;
    let left = 110;
    let top = 60;
    let size = cell * NUM_CLASSES;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        left + size + 20,
        top + size + 40
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">predicted</text>"#,
        left + size / 2
    )
    .unwrap();
    for (i, l) in LeaningLabel::ALL.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + i * cell + cell / 2,
            top - 10,
            l.as_str()
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 8,
            top + i * cell + cell / 2 + 4,
            l.as_str()
        )
        .unwrap();
    }
    for (i, row) in m.counts.iter().enumerate() {
        for (j, (&v, bin)) in row.iter().zip(row_bins(row)).enumerate() {
            let (x, y) = (left + j * cell, top + i * cell);
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#ffffff"/>"##,
                SHADES[bin - 1]
            )
            .unwrap();
            let ink = if bin >= 4 { "#ffffff" } else { "#000000" };
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v}</text>"#,
                x + cell / 2,
                y + cell / 2 + 4
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">true</text>"#,
        top + size / 2,
        top + size / 2
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Write `<path>.svg` and `<path>.csv`; returns both paths.
pub fn render_confusion(m: &ConfusionMatrix, path: &Path) -> Result<(PathBuf, PathBuf)> {
    if m.total() == 0 {
        return Err(Error::Empty("cannot render an empty confusion matrix".into()));
    }
    let svg = path.with_extension("svg");
    let csv = path.with_extension("csv");
    fs::write(&svg, to_svg(m)).map_err(|e| Error::io(&svg, e))?;
    fs::write(&csv, m.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok((svg, csv))
}
