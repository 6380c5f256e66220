use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embeddings::ActivityEncoder;
use crate::error::Result;

/// Euclidean distances between target (rows) and source (columns)
/// activity vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major `[rows][cols]`.
    pub values: Vec<f64>,
}

pub fn embedding_distance_matrix<'a>(
    encoder: &ActivityEncoder,
    source_vocab: impl IntoIterator<Item = &'a String>,
    target_vocab: impl IntoIterator<Item = &'a String>,
) -> DistanceMatrix {
    let cols: Vec<String> = source_vocab.into_iter().cloned().collect();
    let rows: Vec<String> = target_vocab.into_iter().cloned().collect();
    let col_vecs: Vec<Vec<f64>> = cols.iter().map(|a| encoder.encode(a)).collect();
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for r in &rows {
        let rv = encoder.encode(r);
        for cv in &col_vecs {
            values.push(rv.iter().zip(cv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    DistanceMatrix { rows, cols, values }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl DistanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.len() + col]
    }

    /// Header row of source activities; each line starts with the target
    /// activity.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::from("target\\source")];
        header.extend(self.cols.iter().cloned());
        w.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = vec![r.clone()];
            line.extend((0..self.cols.len()).map(|j| format!("{:.4}", self.get(i, j))));
            w.write_record(&line)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output of UTF-8 input"))
    }

    /// Heatmap with labeled rows and columns; darker cells are closer.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 36;
        const CHAR_W: usize = 7;
        let left = 10 + CHAR_W * self.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
        let top = 10 + CHAR_W * self.cols.iter().map(|c| c.chars().count()).max().unwrap_or(0);
        let width = left + CELL * self.cols.len() + 10;
        let height = top + CELL * self.rows.len() + 10;
        let max = self.values.iter().copied().fold(0.0f64, f64::max);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        for (j, c) in self.cols.iter().enumerate() {
            let x = left + j * CELL + CELL / 2;
            let y = top - 6;
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
                xml_escape(c)
            );
        }
        for (i, r) in self.rows.iter().enumerate() {
            let y = top + i * CELL;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                left - 6,
                y + CELL / 2 + 4,
                xml_escape(r)
            );
            for j in 0..self.cols.len() {
                let d = self.get(i, j);
                let t = if max > 0.0 { d / max } else { 0.0 };
                let shade = (40.0 + 215.0 * t).round() as u8;
                let ink = if t < 0.5 { "white" } else { "black" };
                let x = left + j * CELL;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{} / {}: {d:.4}</title></rect>"#,
                    xml_escape(r),
                    xml_escape(&self.cols[j])
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}" font-size="9">{d:.2}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 3
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}
