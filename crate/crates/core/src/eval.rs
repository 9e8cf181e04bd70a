//! Evaluation metrics and result reporting: raw MSE per (dataset, scaler,
//! model), group-max normalization, and CSV/SVG emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::basis::SignalMatrix;
use crate::error::{Error, Result};

/// Mean over all entries of the squared difference.
pub fn mse(predicted: &SignalMatrix, target: &SignalMatrix) -> Result<f64> {
    if predicted.rows() != target.rows() || predicted.cols() != target.cols() {
        return Err(Error::dims(
            "mse",
            format!("{}x{}", target.rows(), target.cols()),
            format!("{}x{}", predicted.rows(), predicted.cols()),
        ));
    }
    if predicted.rows() == 0 || predicted.cols() == 0 {
        return Err(Error::InvalidArgument("mse of an empty matrix".into()));
    }
    let n = (predicted.rows() * predicted.cols()) as f64;
    Ok(predicted
        .array()
        .iter()
        .zip(target.array().iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// One evaluation measurement before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResult {
    pub dataset: String,
    pub scaler: String,
    pub model: String,
    pub mse: f64,
}

/// A measurement with its group-normalized value attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub scaler: String,
    pub model: String,
    pub raw_mse: f64,
    pub normalized_mse: f64,
    /// Largest raw MSE in this row's (dataset, scaler) group; 0 marks a
    /// degenerate all-perfect group whose normalized values are defined as 0.
    pub group_max: f64,
}

/// Results keyed by (dataset, scaler, model), in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    /// Groups whose maximum raw MSE is zero: every model was exact, so the
    /// normalized values carry no information.
    pub fn degenerate_groups(&self) -> Vec<(String, String)> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if row.group_max == 0.0 {
                let key = (row.dataset.clone(), row.scaler.clone());
                if !seen.contains(&key) {
                    seen.push(key);
                }
            }
        }
        seen
    }

    /// Writes `results.csv`-style output: a fixed header, one row per entry
    /// in insertion order, floats at 17 significant digits so values
    /// round-trip exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("dataset,scaler,model,raw_mse,normalized_mse,group_max\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e}",
                row.dataset, row.scaler, row.model, row.raw_mse, row.normalized_mse, row.group_max
            )
            .expect("string writes cannot fail");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads the raw measurements back out of a written CSV, for merging
    /// tables across experiments.
    pub fn read_raw_csv(path: &Path) -> Result<Vec<RawResult>> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty results file"))?;
        let columns: Vec<&str> = header.split(',').collect();
        let col = |name: &str| -> Result<usize> {
            columns
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::format(path, format!("missing column {name}")))
        };
        let (di, si, mi, vi) = (col("dataset")?, col("scaler")?, col("model")?, col("raw_mse")?);
        let mut raw = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::format(
                    path,
                    format!("row {}: {} fields, expected {}", lineno + 2, fields.len(), columns.len()),
                ));
            }
            let mse: f64 = fields[vi].parse().map_err(|_| {
                Error::format(path, format!("row {}: bad raw_mse {:?}", lineno + 2, fields[vi]))
            })?;
            raw.push(RawResult {
                dataset: fields[di].to_string(),
                scaler: fields[si].to_string(),
                model: fields[mi].to_string(),
                mse,
            });
        }
        Ok(raw)
    }
}

/// Divides each measurement by the largest raw MSE in its (dataset, scaler)
/// group, mapping every group onto [0, 1] with the worst model at exactly 1.
/// A group whose max is zero has all normalized values defined as 0 and is
/// reported through [`ResultTable::degenerate_groups`].
pub fn normalize_groups(raw: &[RawResult]) -> Result<ResultTable> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("no results to normalize".into()));
    }
    for r in raw {
        if !r.mse.is_finite() || r.mse < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bad MSE {} for ({}, {}, {})",
                r.mse, r.dataset, r.scaler, r.model
            )));
        }
    }
    let group_max = |dataset: &str, scaler: &str| -> f64 {
        raw.iter()
            .filter(|r| r.dataset == dataset && r.scaler == scaler)
            .fold(0f64, |m, r| m.max(r.mse))
    };
    let rows = raw
        .iter()
        .map(|r| {
            let max = group_max(&r.dataset, &r.scaler);
            ResultRow {
                dataset: r.dataset.clone(),
                scaler: r.scaler.clone(),
                model: r.model.clone(),
                raw_mse: r.mse,
                normalized_mse: if max > 0.0 { r.mse / max } else { 0.0 },
                group_max: max,
            }
        })
        .collect();
    Ok(ResultTable { rows })
}

fn bar_color(model: &str) -> &'static str {
    if model.starts_with("ppo") {
        "#4878a8"
    } else if model.starts_with("dae") {
        "#a85448"
    } else {
        "#6aa84f"
    }
}

fn svg_group_chart(dataset: &str, scaler: &str, rows: &[&ResultRow]) -> String {
    let bar_w = 48;
    let gap = 22;
    let left = 50;
    let plot_h = 220;
    let top = 40;
    let width = left + rows.len() * (bar_w + gap) + 30;
    let height = top + plot_h + 50;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">normalized MSE — dataset: {dataset}, scaler: {scaler}</text>"
    );
    // Axis with 0, 0.5, 1 ticks.
    let axis_bottom = top + plot_h;
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{axis_bottom}\" stroke=\"black\"/>"
    );
    for (frac, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let y = axis_bottom - (frac * plot_h as f64) as usize;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>",
            left - 5
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{label}</text>",
            left - 8,
            y + 4
        );
    }
    for (i, row) in rows.iter().enumerate() {
        let x = left + 10 + i * (bar_w + gap);
        let h = (row.normalized_mse * plot_h as f64).round() as usize;
        let y = axis_bottom - h;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"{}\"/>",
            bar_color(&row.model)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>",
            x + bar_w / 2,
            y.saturating_sub(5).max(12),
            row.normalized_mse
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            x + bar_w / 2,
            axis_bottom + 18,
            row.model
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `results.csv` plus one grouped-bar SVG per (dataset, scaler) group
/// into `out_dir`. Returns the paths written.
pub fn emit_report(table: &ResultTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows().is_empty() {
        return Err(Error::InvalidArgument("empty result table".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("results.csv");
    table.write_csv(&csv_path)?;
    written.push(csv_path);

    let mut groups: Vec<(String, String)> = Vec::new();
    for row in table.rows() {
        let key = (row.dataset.clone(), row.scaler.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (dataset, scaler) in groups {
        let rows: Vec<&ResultRow> = table
            .rows()
            .iter()
            .filter(|r| r.dataset == dataset && r.scaler == scaler)
            .collect();
        let svg = svg_group_chart(&dataset, &scaler, &rows);
        let path = out_dir.join(format!("chart_{dataset}_{scaler}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
