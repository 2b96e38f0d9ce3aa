//! Comparison tables over finished run directories.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::ValueEnum;
use kgreplay::continual::ExperimentReport;
use kgreplay::util::{mean, std_dev};

use crate::commands::read_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Mean and population std over seeds, recomputed from per-seed values.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub run: String,
    pub approach: String,
    pub seeds: usize,
    /// A, AUC, F_A, F_AUC as (mean, std); `None` when undefined.
    pub cells: [Option<(f64, f64)>; 4],
}

pub const COLUMNS: [&str; 4] = ["A", "AUC", "F_A", "F_AUC"];

fn stats(values: Option<Vec<f64>>) -> Option<(f64, f64)> {
    values.map(|v| (mean(&v), std_dev(&v)))
}

pub fn row_from_report(run: &str, report: &ExperimentReport) -> Row {
    let s = &report.per_seed;
    Row {
        run: run.to_string(),
        approach: report.approach.to_string(),
        seeds: s.len(),
        cells: [
            stats(Some(s.iter().map(|r| r.final_accuracy).collect())),
            stats(Some(s.iter().map(|r| r.final_auc).collect())),
            stats(s.iter().map(|r| r.forgetting_accuracy.aggregate).collect()),
            stats(s.iter().map(|r| r.forgetting_auc.aggregate).collect()),
        ],
    }
}

pub fn load_rows(dirs: &[PathBuf]) -> Result<Vec<Row>> {
    if dirs.is_empty() {
        bail!("pass at least one run directory");
    }
    dirs.iter()
        .map(|dir| {
            let report: ExperimentReport = read_json(&dir.join("report.json"))?;
            Ok(row_from_report(&run_name(dir), &report))
        })
        .collect()
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Percentage with one decimal, as `mean ± std`.
pub fn format_cell(cell: Option<(f64, f64)>) -> String {
    match cell {
        Some((m, s)) => format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * s),
        None => "n/a".to_string(),
    }
}

pub fn render(rows: &[Row], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str("| Run | Approach | Seeds | A | AUC | F_A | F_AUC |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for r in rows {
                let cells: Vec<String> = r.cells.iter().map(|c| format_cell(*c)).collect();
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    r.run,
                    r.approach,
                    r.seeds,
                    cells.join(" | ")
                ));
            }
        }
        TableFormat::Csv => {
            let mut header = vec!["run".to_string(), "approach".into(), "seeds".into()];
            for c in COLUMNS {
                header.push(format!("{c}_mean"));
                header.push(format!("{c}_std"));
            }
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                let mut fields = vec![r.run.clone(), r.approach.clone(), r.seeds.to_string()];
                for c in r.cells {
                    match c {
                        Some((m, s)) => {
                            fields.push(format!("{:.1}", 100.0 * m));
                            fields.push(format!("{:.1}", 100.0 * s));
                        }
                        None => fields.extend(["".to_string(), "".to_string()]),
                    }
                }
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
    }
    out
}
