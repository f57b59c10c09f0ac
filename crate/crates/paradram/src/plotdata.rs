//! Plot-ready CSV tables extracted from a finished run's report.

use std::fmt::Write;

use crate::report::ParsedReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// verboseIndex, measure, chain
    Adaptation,
    /// adaptationIndex, i, j, value, chain
    Covariance,
    /// rank, count, fittedProbability
    Contributions,
    /// P, predictedSpeedup, observedSpeedup
    Scaling,
}

/// Picks `columns` out of report table `section`, in that order.
fn select(report: &ParsedReport, section: &str, columns: &[&str]) -> Result<Vec<Vec<String>>, String> {
    let (header, rows) = report.table(section).ok_or_else(|| format!("report has no [{section}] section"))?;
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| header.iter().position(|h| h == c).ok_or_else(|| format!("[{section}] lacks column {c}")))
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(format!("[{section}] is empty"));
    }
    Ok(rows.iter().map(|r| idx.iter().map(|&i| r.get(i).cloned().unwrap_or_default()).collect()).collect())
}

pub fn export(report: &ParsedReport, figure: Figure) -> Result<String, String> {
    let (columns, section, pick): (&[&str], &str, &[&str]) = match figure {
        Figure::Adaptation => (&["verboseIndex", "measure", "chain"], "adaptation", &["verboseIndex", "measure", "chain"]),
        Figure::Covariance => (
            &["adaptationIndex", "i", "j", "value", "chain"],
            "covariance",
            &["adaptationIndex", "i", "j", "value", "chain"],
        ),
        Figure::Contributions => {
            (&["rank", "count", "fittedProbability"], "contributions", &["rank", "count", "fittedProbability"])
        }
        Figure::Scaling => {
            (&["P", "predictedSpeedup", "observedSpeedup"], "speedup-table", &["P", "predictedSpeedup", "observedSpeedup"])
        }
    };
    let rows = select(report, section, pick)?;
    let mut out = columns.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    Ok(out)
}
