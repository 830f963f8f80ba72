use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "cycle,labeled_count,test_accuracy,pseudo_count,pseudo_error_rate,disc_acc,vae_loss,seconds";

/// One row of the metrics CSV. Optional columns are written empty when absent.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub cycle: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub pseudo_count: usize,
    pub pseudo_error_rate: Option<f64>,
    pub disc_acc: Option<f64>,
    pub vae_loss: Option<f64>,
    pub seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders header plus one LF-terminated line per record.
pub fn format_metrics(records: &[MetricsRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.cycle,
            r.labeled_count,
            r.test_accuracy,
            r.pseudo_count,
            opt(r.pseudo_error_rate),
            opt(r.disc_acc),
            opt(r.vae_loss),
            r.seconds
        );
    }
    s
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if records.windows(2).any(|w| w[0].cycle >= w[1].cycle) {
        return Err(Error::Structural("metrics records must be ordered by cycle".into()));
    }
    std::fs::write(path, format_metrics(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics(text: &str, origin: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "{origin}: line 1: expected header `{METRICS_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(Error::Format(format!("{origin}: line {ln}: expected 8 columns, found {}", cells.len())));
        }
        let bad = |col: usize| Error::Format(format!("{origin}: line {ln}, column {}: `{}`", col + 1, cells[col]));
        let int = |col: usize| cells[col].parse::<usize>().map_err(|_| bad(col));
        let float = |col: usize| cells[col].parse::<f64>().map_err(|_| bad(col));
        let maybe = |col: usize| -> Result<Option<f64>> {
            if cells[col].is_empty() {
                Ok(None)
            } else {
                float(col).map(Some)
            }
        };
        out.push(MetricsRecord {
            cycle: int(0)?,
            labeled_count: int(1)?,
            test_accuracy: float(2)?,
            pseudo_count: int(3)?,
            pseudo_error_rate: maybe(4)?,
            disc_acc: maybe(5)?,
            vae_loss: maybe(6)?,
            seconds: float(7)?,
        });
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, &path.display().to_string())
}
