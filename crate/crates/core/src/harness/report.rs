use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentResult, MetricSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub table: PathBuf,
    pub curves: PathBuf,
}

#[derive(Serialize)]
struct TableRecord<'a> {
    method: &'a str,
    metric: &'a str,
    mean: f64,
    ci_low: f64,
    ci_high: f64,
    significant: bool,
    improved: bool,
    replicates: usize,
    failed: usize,
}

/// Writes `report.json` (everything), `comparison.csv` (one line per method
/// and metric) and `curves.csv` (per-group curves in both modes).
pub fn emit_report(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        report: dir.join("report.json"),
        table: dir.join("comparison.csv"),
        curves: dir.join("curves.csv"),
    };
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));

    serde_json::to_writer_pretty(create(&files.report)?, result)?;

    let mut w = csv::Writer::from_writer(create(&files.table)?);
    for row in &result.table.rows {
        for MetricSummary {
            metric,
            mean,
            ci,
            significant,
            improved,
        } in &row.metrics
        {
            w.serialize(TableRecord {
                method: row.method.name(),
                metric: metric.name(),
                mean: *mean,
                ci_low: ci.0,
                ci_high: ci.1,
                significant: *significant,
                improved: *improved,
                replicates: row.replicates,
                failed: row.failed,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&files.table, e))?;

    let mut w = csv::Writer::from_writer(create(&files.curves)?);
    for p in &result.curves {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(&files.curves, e))?;
    Ok(files)
}
