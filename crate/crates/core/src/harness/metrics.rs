//! Evaluation rows persisted as CSV, one line appended per evaluation point.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,raw_return,zeroed_return,mean_du,in_dist_frac,kl_to_org,seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub raw_return: f64,
    /// Return with the rewards of out-of-distribution steps set to zero.
    pub zeroed_return: f64,
    /// Absent while the tracker has no maxima yet.
    pub mean_du: Option<f64>,
    pub in_dist_frac: f64,
    /// Retraining only; absent when no in-distribution state was visited.
    pub kl_to_org: Option<f64>,
    pub seconds: f64,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Argument(format!("malformed metrics: {other:?}")),
    }
}

/// Append-only writer; the header goes out on creation and every row is
/// flushed immediately so an aborted run keeps its partial curve.
pub struct MetricsWriter {
    writer: csv::Writer<File>,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
        writer.write_record(METRICS_HEADER.split(',')).map_err(csv_error)?;
        writer.flush()?;
        Ok(MetricsWriter { writer, last_step: None })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.step <= s) {
            return Err(Error::Argument(format!("metrics step {} is not increasing", row.step)));
        }
        self.writer.serialize(row).map_err(csv_error)?;
        self.writer.flush()?;
        self.last_step = Some(row.step);
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(Error::Argument(format!("{} lacks the metrics header", path.display())));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}
