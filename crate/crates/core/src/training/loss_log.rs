use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use crate::domain::ensure_parent;
use crate::error::{Error, Result};
use crate::losses::LossReport;

pub const LOG_FILE: &str = "train_log.csv";

pub const LOG_COLUMNS: [&str; 13] = [
    "iteration",
    "stage",
    "refinement",
    "adv_g1",
    "l1",
    "adv_g2",
    "perceptual",
    "style",
    "tv",
    "total_g1",
    "total_g2",
    "total_d1",
    "total_d2",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

/// Rows of a training log, in file order.
pub fn read_log(path: &Path) -> Result<Vec<LossReport>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(LOG_COLUMNS) {
        return Err(Error::Format(format!("{}: unexpected log header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// Appends one row per iteration, flushing each row so an interrupted run
/// leaves a readable log.
pub(crate) struct LogWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl LogWriter {
    /// Start a fresh log, or when resuming keep only the rows before
    /// `iteration` and append after them.
    pub(crate) fn open(path: &Path, iteration: u64, resume: bool) -> Result<Self> {
        ensure_parent(path)?;
        let kept = if resume && path.is_file() {
            read_log(path)?.into_iter().filter(|r| r.iteration < iteration).collect()
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(LOG_COLUMNS).map_err(csv_err(path))?;
        let mut w = Self {
            path: path.to_path_buf(),
            inner,
        };
        for r in &kept {
            w.write(r)?;
        }
        w.flush()?;
        Ok(w)
    }

    pub(crate) fn write(&mut self, r: &LossReport) -> Result<()> {
        self.inner.serialize(r).map_err(csv_err(&self.path))?;
        self.flush()
    }

    pub(crate) fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}
