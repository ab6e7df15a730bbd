//! Dataset ingestion and report persistence.
//!
//! Datasets are JSONL, one prompt record per line. Reports are UTF-8 CSV
//! with a header row, LF line endings, and `.` as the decimal separator;
//! floats are written in Rust's shortest round-trip form. Every emitted
//! file is a deterministic function of its inputs.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use pvar_core::model::{PVarEstimate, PreferencePair, PromptRecord, SelectionManifest};
use pvar_core::sweep::TheoremSweepRow;
use pvar_core::toydpo::TrainTrace;

/// Errors crossing the filesystem boundary.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no valid records in {path} ({malformed_lines} malformed lines)")]
    EmptyDataset {
        path: String,
        malformed_lines: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed document {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] pvar_core::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A line that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineViolation {
    pub line: usize,
    pub message: String,
}

/// Parsed dataset plus per-line violations, both in file order.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<PromptRecord>,
    pub violations: Vec<LineViolation>,
}

/// Read a JSONL dataset. Malformed lines are reported with their line
/// numbers and never abort the run, unless no line parses at all.
pub fn ingest(path: &Path) -> IoResult<IngestOutcome> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut outcome = IngestOutcome::default();
    for (number, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PromptRecord>(&line) {
            Ok(record) => outcome.records.push(record),
            Err(err) => outcome.violations.push(LineViolation {
                line: number + 1,
                message: err.to_string(),
            }),
        }
    }
    if outcome.records.is_empty() {
        return Err(IoError::EmptyDataset {
            path: path.display().to_string(),
            malformed_lines: outcome.violations.len(),
        });
    }
    Ok(outcome)
}

fn write_jsonl<T: serde::Serialize>(items: &[T], what: &str, path: &Path) -> IoResult<()> {
    if items.is_empty() {
        return Err(IoError::InvalidInput(format!("refusing to write 0 {what}")));
    }
    let mut body = String::new();
    for item in items {
        let line =
            serde_json::to_string(item).expect("serialization of plain data types cannot fail");
        body.push_str(&line);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Write records back out as JSONL; `ingest` of the result yields equal
/// records.
pub fn emit_records(records: &[PromptRecord], path: &Path) -> IoResult<()> {
    write_jsonl(records, "records", path)
}

/// Write per-prompt estimates as JSONL.
pub fn emit_estimates(estimates: &[PVarEstimate], path: &Path) -> IoResult<()> {
    write_jsonl(estimates, "estimates", path)
}

/// Read estimates back from JSONL (the `estimate` command's output).
pub fn read_estimates(path: &Path) -> IoResult<Vec<PVarEstimate>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut estimates = Vec::new();
    for (number, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let estimate: PVarEstimate =
            serde_json::from_str(&line).map_err(|source| IoError::Malformed {
                path: format!("{}:{}", path.display(), number + 1),
                source,
            })?;
        estimates.push(estimate);
    }
    if estimates.is_empty() {
        return Err(IoError::EmptyDataset {
            path: path.display().to_string(),
            malformed_lines: 0,
        });
    }
    Ok(estimates)
}

/// Write chosen/rejected pairs as JSONL.
pub fn emit_pairs(pairs: &[PreferencePair], path: &Path) -> IoResult<()> {
    write_jsonl(pairs, "pairs", path)
}

/// Persist a selection manifest as a self-describing JSON document.
/// Rejects empty selections; writing and re-reading yields an equal value,
/// and identical inputs yield byte-identical files.
pub fn emit_manifest(manifest: &SelectionManifest, path: &Path) -> IoResult<()> {
    if manifest.selected.is_empty() {
        return Err(IoError::InvalidInput(
            "refusing to write a manifest with no selected prompts".to_string(),
        ));
    }
    let mut body =
        serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    body.push('\n');
    fs::write(path, body).map_err(|e| io_err(path, e))
}

pub fn read_manifest(path: &Path) -> IoResult<SelectionManifest> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&body).map_err(|source| IoError::Malformed {
        path: path.display().to_string(),
        source,
    })
}

/// Number of histogram bins over the PVar range [0, 0.25].
pub const HISTOGRAM_BINS: usize = 25;

/// CSV histogram of estimated PVar: 25 equal-width bins over [0, 0.25],
/// columns `bin,lower,upper,count`. The top edge lands in the last bin.
pub fn emit_pvar_histogram(estimates: &[PVarEstimate], path: &Path) -> IoResult<()> {
    if estimates.is_empty() {
        return Err(IoError::InvalidInput(
            "refusing to write a histogram of 0 estimates".to_string(),
        ));
    }
    let mut counts = [0usize; HISTOGRAM_BINS];
    for estimate in estimates {
        let bin = ((estimate.pvar * 100.0).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let mut body = String::from("bin,lower,upper,count\n");
    for (bin, count) in counts.iter().enumerate() {
        let lower = bin as f64 / 100.0;
        let upper = (bin + 1) as f64 / 100.0;
        writeln!(body, "{bin},{lower},{upper},{count}").expect("string write cannot fail");
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// CSV training trace, columns `step,loss,margin,grad_norm`.
pub fn emit_train_trace(trace: &TrainTrace, path: &Path) -> IoResult<()> {
    if trace.steps.is_empty() {
        return Err(IoError::InvalidInput(
            "refusing to write an empty training trace".to_string(),
        ));
    }
    let mut body = String::from("step,loss,margin,grad_norm\n");
    for row in &trace.steps {
        writeln!(
            body,
            "{},{},{},{}",
            row.step, row.loss, row.margin, row.grad_norm
        )
        .expect("string write cannot fail");
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// CSV bound sweep, columns `seed,grad_norm,pvar,bound,slack,holds`.
pub fn emit_bound_sweep(rows: &[TheoremSweepRow], path: &Path) -> IoResult<()> {
    if rows.is_empty() {
        return Err(IoError::InvalidInput(
            "refusing to write an empty bound sweep".to_string(),
        ));
    }
    let mut body = String::from("seed,grad_norm,pvar,bound,slack,holds\n");
    for row in rows {
        writeln!(
            body,
            "{},{},{},{},{},{}",
            row.seed,
            row.check.grad_norm,
            row.check.pvar,
            row.check.bound_value,
            row.check.slack,
            row.check.holds
        )
        .expect("string write cannot fail");
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}
