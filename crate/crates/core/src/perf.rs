//! Solver performance data: run records, runtime matrices, PAR10 scores and
//! timeout truncation.
//!
//! Times are stored as integer milliseconds so that sums, comparisons and
//! tie-breaks are exact and reproducible.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PAR10 penalty factor for unsolved runs.
pub const PAR_FACTOR: u64 = 10;

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing '# timeout_s=<T>' comment line")]
    MissingTimeout,
    #[error("invalid timeout '{0}'")]
    InvalidTimeout(String),
    #[error("unexpected header, expected 'instance_id,solver_id,status,runtime_s'")]
    BadHeader,
    #[error("line {line}: unknown status '{status}'")]
    UnknownStatus { line: usize, status: String },
    #[error("line {line}: invalid runtime '{value}'")]
    InvalidRuntime { line: usize, value: String },
    #[error("line {line}: runtime {runtime_s} s exceeds the measurement timeout")]
    RuntimeExceedsTimeout { line: usize, runtime_s: f64 },
    #[error("line {line}: timeout record must carry the measurement timeout as runtime")]
    InconsistentTimeoutRecord { line: usize },
    #[error("duplicate record for instance '{instance}' and solver '{solver}'")]
    DuplicatePair { instance: String, solver: String },
    #[error("missing record for instance '{instance}' and solver '{solver}'")]
    MissingPair { instance: String, solver: String },
    #[error("requested timeout {requested_s} s is outside (0, {measured_s}] s")]
    TimeoutOutOfRange { requested_s: f64, measured_s: f64 },
    #[error("unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
}

pub fn secs_to_ms(s: f64) -> u64 {
    (s * 1000.0).round().max(0.0) as u64
}

pub fn ms_to_secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

/// Fixed three-decimal rendering of a millisecond count.
pub fn format_ms(ms: u64) -> String {
    format!("{}.{:03}", ms / 1000, ms % 1000)
}

/// Parses a nonnegative decimal number of seconds into milliseconds.
pub fn parse_secs(s: &str) -> Option<u64> {
    let v: f64 = s.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then(|| secs_to_ms(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Solved,
    Timeout,
    Crashed,
    WrongAnswer,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Solved => "solved",
            RunStatus::Timeout => "timeout",
            RunStatus::Crashed => "crashed",
            RunStatus::WrongAnswer => "wrong_answer",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "solved" => RunStatus::Solved,
            "timeout" => RunStatus::Timeout,
            "crashed" => RunStatus::Crashed,
            "wrong_answer" => RunStatus::WrongAnswer,
            other => return Err(other.to_string()),
        })
    }
}

/// One execution of one solver on one instance. `runtime_ms` is wall clock
/// and includes everything the solver command did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub solver_id: String,
    pub status: RunStatus,
    pub runtime_ms: u64,
}

impl RunRecord {
    pub fn runtime_s(&self) -> f64 {
        ms_to_secs(self.runtime_ms)
    }

    /// Solved within `timeout_ms`.
    pub fn solved_within(&self, timeout_ms: u64) -> bool {
        self.status == RunStatus::Solved && self.runtime_ms <= timeout_ms
    }
}

/// PAR10 score in milliseconds: the runtime if solved within the timeout,
/// otherwise ten times the timeout. Crashes and wrong answers are unsolved.
///
/// `timeout_ms` may not exceed the timeout under which the record was
/// measured.
pub fn par10_ms(rec: &RunRecord, timeout_ms: u64, measured_timeout_ms: u64) -> Result<u64, PerfError> {
    if timeout_ms == 0 || timeout_ms > measured_timeout_ms {
        return Err(PerfError::TimeoutOutOfRange {
            requested_s: ms_to_secs(timeout_ms),
            measured_s: ms_to_secs(measured_timeout_ms),
        });
    }
    Ok(if rec.solved_within(timeout_ms) { rec.runtime_ms } else { PAR_FACTOR * timeout_ms })
}

/// [`par10_ms`] in seconds.
pub fn par10(rec: &RunRecord, timeout_s: f64, measured_timeout_s: f64) -> Result<f64, PerfError> {
    par10_ms(rec, secs_to_ms(timeout_s), secs_to_ms(measured_timeout_s)).map(ms_to_secs)
}

/// Complete instances × solvers table of run records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeMatrix {
    solvers: Vec<String>,
    instances: Vec<String>,
    /// Row-major, `instances.len() * solvers.len()`.
    cells: Vec<RunRecord>,
    measured_timeout_ms: u64,
}

impl RuntimeMatrix {
    /// Builds a matrix from records in any order. Every (instance, solver)
    /// pair must appear exactly once.
    pub fn from_records(
        instances: Vec<String>,
        solvers: Vec<String>,
        records: Vec<RunRecord>,
        measured_timeout_ms: u64,
    ) -> Result<Self, PerfError> {
        if measured_timeout_ms == 0 {
            return Err(PerfError::InvalidTimeout("0".into()));
        }
        let inst_idx: HashMap<&str, usize> = instances.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let solver_idx: HashMap<&str, usize> = solvers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let ns = solvers.len();
        let mut slots: Vec<Option<RunRecord>> = vec![None; instances.len() * ns];
        for r in records {
            let i = *inst_idx
                .get(r.instance_id.as_str())
                .ok_or_else(|| PerfError::UnknownInstance(r.instance_id.clone()))?;
            let s =
                *solver_idx.get(r.solver_id.as_str()).ok_or_else(|| PerfError::UnknownSolver(r.solver_id.clone()))?;
            let slot = &mut slots[i * ns + s];
            if slot.is_some() {
                return Err(PerfError::DuplicatePair { instance: r.instance_id, solver: r.solver_id });
            }
            *slot = Some(r);
        }
        let mut cells = Vec::with_capacity(slots.len());
        for (k, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(r) => cells.push(r),
                None => {
                    return Err(PerfError::MissingPair {
                        instance: instances[k / ns].clone(),
                        solver: solvers[k % ns].clone(),
                    })
                }
            }
        }
        Ok(RuntimeMatrix { solvers, instances, cells, measured_timeout_ms })
    }

    pub fn solvers(&self) -> &[String] {
        &self.solvers
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn measured_timeout_ms(&self) -> u64 {
        self.measured_timeout_ms
    }

    pub fn measured_timeout_s(&self) -> f64 {
        ms_to_secs(self.measured_timeout_ms)
    }

    pub fn cell(&self, instance: usize, solver: usize) -> &RunRecord {
        &self.cells[instance * self.solvers.len() + solver]
    }

    pub fn row(&self, instance: usize) -> &[RunRecord] {
        let ns = self.solvers.len();
        &self.cells[instance * ns..(instance + 1) * ns]
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.cells
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|x| x == id)
    }

    pub fn solver_index(&self, id: &str) -> Option<usize> {
        self.solvers.iter().position(|x| x == id)
    }

    /// Results as if every run had been cut off at `timeout_ms`: runs that
    /// finished after the cutoff become timeouts with runtime equal to the
    /// cutoff.
    pub fn truncate(&self, timeout_ms: u64) -> Result<RuntimeMatrix, PerfError> {
        self.check_timeout(timeout_ms)?;
        let cells = self
            .cells
            .iter()
            .map(|r| {
                if r.runtime_ms <= timeout_ms && r.status != RunStatus::Timeout {
                    r.clone()
                } else {
                    RunRecord { status: RunStatus::Timeout, runtime_ms: timeout_ms, ..r.clone() }
                }
            })
            .collect();
        Ok(RuntimeMatrix {
            solvers: self.solvers.clone(),
            instances: self.instances.clone(),
            cells,
            measured_timeout_ms: timeout_ms,
        })
    }

    fn check_timeout(&self, timeout_ms: u64) -> Result<(), PerfError> {
        if timeout_ms == 0 || timeout_ms > self.measured_timeout_ms {
            Err(PerfError::TimeoutOutOfRange {
                requested_s: ms_to_secs(timeout_ms),
                measured_s: self.measured_timeout_s(),
            })
        } else {
            Ok(())
        }
    }

    /// PAR10 table at `timeout_ms` (at most the measurement timeout).
    pub fn par10_table(&self, timeout_ms: u64) -> Result<Par10Table, PerfError> {
        self.check_timeout(timeout_ms)?;
        let scores = self
            .cells
            .iter()
            .map(|r| par10_ms(r, timeout_ms, self.measured_timeout_ms))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Par10Table {
            instances: self.instances.clone(),
            solvers: self.solvers.clone(),
            scores_ms: scores,
            timeout_ms,
        })
    }

    /// Number of solved (instance, solver) pairs.
    pub fn solved_pairs(&self) -> usize {
        self.cells.iter().filter(|r| r.status == RunStatus::Solved).count()
    }

    /// Keeps only the listed instances, in the given order.
    pub fn select_instances(&self, ids: &[String]) -> Result<RuntimeMatrix, PerfError> {
        let mut cells = Vec::with_capacity(ids.len() * self.solvers.len());
        for id in ids {
            let i = self.instance_index(id).ok_or_else(|| PerfError::UnknownInstance(id.clone()))?;
            cells.extend_from_slice(self.row(i));
        }
        Ok(RuntimeMatrix {
            solvers: self.solvers.clone(),
            instances: ids.to_vec(),
            cells,
            measured_timeout_ms: self.measured_timeout_ms,
        })
    }

    /// Writes the runtime CSV format: a `# timeout_s=<T>` line, the header
    /// `instance_id,solver_id,status,runtime_s`, one row per cell.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), PerfError> {
        writeln!(writer, "# timeout_s={}", format_ms(self.measured_timeout_ms))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["instance_id", "solver_id", "status", "runtime_s"])?;
        for r in &self.cells {
            w.write_record([
                r.instance_id.as_str(),
                r.solver_id.as_str(),
                r.status.as_str(),
                &format_ms(r.runtime_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<RuntimeMatrix, PerfError> {
        let mut buf = BufReader::new(reader);
        let mut first = String::new();
        buf.read_line(&mut first)?;
        let value = first
            .trim()
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|s| s.strip_prefix("timeout_s="))
            .ok_or(PerfError::MissingTimeout)?;
        let timeout_ms =
            parse_secs(value).filter(|&t| t > 0).ok_or_else(|| PerfError::InvalidTimeout(value.to_string()))?;

        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(buf);
        let header = rdr.headers()?;
        if header.iter().collect::<Vec<_>>() != ["instance_id", "solver_id", "status", "runtime_s"] {
            return Err(PerfError::BadHeader);
        }
        let mut instances = Vec::new();
        let mut solvers = Vec::new();
        let (mut seen_i, mut seen_s) = (HashSet::new(), HashSet::new());
        let mut records = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 3;
            let status: RunStatus = rec[2].parse().map_err(|status| PerfError::UnknownStatus { line, status })?;
            let runtime_ms =
                parse_secs(&rec[3]).ok_or_else(|| PerfError::InvalidRuntime { line, value: rec[3].to_string() })?;
            if runtime_ms > timeout_ms {
                return Err(PerfError::RuntimeExceedsTimeout { line, runtime_s: ms_to_secs(runtime_ms) });
            }
            if status == RunStatus::Timeout && runtime_ms != timeout_ms {
                return Err(PerfError::InconsistentTimeoutRecord { line });
            }
            if seen_i.insert(rec[0].to_string()) {
                instances.push(rec[0].to_string());
            }
            if seen_s.insert(rec[1].to_string()) {
                solvers.push(rec[1].to_string());
            }
            records.push(RunRecord {
                instance_id: rec[0].to_string(),
                solver_id: rec[1].to_string(),
                status,
                runtime_ms,
            });
        }
        RuntimeMatrix::from_records(instances, solvers, records, timeout_ms)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), PerfError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<RuntimeMatrix, PerfError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// PAR10 scores (milliseconds) per instance and solver at one timeout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Par10Table {
    pub instances: Vec<String>,
    pub solvers: Vec<String>,
    /// Row-major, `instances.len() * solvers.len()`.
    pub scores_ms: Vec<u64>,
    pub timeout_ms: u64,
}

impl Par10Table {
    /// Table from raw rows; used for externally computed scores and tests.
    pub fn from_rows(instances: Vec<String>, solvers: Vec<String>, rows: Vec<Vec<u64>>, timeout_ms: u64) -> Self {
        assert_eq!(rows.len(), instances.len(), "one row per instance");
        assert!(rows.iter().all(|r| r.len() == solvers.len()), "one score per solver");
        Par10Table { instances, solvers, scores_ms: rows.concat(), timeout_ms }
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn num_solvers(&self) -> usize {
        self.solvers.len()
    }

    pub fn score(&self, instance: usize, solver: usize) -> u64 {
        self.scores_ms[instance * self.solvers.len() + solver]
    }

    pub fn row(&self, instance: usize) -> &[u64] {
        let ns = self.solvers.len();
        &self.scores_ms[instance * ns..(instance + 1) * ns]
    }

    /// A score counts as solved when it is within the timeout; penalized
    /// scores are larger.
    pub fn is_solved(&self, instance: usize, solver: usize) -> bool {
        self.score(instance, solver) <= self.timeout_ms
    }

    pub fn column_sum(&self, solver: usize) -> u64 {
        (0..self.num_instances()).map(|i| self.score(i, solver)).sum()
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|x| x == id)
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Par10Table {
        Par10Table {
            instances: rows.iter().map(|&i| self.instances[i].clone()).collect(),
            solvers: self.solvers.clone(),
            scores_ms: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            timeout_ms: self.timeout_ms,
        }
    }
}
