//! Short training: solve the corpus with every solver under a small timeout,
//! train the selector on those results, then give the selected solver a
//! larger timeout on the instances nobody solved. Also the timeout sweep that
//! compares this workflow with cross-validated evaluation.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{best_fixed, oracle_choices, BaselineError};
use crate::features::{FeatureCatalog, FeatureVector};
use crate::knn::{self, Distance, KnnError, TrainConfig};
use crate::perf::{format_ms, parse_secs, PerfError, RunRecord, RunStatus, RuntimeMatrix};

#[derive(Debug, Error)]
pub enum ShortTrainError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("solver run failed: {0}")]
    Runner(String),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("curve CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("curve CSV line {line}: {msg}")]
    BadCurveRow { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where run results come from: a recorded matrix or live solver processes.
pub trait RunSource {
    /// Runs each `(instance_id, solver_id)` pair once under `timeout_ms` and
    /// returns one record per pair. Runtimes never exceed `timeout_ms`.
    fn run_pairs(&self, pairs: &[(String, String)], timeout_ms: u64) -> Result<Vec<RunRecord>, ShortTrainError>;
}

/// Replays measurements as if each run had been cut off at `timeout_ms`.
impl RunSource for RuntimeMatrix {
    fn run_pairs(&self, pairs: &[(String, String)], timeout_ms: u64) -> Result<Vec<RunRecord>, ShortTrainError> {
        if timeout_ms == 0 || timeout_ms > self.measured_timeout_ms() {
            return Err(PerfError::TimeoutOutOfRange {
                requested_s: crate::perf::ms_to_secs(timeout_ms),
                measured_s: self.measured_timeout_s(),
            }
            .into());
        }
        pairs
            .iter()
            .map(|(inst, solver)| {
                let i = self.instance_index(inst).ok_or_else(|| PerfError::UnknownInstance(inst.clone()))?;
                let s = self.solver_index(solver).ok_or_else(|| PerfError::UnknownSolver(solver.clone()))?;
                Ok(cut_off(self.cell(i, s), timeout_ms))
            })
            .collect()
    }
}

fn cut_off(r: &RunRecord, timeout_ms: u64) -> RunRecord {
    if r.runtime_ms <= timeout_ms && r.status != RunStatus::Timeout {
        r.clone()
    } else {
        RunRecord { status: RunStatus::Timeout, runtime_ms: timeout_ms, ..r.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortTrainPlan {
    pub prep_timeout_ms: u64,
    pub exploit_timeout_ms: u64,
    pub corpus: Vec<String>,
    pub solvers: Vec<String>,
}

impl ShortTrainPlan {
    pub fn for_matrix(matrix: &RuntimeMatrix, prep_timeout_ms: u64, exploit_timeout_ms: u64) -> Self {
        ShortTrainPlan {
            prep_timeout_ms,
            exploit_timeout_ms,
            corpus: matrix.instances().to_vec(),
            solvers: matrix.solvers().to_vec(),
        }
    }

    fn validate(&self) -> Result<(), ShortTrainError> {
        if self.prep_timeout_ms == 0 {
            return Err(ShortTrainError::InvalidPlan("preparation timeout must be positive".into()));
        }
        if self.prep_timeout_ms > self.exploit_timeout_ms {
            return Err(ShortTrainError::InvalidPlan(format!(
                "preparation timeout {} s exceeds exploitation timeout {} s",
                format_ms(self.prep_timeout_ms),
                format_ms(self.exploit_timeout_ms)
            )));
        }
        if self.solvers.is_empty() {
            return Err(ShortTrainError::InvalidPlan("no solvers".into()));
        }
        let distinct: BTreeSet<&String> = self.corpus.iter().collect();
        if distinct.len() != self.corpus.len() {
            return Err(ShortTrainError::InvalidPlan("duplicate instance in corpus".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparation,
    Exploitation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance_id: String,
    /// Fastest solver that solved the instance during preparation.
    pub prep_solved_by: Option<String>,
    /// Solver chosen for exploitation (instances unsolved in preparation).
    pub selected: Option<String>,
    pub exploit_status: Option<RunStatus>,
    pub exploit_runtime_ms: Option<u64>,
    pub solved_in: Option<Phase>,
}

/// Outcome of one short-training run. Times are solver wall-clock sums in
/// milliseconds; model training compute is reported apart from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub prep_timeout_ms: u64,
    pub exploit_timeout_ms: u64,
    pub num_instances: usize,
    pub num_solvers: usize,
    pub k: usize,
    pub distance: Distance,
    pub cv_objective_ms: u64,
    pub solved_count: usize,
    pub solved_in_preparation: usize,
    pub solved_in_exploitation: usize,
    pub prep_time_ms: u64,
    pub exploit_time_ms: u64,
    pub total_time_ms: u64,
    /// Wall-clock time of the grid search, not part of `total_time_ms`.
    pub train_compute_ms: u64,
    /// Feature extraction time, when it was counted into `prep_time_ms`.
    #[serde(default)]
    pub feature_time_ms: Option<u64>,
    pub instances: Vec<InstanceOutcome>,
}

impl EvaluationReport {
    /// Counts feature extraction as preparation time.
    pub fn include_feature_time(&mut self, ms: u64) {
        self.feature_time_ms = Some(ms);
        self.prep_time_ms += ms;
        self.total_time_ms += ms;
    }

    pub fn sweep_point(&self) -> SweepPoint {
        SweepPoint {
            solving_timeout_ms: self.prep_timeout_ms,
            solved_count: self.solved_count,
            prep_train_ms: self.prep_time_ms,
            exploitation_ms: self.exploit_time_ms,
            total_ms: self.total_time_ms,
        }
    }

    pub fn to_json(&self) -> Result<String, ShortTrainError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ShortTrainError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ShortTrainError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs the three phases of short training.
///
/// 1. every solver on every corpus instance at `prep_timeout_ms`;
/// 2. selector training on the resulting PAR10 table;
/// 3. the selected solver at `exploit_timeout_ms` on each instance that no
///    solver solved in phase 1.
///
/// Phase-3 runs that fail are charged the full exploitation timeout. When the
/// two timeouts are equal phase 3 is skipped: the selected solver has already
/// been run with that timeout.
pub fn short_train_run(
    plan: &ShortTrainPlan,
    catalog: &FeatureCatalog,
    features: &[FeatureVector],
    source: &dyn RunSource,
    config: &TrainConfig,
) -> Result<EvaluationReport, ShortTrainError> {
    plan.validate()?;
    let pairs: Vec<(String, String)> =
        plan.corpus.iter().flat_map(|i| plan.solvers.iter().map(move |s| (i.clone(), s.clone()))).collect();
    let records = source.run_pairs(&pairs, plan.prep_timeout_ms)?;
    let prep = RuntimeMatrix::from_records(plan.corpus.clone(), plan.solvers.clone(), records, plan.prep_timeout_ms)?;
    let prep_time_ms: u64 = prep.records().iter().map(|r| r.runtime_ms.min(plan.prep_timeout_ms)).sum();
    let par10 = prep.par10_table(plan.prep_timeout_ms)?;

    let started = Instant::now();
    let (model, _) = knn::train(features, &par10, &catalog.version, config)?;
    let train_compute_ms = started.elapsed().as_millis() as u64;

    let mut outcomes: Vec<InstanceOutcome> = (0..prep.instances().len())
        .map(|i| {
            let fastest = prep
                .row(i)
                .iter()
                .filter(|r| r.solved_within(plan.prep_timeout_ms))
                .min_by_key(|r| r.runtime_ms)
                .map(|r| r.solver_id.clone());
            InstanceOutcome {
                instance_id: prep.instances()[i].clone(),
                solved_in: fastest.as_ref().map(|_| Phase::Preparation),
                prep_solved_by: fastest,
                selected: None,
                exploit_status: None,
                exploit_runtime_ms: None,
            }
        })
        .collect();

    let mut exploit_time_ms = 0;
    if plan.exploit_timeout_ms > plan.prep_timeout_ms {
        let mut queries = Vec::new();
        for (i, out) in outcomes.iter_mut().enumerate().filter(|(_, o)| o.solved_in.is_none()) {
            let solver = model.select_solver(&model.normalized_training()[i])?.to_string();
            out.selected = Some(solver.clone());
            queries.push((out.instance_id.clone(), solver));
        }
        let runs = source.run_pairs(&queries, plan.exploit_timeout_ms)?;
        let by_id: HashMap<String, usize> =
            outcomes.iter().enumerate().map(|(i, o)| (o.instance_id.clone(), i)).collect();
        for run in runs {
            let solved = run.solved_within(plan.exploit_timeout_ms);
            exploit_time_ms += if solved { run.runtime_ms } else { plan.exploit_timeout_ms };
            let out = &mut outcomes[by_id[&run.instance_id]];
            out.exploit_status = Some(run.status);
            out.exploit_runtime_ms = Some(run.runtime_ms);
            if solved {
                out.solved_in = Some(Phase::Exploitation);
            }
        }
    }

    let solved_in_preparation = outcomes.iter().filter(|o| o.solved_in == Some(Phase::Preparation)).count();
    let solved_in_exploitation = outcomes.iter().filter(|o| o.solved_in == Some(Phase::Exploitation)).count();
    Ok(EvaluationReport {
        prep_timeout_ms: plan.prep_timeout_ms,
        exploit_timeout_ms: plan.exploit_timeout_ms,
        num_instances: plan.corpus.len(),
        num_solvers: plan.solvers.len(),
        k: model.k,
        distance: model.distance,
        cv_objective_ms: model.cv_objective_ms,
        solved_count: solved_in_preparation + solved_in_exploitation,
        solved_in_preparation,
        solved_in_exploitation,
        prep_time_ms,
        exploit_time_ms,
        total_time_ms: prep_time_ms + exploit_time_ms,
        train_compute_ms,
        feature_time_ms: None,
        instances: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    CrossValidation,
    ShortTraining,
}

impl std::str::FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cv" | "cross_validation" | "cross-validation" => Ok(SweepMode::CrossValidation),
            "short" | "short_training" | "short-training" => Ok(SweepMode::ShortTraining),
            _ => Err(format!("unknown sweep mode {s:?} (expected cv or short)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub solving_timeout_ms: u64,
    pub solved_count: usize,
    pub prep_train_ms: u64,
    pub exploitation_ms: u64,
    pub total_ms: u64,
}

impl SweepPoint {
    pub fn solving_timeout_s(&self) -> f64 {
        crate::perf::ms_to_secs(self.solving_timeout_ms)
    }
}

/// Cross-validated evaluation at one preparation timeout.
///
/// The corpus is split into folds with `config.seed`. For each fold a model is
/// trained (with its own grid search) on the other folds' PAR10 scores at
/// `prep_timeout_ms`, and each held-out instance is solved by its selected
/// solver at the full measurement timeout. Preparation time is the solver time
/// of the whole corpus at `prep_timeout_ms`.
pub fn cross_validation_point(
    matrix: &RuntimeMatrix,
    catalog: &FeatureCatalog,
    features: &[FeatureVector],
    prep_timeout_ms: u64,
    config: &TrainConfig,
) -> Result<SweepPoint, ShortTrainError> {
    let full = matrix.measured_timeout_ms();
    let prep = matrix.truncate(prep_timeout_ms)?;
    let prep_train_ms: u64 = prep.records().iter().map(|r| r.runtime_ms).sum();
    let par10 = prep.par10_table(prep_timeout_ms)?;
    let choices = knn::cross_validated_choices(features, &par10, &catalog.version, config)?;
    let mut solved_count = 0;
    let mut exploitation_ms = 0;
    for (i, &s) in choices.iter().enumerate() {
        let run = matrix.cell(i, s);
        if run.solved_within(full) {
            solved_count += 1;
            exploitation_ms += run.runtime_ms;
        } else {
            exploitation_ms += full;
        }
    }
    Ok(SweepPoint {
        solving_timeout_ms: prep_timeout_ms,
        solved_count,
        prep_train_ms,
        exploitation_ms,
        total_ms: prep_train_ms + exploitation_ms,
    })
}

/// A single solver applied to the whole corpus at the measurement timeout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub solved_count: usize,
    pub time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curve {
    pub mode: SweepMode,
    pub points: Vec<SweepPoint>,
    pub best_fixed: ReferenceLine,
    pub oracle: ReferenceLine,
}

/// Best-fixed and oracle lines at the measurement timeout. Unsolved runs are
/// charged the full timeout.
pub fn reference_lines(matrix: &RuntimeMatrix) -> Result<(ReferenceLine, ReferenceLine), ShortTrainError> {
    let full = matrix.measured_timeout_ms();
    let par10 = matrix.par10_table(full)?;
    let cost = |i: usize, s: usize| {
        let r = matrix.cell(i, s);
        if r.solved_within(full) {
            (1, r.runtime_ms)
        } else {
            (0, full)
        }
    };
    let line = |choices: &mut dyn Iterator<Item = (usize, usize)>| {
        let (solved, time) = choices.map(|(i, s)| cost(i, s)).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        ReferenceLine { solved_count: solved, time_ms: time }
    };
    let bf = best_fixed(&par10)?;
    let oracle = oracle_choices(&par10)?;
    Ok((line(&mut (0..par10.num_instances()).map(|i| (i, bf))), line(&mut oracle.into_iter().enumerate())))
}

/// One [`SweepPoint`] per preparation timeout, computed in parallel.
/// Short-training points use the measurement timeout for exploitation.
pub fn timeout_sweep(
    matrix: &RuntimeMatrix,
    catalog: &FeatureCatalog,
    features: &[FeatureVector],
    timeouts_ms: &[u64],
    mode: SweepMode,
    config: &TrainConfig,
) -> Result<Curve, ShortTrainError> {
    let full = matrix.measured_timeout_ms();
    if let Some(&bad) = timeouts_ms.iter().find(|&&t| t == 0 || t > full) {
        return Err(PerfError::TimeoutOutOfRange {
            requested_s: crate::perf::ms_to_secs(bad),
            measured_s: matrix.measured_timeout_s(),
        }
        .into());
    }
    let points = timeouts_ms
        .par_iter()
        .map(|&t| match mode {
            SweepMode::ShortTraining => {
                let plan = ShortTrainPlan::for_matrix(matrix, t, full);
                short_train_run(&plan, catalog, features, matrix, config).map(|r| r.sweep_point())
            }
            SweepMode::CrossValidation => cross_validation_point(matrix, catalog, features, t, config),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (best_fixed, oracle) = reference_lines(matrix)?;
    Ok(Curve { mode, points, best_fixed, oracle })
}

pub const CURVE_HEADER: [&str; 5] = ["timeout_s", "solved", "prep_train_s", "exploit_s", "total_s"];

impl Curve {
    /// CSV with one row per sweep point followed by `best_fixed` and `oracle`
    /// rows, whose `timeout_s` column holds the line name and whose time is
    /// all exploitation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ShortTrainError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CURVE_HEADER)?;
        for p in &self.points {
            w.write_record([
                format_ms(p.solving_timeout_ms),
                p.solved_count.to_string(),
                format_ms(p.prep_train_ms),
                format_ms(p.exploitation_ms),
                format_ms(p.total_ms),
            ])?;
        }
        for (name, line) in [("best_fixed", &self.best_fixed), ("oracle", &self.oracle)] {
            w.write_record([
                name.to_string(),
                line.solved_count.to_string(),
                format_ms(0),
                format_ms(line.time_ms),
                format_ms(line.time_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), ShortTrainError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads a curve written by [`Curve::write_csv`]. The mode is not stored
    /// in the file and must be supplied.
    pub fn read_csv<R: Read>(reader: R, mode: SweepMode) -> Result<Curve, ShortTrainError> {
        let mut r = csv::Reader::from_reader(reader);
        if r.headers()?.iter().ne(CURVE_HEADER) {
            return Err(ShortTrainError::BadCurveRow { line: 1, msg: "unexpected header".into() });
        }
        let mut points = Vec::new();
        let mut best_fixed = None;
        let mut oracle = None;
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: &str| ShortTrainError::BadCurveRow { line, msg: msg.to_string() };
            if rec.len() != CURVE_HEADER.len() {
                return Err(bad("wrong number of fields"));
            }
            let secs = |k: usize| parse_secs(&rec[k]).ok_or_else(|| bad("invalid seconds value"));
            let solved: usize = rec[1].parse().map_err(|_| bad("invalid solved count"))?;
            match &rec[0] {
                "best_fixed" => best_fixed = Some(ReferenceLine { solved_count: solved, time_ms: secs(4)? }),
                "oracle" => oracle = Some(ReferenceLine { solved_count: solved, time_ms: secs(4)? }),
                _ => points.push(SweepPoint {
                    solving_timeout_ms: secs(0)?,
                    solved_count: solved,
                    prep_train_ms: secs(2)?,
                    exploitation_ms: secs(3)?,
                    total_ms: secs(4)?,
                }),
            }
        }
        let missing = |name: &str| ShortTrainError::BadCurveRow { line: 0, msg: format!("missing {name} row") };
        Ok(Curve {
            mode,
            points,
            best_fixed: best_fixed.ok_or_else(|| missing("best_fixed"))?,
            oracle: oracle.ok_or_else(|| missing("oracle"))?,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, mode: SweepMode) -> Result<Curve, ShortTrainError> {
        Curve::read_csv(std::fs::File::open(path)?, mode)
    }
}
