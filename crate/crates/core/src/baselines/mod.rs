//! Reference methods: the best single solver, the per-instance oracle, a
//! SUNNY-like schedule and ridge-regression runtime prediction.

mod ridge;
mod sunny;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::knn::KnnError;
use crate::perf::Par10Table;

pub use ridge::{ridge_fit, ridge_select, ridge_train, RidgeModel, RidgePortfolio, DEFAULT_RIDGES};
pub use sunny::{sunny_schedule, Schedule, ScheduleOutcome, ScheduleSlot, SUNNY_DEFAULT_K};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("PAR10 table has no solvers")]
    NoSolvers,
    #[error("PAR10 table has no instances")]
    NoInstances,
    #[error("normal equations are singular (ridge = {0})")]
    Singular(f64),
    #[error("ridge must be a finite nonnegative number, got {0}")]
    InvalidRidge(f64),
    #[error("design matrix has {rows} rows but {targets} targets")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error(transparent)]
    Knn(#[from] KnnError),
}

/// Index of the solver with the smallest total PAR10; earliest solver on ties.
pub fn best_fixed(par10: &Par10Table) -> Result<usize, BaselineError> {
    if par10.num_solvers() == 0 {
        return Err(BaselineError::NoSolvers);
    }
    if par10.num_instances() == 0 {
        return Err(BaselineError::NoInstances);
    }
    let mut best = 0;
    let mut best_sum = par10.column_sum(0);
    for s in 1..par10.num_solvers() {
        let sum = par10.column_sum(s);
        if sum < best_sum {
            best = s;
            best_sum = sum;
        }
    }
    Ok(best)
}

/// Per-row argmin (earliest solver on ties).
pub fn oracle_choices(par10: &Par10Table) -> Result<Vec<usize>, BaselineError> {
    if par10.num_solvers() == 0 {
        return Err(BaselineError::NoSolvers);
    }
    Ok((0..par10.num_instances())
        .map(|i| {
            let row = par10.row(i);
            let mut best = 0;
            for s in 1..row.len() {
                if row[s] < row[best] {
                    best = s;
                }
            }
            best
        })
        .collect())
}

/// Best solver for each instance, by id.
pub fn oracle_selection(par10: &Par10Table) -> Result<BTreeMap<String, String>, BaselineError> {
    Ok(oracle_choices(par10)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (par10.instances[i].clone(), par10.solvers[s].clone()))
        .collect())
}

/// Total PAR10 of a per-instance choice of solvers.
pub fn total_par10(par10: &Par10Table, choices: &[usize]) -> u64 {
    choices.iter().enumerate().map(|(i, &s)| par10.score(i, s)).sum()
}

/// Number of instances whose chosen solver solved them within the timeout.
pub fn solved_count(par10: &Par10Table, choices: &[usize]) -> usize {
    choices.iter().enumerate().filter(|&(i, &s)| par10.is_solved(i, s)).count()
}
