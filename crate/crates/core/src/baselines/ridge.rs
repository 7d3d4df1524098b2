use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::knn::{KnnError, NUM_FOLDS};
use crate::perf::{ms_to_secs, Par10Table};

/// Ridge values tried by [`ridge_train`]: 1e-8, 1e-7, ..., 1e-1.
pub const DEFAULT_RIDGES: [f64; 8] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub ridge: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Least squares with an L2 penalty on the weights only.
///
/// Columns and targets are centered, the penalized normal equations
/// `(XᵀX + ridge·I) w = Xᵀy` are solved by Cholesky factorization, and the
/// intercept is recovered from the means.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<RidgeModel, BaselineError> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(BaselineError::InvalidRidge(ridge));
    }
    if x.len() != y.len() {
        return Err(BaselineError::ShapeMismatch { rows: x.len(), targets: y.len() });
    }
    let n = x.len();
    if n == 0 {
        return Err(BaselineError::NoInstances);
    }
    let p = x[0].len();
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..p).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (row, &t) in x.iter().zip(y) {
        let yc = t - y_mean;
        for r in 0..p {
            let xr = row[r] - x_mean[r];
            b[r] += xr * yc;
            for c in 0..=r {
                a[r * p + c] += xr * (row[c] - x_mean[c]);
            }
        }
    }
    for r in 0..p {
        a[r * p + r] += ridge;
        for c in 0..r {
            a[c * p + r] = a[r * p + c];
        }
    }
    let weights = cholesky_solve(&mut a, b, p).ok_or(BaselineError::Singular(ridge))?;
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeModel { weights, intercept, ridge })
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, p×p),
/// overwriting `A` with its Cholesky factor. `None` if `A` is not
/// numerically positive definite.
fn cholesky_solve(a: &mut [f64], mut b: Vec<f64>, p: usize) -> Option<Vec<f64>> {
    let scale = (0..p).map(|i| a[i * p + i].abs()).fold(0.0f64, f64::max).max(1.0);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if d.is_nan() || d <= scale * 1e-14 {
            return None;
        }
        let l = d.sqrt();
        a[j * p + j] = l;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / l;
        }
    }
    for i in 0..p {
        for k in 0..i {
            b[i] -= a[i * p + k] * b[k];
        }
        b[i] /= a[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            b[i] -= a[k * p + i] * b[k];
        }
        b[i] /= a[i * p + i];
    }
    Some(b)
}

/// Solver whose model predicts the smallest PAR10; the earliest solver wins ties.
pub fn ridge_select(models: &[RidgeModel], query: &[f64]) -> usize {
    let mut best = 0;
    let mut best_pred = f64::INFINITY;
    for (s, m) in models.iter().enumerate() {
        let pred = m.predict(query);
        if pred < best_pred {
            best = s;
            best_pred = pred;
        }
    }
    best
}

/// One ridge model per solver, trained on PAR10 seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgePortfolio {
    pub solver_ids: Vec<String>,
    pub ridge: f64,
    pub models: Vec<RidgeModel>,
    /// Cross-validated total PAR10 (ms) of the chosen ridge.
    pub cv_objective_ms: u64,
}

impl RidgePortfolio {
    pub fn fit(points: &[Vec<f64>], par10: &Par10Table, rows: &[usize], ridge: f64) -> Result<Self, BaselineError> {
        let x: Vec<Vec<f64>> = rows.iter().map(|&i| points[i].clone()).collect();
        let models = (0..par10.num_solvers())
            .into_par_iter()
            .map(|s| {
                let y: Vec<f64> = rows.iter().map(|&i| ms_to_secs(par10.score(i, s))).collect();
                ridge_fit(&x, &y, ridge)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RidgePortfolio { solver_ids: par10.solvers.clone(), ridge, models, cv_objective_ms: 0 })
    }

    pub fn select(&self, query: &[f64]) -> &str {
        &self.solver_ids[ridge_select(&self.models, query)]
    }
}

/// Picks the ridge by the same fold objective as the k-NN grid search and
/// refits on all rows. Ties go to the earlier value in `ridges`.
pub fn ridge_train(
    points: &[Vec<f64>],
    par10: &Par10Table,
    folds: &[usize],
    ridges: &[f64],
) -> Result<RidgePortfolio, BaselineError> {
    let n = par10.num_instances();
    if par10.num_solvers() == 0 {
        return Err(BaselineError::NoSolvers);
    }
    if n < NUM_FOLDS {
        return Err(KnnError::TooFewInstances(n).into());
    }
    if ridges.is_empty() {
        return Err(KnnError::EmptyGrid.into());
    }
    let mut best: Option<(u64, f64)> = None;
    for &ridge in ridges {
        let mut objective = 0u64;
        for f in 0..NUM_FOLDS {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            if train.len() == n {
                continue;
            }
            let portfolio = RidgePortfolio::fit(points, par10, &train, ridge)?;
            objective += (0..n)
                .filter(|&i| folds[i] == f)
                .map(|i| par10.score(i, ridge_select(&portfolio.models, &points[i])))
                .sum::<u64>();
        }
        if best.is_none_or(|(b, _)| objective < b) {
            best = Some((objective, ridge));
        }
    }
    let (objective, ridge) = best.expect("ridges nonempty");
    let all: Vec<usize> = (0..n).collect();
    let mut portfolio = RidgePortfolio::fit(points, par10, &all, ridge)?;
    portfolio.cv_objective_ms = objective;
    Ok(portfolio)
}
