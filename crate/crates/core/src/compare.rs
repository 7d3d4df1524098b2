//! Side-by-side evaluation of the selector and the reference methods on one
//! runtime matrix.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    best_fixed, oracle_choices, ridge_train, solved_count, sunny_schedule, total_par10, BaselineError, DEFAULT_RIDGES,
    SUNNY_DEFAULT_K,
};
use crate::features::{normalize_fit, FeatureCatalog, FeatureVector};
use crate::knn::{align_features, cross_validated_choices, FoldPartition, KnnError, TrainConfig, NUM_FOLDS};
use crate::perf::{Par10Table, PerfError, RuntimeMatrix, PAR_FACTOR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub solved_count: usize,
    pub par10_total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub timeout_ms: u64,
    pub num_instances: usize,
    pub num_solvers: usize,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

fn by_choices(name: &str, par10: &Par10Table, choices: &[usize]) -> MethodResult {
    MethodResult {
        method: name.to_string(),
        solved_count: solved_count(par10, choices),
        par10_total_ms: total_par10(par10, choices),
    }
}

/// Fixed-solver and oracle rows; needs no features.
pub fn fixed_methods(par10: &Par10Table) -> Result<Vec<MethodResult>, CompareError> {
    let n = par10.num_instances();
    let bf = best_fixed(par10)?;
    let worst = (0..par10.num_solvers()).rev().max_by_key(|&s| par10.column_sum(s)).ok_or(BaselineError::NoSolvers)?;
    Ok(vec![
        by_choices("oracle", par10, &oracle_choices(par10)?),
        by_choices(&format!("best_fixed:{}", par10.solvers[bf]), par10, &vec![bf; n]),
        by_choices(&format!("worst_fixed:{}", par10.solvers[worst]), par10, &vec![worst; n]),
    ])
}

/// Compares oracle, best and worst fixed solver, and 5-fold cross-validated
/// k-NN, SUNNY-like schedules and ridge regression at the measurement
/// timeout. Schedules are replayed against the measured runs; an unsolved
/// instance costs ten times the timeout.
pub fn compare_methods(
    matrix: &RuntimeMatrix,
    catalog: &FeatureCatalog,
    features: &[FeatureVector],
    config: &TrainConfig,
) -> Result<Comparison, CompareError> {
    let timeout = matrix.measured_timeout_ms();
    let par10 = matrix.par10_table(timeout)?;
    let mut methods = fixed_methods(&par10)?;

    let knn = cross_validated_choices(features, &par10, &catalog.version, config)?;
    methods.push(by_choices("knn", &par10, &knn));

    let aligned = align_features(features, &par10)?;
    let ids = &par10.instances;
    let folds = FoldPartition::new(ids, config.seed).folds_for(ids);
    let mut ridge = vec![0; ids.len()];
    let (mut sunny_solved, mut sunny_total) = (0, 0);
    for f in 0..NUM_FOLDS {
        let train: Vec<usize> = (0..ids.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..ids.len()).filter(|&i| folds[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train_features: Vec<FeatureVector> = train.iter().map(|&i| aligned[i].clone()).collect();
        let norm = normalize_fit(&train_features)?;
        let points: Vec<Vec<f64>> = train_features.iter().map(|v| norm.apply_values(&v.values)).collect();
        let table = par10.select_rows(&train);
        let inner_ids = &table.instances;
        let inner_folds = FoldPartition::new(inner_ids, config.seed).folds_for(inner_ids);
        let model = ridge_train(&points, &table, &inner_folds, &DEFAULT_RIDGES)?;
        let k = SUNNY_DEFAULT_K.min(train.len());
        for &i in &test {
            let q = norm.apply_values(&aligned[i].values);
            ridge[i] = matrix.solver_index(model.select(&q)).expect("same solvers");
            let outcome = sunny_schedule(&points, &table, &q, k, timeout)?.simulate(matrix.row(i));
            if outcome.solved_by.is_some() {
                sunny_solved += 1;
                sunny_total += outcome.time_ms;
            } else {
                sunny_total += PAR_FACTOR * timeout;
            }
        }
    }
    methods.push(MethodResult { method: "sunny".into(), solved_count: sunny_solved, par10_total_ms: sunny_total });
    methods.push(by_choices("ridge", &par10, &ridge));

    Ok(Comparison { timeout_ms: timeout, num_instances: ids.len(), num_solvers: par10.num_solvers(), methods })
}
