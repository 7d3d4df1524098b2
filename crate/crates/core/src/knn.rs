//! k-nearest-neighbor solver selection.
//!
//! Training data is a table of instance features plus the PAR10 score of every
//! solver on every training instance. For a query, the `k` nearest training
//! instances are found and the solver with the smallest PAR10 sum over those
//! neighbors is selected. `k` and the distance measure are chosen by 5-fold
//! cross-validation over the training data.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{normalize_fit, FeatureError, FeatureVector, NormalizationParams};
use crate::perf::Par10Table;

pub const NUM_FOLDS: usize = 5;

/// Model file format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_K_RANGE: std::ops::RangeInclusive<usize> = 1..=20;

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("k = {k} exceeds the {available} available training instances")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("cross-validation needs at least {NUM_FOLDS} training instances, got {0}")]
    TooFewInstances(usize),
    #[error("no (k, distance) combination is feasible with the given folds")]
    EmptyGrid,
    #[error("no features for training instance '{0}'")]
    MissingFeatures(String),
    #[error("feature vector has {found} values, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown distance measure '{0}'")]
    UnknownDistance(String),
    #[error("training table has no solvers")]
    NoSolvers,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Manhattan,
    Chebyshev,
    Canberra,
}

impl Distance {
    pub const ALL: [Distance; 4] = [Distance::Euclidean, Distance::Manhattan, Distance::Chebyshev, Distance::Canberra];

    pub fn name(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
            Distance::Chebyshev => "chebyshev",
            Distance::Canberra => "canberra",
        }
    }

    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let pairs = a.iter().zip(b);
        match self {
            Distance::Euclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Manhattan => pairs.map(|(x, y)| (x - y).abs()).sum(),
            Distance::Chebyshev => pairs.map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
            Distance::Canberra => pairs
                .map(|(x, y)| {
                    let den = x.abs() + y.abs();
                    if den == 0.0 {
                        0.0
                    } else {
                        (x - y).abs() / den
                    }
                })
                .sum(),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distance {
    type Err = KnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Distance::ALL
            .into_iter()
            .find(|d| d.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| KnnError::UnknownDistance(s.to_string()))
    }
}

/// Neighbors of `query` among `candidates` (indices into `points`), ordered by
/// (distance, instance id). Returns the first `k` as `(distance, index)`.
pub fn nearest(
    points: &[Vec<f64>],
    ids: &[String],
    candidates: impl IntoIterator<Item = usize>,
    query: &[f64],
    k: usize,
    distance: Distance,
) -> Vec<(f64, usize)> {
    let mut scored: Vec<(f64, usize)> = candidates.into_iter().map(|j| (distance.eval(query, &points[j]), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(&ids[b.1]));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    scored
}

/// Solver with the smallest PAR10 sum over `neighbors`; the earliest solver
/// wins ties.
pub fn best_solver_on(par10: &Par10Table, neighbors: impl IntoIterator<Item = usize> + Clone) -> usize {
    let mut best: Option<(u64, usize)> = None;
    for s in 0..par10.num_solvers() {
        let total: u64 = neighbors.clone().into_iter().map(|j| par10.score(j, s)).sum();
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, s));
        }
    }
    best.map_or(0, |(_, s)| s)
}

fn argmin_first(sums: &[u64]) -> usize {
    let mut best = 0;
    for (s, &v) in sums.iter().enumerate().skip(1) {
        if v < sums[best] {
            best = s;
        }
    }
    best
}

/// Reproducible split of instances into [`NUM_FOLDS`] balanced folds.
///
/// Instances are ordered by a seeded FNV-1a hash of their id and dealt
/// round-robin, so fold sizes differ by at most one and the split depends only
/// on the id set and the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPartition {
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

fn fold_hash(seed: u64, id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

impl FoldPartition {
    pub fn new(ids: &[String], seed: u64) -> Self {
        let mut order: Vec<(u64, &String)> = ids.iter().map(|id| (fold_hash(seed, id), id)).collect();
        order.sort();
        let assignments = order.into_iter().enumerate().map(|(rank, (_, id))| (id.clone(), rank % NUM_FOLDS)).collect();
        FoldPartition { seed, assignments }
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// Fold index for each id, in order. Panics on ids outside the partition.
    pub fn folds_for(&self, ids: &[String]) -> Vec<usize> {
        ids.iter().map(|id| self.assignments[id]).collect()
    }

    pub fn fold_sizes(&self) -> [usize; NUM_FOLDS] {
        let mut sizes = [0; NUM_FOLDS];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub distance: Distance,
    /// Total PAR10 (ms) of the cross-validated selections.
    pub objective_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResult {
    pub k: usize,
    pub distance: Distance,
    pub objective_ms: u64,
    /// Every evaluated combination, ordered by k then by distance order.
    pub cells: Vec<GridCell>,
}

/// Chooses `(k, distance)` by cross-validation.
///
/// `points` are normalized features aligned with the rows of `par10`, `folds`
/// the fold of each row. Each instance selects a solver from its neighbors in
/// the other folds; the objective is the total PAR10 of those selections.
/// The smallest objective wins, ties go to the smaller `k` and then to the
/// earlier distance in `distances`. Values of `k` larger than the smallest
/// training part are skipped.
pub fn grid_search(
    points: &[Vec<f64>],
    par10: &Par10Table,
    folds: &[usize],
    k_values: &[usize],
    distances: &[Distance],
) -> Result<GridResult, KnnError> {
    let n = par10.num_instances();
    assert_eq!(points.len(), n, "features aligned with PAR10 rows");
    assert_eq!(folds.len(), n, "one fold per row");
    if n < NUM_FOLDS {
        return Err(KnnError::TooFewInstances(n));
    }
    if par10.num_solvers() == 0 {
        return Err(KnnError::NoSolvers);
    }
    let mut fold_sizes = [0usize; NUM_FOLDS];
    for &f in folds {
        fold_sizes[f] += 1;
    }
    let max_train_k = n - fold_sizes.iter().max().copied().unwrap_or(0);
    let mut ks: Vec<usize> = k_values.iter().copied().filter(|&k| k >= 1 && k <= max_train_k).collect();
    ks.sort_unstable();
    ks.dedup();
    let kmax = match ks.last() {
        Some(&k) if !distances.is_empty() => k,
        _ => return Err(KnnError::EmptyGrid),
    };

    let ids = &par10.instances;
    let ns = par10.num_solvers();
    // objective[d][ki]
    let per_distance: Vec<Vec<u64>> = distances
        .iter()
        .map(|&d| {
            let per_instance: Vec<Vec<usize>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let neighbors = nearest(points, ids, (0..n).filter(|&j| folds[j] != folds[i]), &points[i], kmax, d);
                    // selected solver for each k in ks
                    let mut sums = vec![0u64; ns];
                    let mut choice = Vec::with_capacity(ks.len());
                    let mut next = 0;
                    for (taken, &(_, j)) in neighbors.iter().enumerate() {
                        for (s, sum) in sums.iter_mut().enumerate() {
                            *sum += par10.score(j, s);
                        }
                        while next < ks.len() && ks[next] == taken + 1 {
                            choice.push(argmin_first(&sums));
                            next += 1;
                        }
                    }
                    choice
                })
                .collect();
            (0..ks.len()).map(|ki| (0..n).map(|i| par10.score(i, per_instance[i][ki])).sum()).collect()
        })
        .collect();

    let mut cells = Vec::with_capacity(ks.len() * distances.len());
    for (ki, &k) in ks.iter().enumerate() {
        for (di, &distance) in distances.iter().enumerate() {
            cells.push(GridCell { k, distance, objective_ms: per_distance[di][ki] });
        }
    }
    // cells are in (k, distance-order) order, so the first minimum is the tie-break winner
    let best = cells.iter().min_by_key(|c| c.objective_ms).expect("grid is nonempty").clone();
    Ok(GridResult { k: best.k, distance: best.distance, objective_ms: best.objective_ms, cells })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainConfig {
    pub k_values: Vec<usize>,
    pub distances: Vec<Distance>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { k_values: DEFAULT_K_RANGE.collect(), distances: Distance::ALL.to_vec(), seed: 0 }
    }
}

/// Trained selector: the chosen metaparameters plus the full training data.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioModel {
    pub k: usize,
    pub distance: Distance,
    pub catalog_version: String,
    pub normalization: NormalizationParams,
    /// Raw features, aligned with the rows of `par10`.
    pub train_features: Vec<FeatureVector>,
    pub par10: Par10Table,
    pub seed: u64,
    /// Cross-validated objective of the chosen `(k, distance)`.
    pub cv_objective_ms: u64,
    normalized: Vec<Vec<f64>>,
}

/// Aligns feature vectors to the rows of a PAR10 table.
pub fn align_features(features: &[FeatureVector], par10: &Par10Table) -> Result<Vec<FeatureVector>, KnnError> {
    let by_id: HashMap<&str, &FeatureVector> = features.iter().map(|f| (f.instance_id.as_str(), f)).collect();
    let aligned: Vec<FeatureVector> = par10
        .instances
        .iter()
        .map(|id| by_id.get(id.as_str()).map(|f| (*f).clone()).ok_or_else(|| KnnError::MissingFeatures(id.clone())))
        .collect::<Result<_, _>>()?;
    if let Some(first) = aligned.first() {
        let dim = first.values.len();
        if let Some(bad) = aligned.iter().find(|f| f.values.len() != dim) {
            return Err(KnnError::DimensionMismatch { expected: dim, found: bad.values.len() });
        }
    }
    Ok(aligned)
}

/// Fits normalization on all training features, splits into folds with
/// `config.seed`, runs [`grid_search`] and keeps the winning `(k, distance)`
/// together with the full training data.
pub fn train(
    features: &[FeatureVector],
    par10: &Par10Table,
    catalog_version: &str,
    config: &TrainConfig,
) -> Result<(PortfolioModel, GridResult), KnnError> {
    let aligned = align_features(features, par10)?;
    if aligned.len() < NUM_FOLDS {
        return Err(KnnError::TooFewInstances(aligned.len()));
    }
    let normalization = normalize_fit(&aligned)?;
    let normalized: Vec<Vec<f64>> = aligned.iter().map(|f| normalization.apply_values(&f.values)).collect();
    let partition = FoldPartition::new(&par10.instances, config.seed);
    let folds = partition.folds_for(&par10.instances);
    let grid = grid_search(&normalized, par10, &folds, &config.k_values, &config.distances)?;
    let model = PortfolioModel {
        k: grid.k,
        distance: grid.distance,
        catalog_version: catalog_version.to_string(),
        normalization,
        train_features: aligned,
        par10: par10.clone(),
        seed: config.seed,
        cv_objective_ms: grid.objective_ms,
        normalized,
    };
    Ok((model, grid))
}

/// Held-out selections: for each fold a model is trained (with its own grid
/// search) on the other folds and selects a solver for every instance of the
/// fold. Returns one solver index per row of `par10`.
pub fn cross_validated_choices(
    features: &[FeatureVector],
    par10: &Par10Table,
    catalog_version: &str,
    config: &TrainConfig,
) -> Result<Vec<usize>, KnnError> {
    let aligned = align_features(features, par10)?;
    let ids = &par10.instances;
    let folds = FoldPartition::new(ids, config.seed).folds_for(ids);
    let mut choices = vec![0; ids.len()];
    for f in 0..NUM_FOLDS {
        let train_rows: Vec<usize> = (0..ids.len()).filter(|&i| folds[i] != f).collect();
        if train_rows.len() == ids.len() {
            continue;
        }
        let train_features: Vec<FeatureVector> = train_rows.iter().map(|&i| aligned[i].clone()).collect();
        let (model, _) = train(&train_features, &par10.select_rows(&train_rows), catalog_version, config)?;
        for i in (0..ids.len()).filter(|&i| folds[i] == f) {
            let q = model.normalize(&aligned[i])?;
            let neighbors = model.neighbor_indices(&q, model.k)?;
            choices[i] = best_solver_on(&model.par10, neighbors.iter().copied());
        }
    }
    Ok(choices)
}

impl PortfolioModel {
    /// Model with fixed metaparameters, no cross-validation.
    pub fn with_params(
        features: &[FeatureVector],
        par10: &Par10Table,
        catalog_version: &str,
        k: usize,
        distance: Distance,
    ) -> Result<Self, KnnError> {
        let aligned = align_features(features, par10)?;
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > aligned.len() {
            return Err(KnnError::KTooLarge { k, available: aligned.len() });
        }
        let normalization = normalize_fit(&aligned)?;
        let normalized = aligned.iter().map(|f| normalization.apply_values(&f.values)).collect();
        Ok(PortfolioModel {
            k,
            distance,
            catalog_version: catalog_version.to_string(),
            normalization,
            train_features: aligned,
            par10: par10.clone(),
            seed: 0,
            cv_objective_ms: 0,
            normalized,
        })
    }

    pub fn solver_ids(&self) -> &[String] {
        &self.par10.solvers
    }

    pub fn num_training(&self) -> usize {
        self.train_features.len()
    }

    pub fn normalized_training(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn normalize(&self, raw: &FeatureVector) -> Result<Vec<f64>, KnnError> {
        if raw.values.len() != self.normalization.dim() {
            return Err(KnnError::DimensionMismatch { expected: self.normalization.dim(), found: raw.values.len() });
        }
        Ok(self.normalization.apply_values(&raw.values))
    }

    /// The `k` training instances closest to a normalized query, ordered by
    /// (distance, instance id).
    pub fn nearest_neighbors(&self, normalized: &[f64], k: usize) -> Result<Vec<&str>, KnnError> {
        Ok(self.neighbor_indices(normalized, k)?.into_iter().map(|i| self.par10.instances[i].as_str()).collect())
    }

    pub fn neighbor_indices(&self, normalized: &[f64], k: usize) -> Result<Vec<usize>, KnnError> {
        if normalized.len() != self.normalization.dim() {
            return Err(KnnError::DimensionMismatch { expected: self.normalization.dim(), found: normalized.len() });
        }
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > self.num_training() {
            return Err(KnnError::KTooLarge { k, available: self.num_training() });
        }
        let hits =
            nearest(&self.normalized, &self.par10.instances, 0..self.num_training(), normalized, k, self.distance);
        Ok(hits.into_iter().map(|(_, i)| i).collect())
    }

    /// Solver with the smallest PAR10 sum over the `k` neighbors of a
    /// normalized query.
    pub fn select_solver(&self, normalized: &[f64]) -> Result<&str, KnnError> {
        let neighbors = self.neighbor_indices(normalized, self.k)?;
        let s = best_solver_on(&self.par10, neighbors.iter().copied());
        Ok(&self.par10.solvers[s])
    }

    /// Normalizes raw features with the model's parameters, then selects.
    pub fn select_for(&self, raw: &FeatureVector) -> Result<&str, KnnError> {
        let q = self.normalize(raw)?;
        self.select_solver(&q)
    }

    pub fn to_json(&self) -> Result<String, KnnError> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            catalog_version: self.catalog_version.clone(),
            k: self.k,
            distance: self.distance,
            seed: self.seed,
            cv_objective_ms: self.cv_objective_ms,
            solver_ids: self.par10.solvers.clone(),
            normalization: self.normalization.clone(),
            train_features: self.train_features.clone(),
            par10: self.par10.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, KnnError> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(KnnError::FormatVersion(file.format_version));
        }
        let aligned = align_features(&file.train_features, &file.par10)?;
        let normalized = aligned.iter().map(|f| file.normalization.apply_values(&f.values)).collect();
        Ok(PortfolioModel {
            k: file.k,
            distance: file.distance,
            catalog_version: file.catalog_version,
            normalization: file.normalization,
            train_features: aligned,
            par10: file.par10,
            seed: file.seed,
            cv_objective_ms: file.cv_objective_ms,
            normalized,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnnError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    catalog_version: String,
    k: usize,
    distance: Distance,
    seed: u64,
    cv_objective_ms: u64,
    solver_ids: Vec<String>,
    normalization: NormalizationParams,
    train_features: Vec<FeatureVector>,
    par10: Par10Table,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i:03}")).collect()
    }

    #[test]
    fn distance_axioms_on_fixed_points() {
        let a = [0.0, 0.5, 1.0];
        let b = [1.0, 0.5, 0.0];
        for d in Distance::ALL {
            assert_eq!(d.eval(&a, &a), 0.0);
            assert_eq!(d.eval(&a, &b), d.eval(&b, &a));
        }
        assert_eq!(Distance::Manhattan.eval(&a, &b), 2.0);
        assert_eq!(Distance::Chebyshev.eval(&a, &b), 1.0);
        assert_eq!(Distance::Canberra.eval(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!("Canberra".parse::<Distance>().unwrap(), Distance::Canberra);
        assert!("cosine".parse::<Distance>().is_err());
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let v = ids(23);
        let p = FoldPartition::new(&v, 7);
        let sizes = p.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(p, FoldPartition::new(&v, 7));
        assert_ne!(p, FoldPartition::new(&v, 8));
    }

    #[test]
    fn neighbor_ties_break_by_id() {
        let pts = vec![vec![1.0], vec![1.0], vec![0.0]];
        let names = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        let hits = nearest(&pts, &names, 0..3, &[0.5], 3, Distance::Euclidean);
        let order: Vec<&str> = hits.iter().map(|&(_, i)| names[i].as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn single_dominant_solver_grid_ties_to_smallest() {
        let n = 12;
        let names = ids(n);
        let rows = (0..n).map(|i| vec![1000 + i as u64, 50_000]).collect();
        let t = Par10Table::from_rows(names.clone(), vec!["a".into(), "b".into()], rows, 5_000);
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let folds = FoldPartition::new(&names, 1).folds_for(&names);
        let g = grid_search(&pts, &t, &folds, &(1..=20).collect::<Vec<_>>(), &Distance::ALL).unwrap();
        assert_eq!((g.k, g.distance), (1, Distance::Euclidean));
        // k above the smallest training part (12 - 3 = 9) is skipped
        assert_eq!(g.cells.iter().map(|c| c.k).max(), Some(9));
    }

    #[test]
    fn too_few_instances() {
        let names = ids(4);
        let t = Par10Table::from_rows(names.clone(), vec!["a".into()], vec![vec![1]; 4], 10);
        let pts = vec![vec![0.0]; 4];
        assert!(matches!(
            grid_search(&pts, &t, &[0, 1, 2, 3], &[1], &Distance::ALL),
            Err(KnnError::TooFewInstances(4))
        ));
    }

    #[test]
    fn model_errors() {
        let names = ids(6);
        let t = Par10Table::from_rows(names.clone(), vec!["a".into()], vec![vec![1]; 6], 10);
        let feats: Vec<FeatureVector> =
            names.iter().map(|id| FeatureVector { instance_id: id.clone(), values: vec![0.0] }).collect();
        let m = PortfolioModel::with_params(&feats, &t, "x", 3, Distance::Euclidean).unwrap();
        assert!(matches!(m.nearest_neighbors(&[0.0], 7), Err(KnnError::KTooLarge { .. })));
        assert!(matches!(m.nearest_neighbors(&[0.0, 1.0], 1), Err(KnnError::DimensionMismatch { .. })));
        assert!(matches!(
            PortfolioModel::with_params(&feats[..5], &t, "x", 3, Distance::Euclidean),
            Err(KnnError::MissingFeatures(_))
        ));
    }
}
