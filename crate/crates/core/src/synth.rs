//! Seeded synthetic corpora: clustered instances whose best solver depends on
//! the cluster, for simulation when no measured matrix is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureCatalog, FeatureVector, EXTERNAL_CATALOG_VERSION};
use crate::perf::{RunRecord, RunStatus, RuntimeMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub instances: usize,
    pub solvers: usize,
    pub clusters: usize,
    pub features: usize,
    pub timeout_ms: u64,
    /// Difficulty (log seconds) is uniform on this range.
    pub difficulty: (f64, f64),
    /// Log-runtime penalty of a specialist outside its cluster.
    pub off_cluster_penalty: f64,
    /// Log-runtime penalty of the generalist everywhere.
    pub generalist_penalty: f64,
    pub noise: f64,
    pub crash_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            instances: 500,
            solvers: 6,
            clusters: 5,
            features: 8,
            timeout_ms: 600_000,
            difficulty: (-3.0, 7.5),
            off_cluster_penalty: 2.5,
            generalist_penalty: 1.0,
            noise: 0.6,
            crash_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub catalog: FeatureCatalog,
    pub features: Vec<FeatureVector>,
    pub matrix: RuntimeMatrix,
    /// Cluster of each instance, aligned with `matrix.instances()`.
    pub clusters: Vec<usize>,
}

/// Generates a corpus.
///
/// Solver `s < clusters` is a specialist for cluster `s`; the remaining
/// solvers are generalists. The log runtime (seconds) of a run is the
/// instance difficulty plus the solver's penalty for that cluster plus
/// Gaussian noise; runs beyond the timeout are timeouts. Features are a noisy
/// cluster centroid and say nothing about difficulty.
pub fn synthetic_corpus(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters = cfg.clusters.max(1);
    let centroids: Vec<Vec<f64>> =
        (0..clusters).map(|_| (0..cfg.features).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
    let feature_noise = Normal::new(0.0, 0.8).expect("valid sigma");
    let run_noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("valid sigma");

    let instances: Vec<String> = (0..cfg.instances).map(|i| format!("syn-{i:04}")).collect();
    let solvers: Vec<String> = (0..cfg.solvers).map(|s| format!("solver-{s}")).collect();
    let mut features = Vec::with_capacity(cfg.instances);
    let mut cluster_of = Vec::with_capacity(cfg.instances);
    let mut records = Vec::with_capacity(cfg.instances * cfg.solvers);
    for id in &instances {
        let c = rng.random_range(0..clusters);
        let d = rng.random_range(cfg.difficulty.0..cfg.difficulty.1);
        let values = (0..cfg.features).map(|f| centroids[c][f] + feature_noise.sample(&mut rng)).collect();
        features.push(FeatureVector { instance_id: id.clone(), values });
        cluster_of.push(c);

        for (s, solver) in solvers.iter().enumerate() {
            let penalty = match s {
                s if s >= clusters => cfg.generalist_penalty,
                s if s == c => 0.0,
                _ => cfg.off_cluster_penalty,
            };
            let log_s = d + penalty + run_noise.sample(&mut rng);
            let runtime_ms = ((log_s.exp() * 1000.0).round() as u64).max(1);
            let crash = rng.random_bool(cfg.crash_rate.clamp(0.0, 1.0));
            let (status, runtime_ms) = if runtime_ms > cfg.timeout_ms {
                (RunStatus::Timeout, cfg.timeout_ms)
            } else if crash {
                (RunStatus::Crashed, rng.random_range(1..=runtime_ms))
            } else {
                (RunStatus::Solved, runtime_ms)
            };
            records.push(RunRecord { instance_id: id.clone(), solver_id: solver.clone(), status, runtime_ms });
        }
    }
    let matrix =
        RuntimeMatrix::from_records(instances, solvers, records, cfg.timeout_ms).expect("generated matrix is complete");
    let catalog = FeatureCatalog {
        version: EXTERNAL_CATALOG_VERSION.to_string(),
        names: (0..cfg.features).map(|f| format!("f{f}")).collect(),
    };
    SynthCorpus { catalog, features, matrix, clusters: cluster_of }
}
