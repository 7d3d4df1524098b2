//! Runs the bundled toy solvers on the toy instances with a short timeout,
//! then short-trains on live runs.

use std::path::PathBuf;

use csp_portfolio::csp::parse_instance_with_id;
use csp_portfolio::features::{extract_features, FeatureCatalog};
use csp_portfolio::knn::TrainConfig;
use csp_portfolio::runner::{instance_id, load_solver_configs, LiveRunner};
use csp_portfolio::short_train::{short_train_run, ShortTrainPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(toy.join("instances"))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    paths.sort();
    let solvers = load_solver_configs(toy.join("solvers.json"))?;
    let runner = LiveRunner::new(&paths, solvers, 8, true)?;

    let started = std::time::Instant::now();
    let matrix = runner.run_all(1_000)?;
    println!("matrix at 1 s: {} solved pairs in {:.1} s wall", matrix.solved_pairs(), started.elapsed().as_secs_f64());

    let features = paths
        .iter()
        .map(|p| Ok(extract_features(&parse_instance_with_id(&std::fs::read(p)?, &instance_id(p))?)))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let plan = ShortTrainPlan {
        prep_timeout_ms: 300,
        exploit_timeout_ms: 1_000,
        corpus: runner.instance_ids(),
        solvers: runner.solver_ids(),
    };
    let config = TrainConfig { k_values: (1..=5).collect(), ..TrainConfig::default() };
    let report = short_train_run(&plan, &FeatureCatalog::builtin(), &features, &runner, &config)?;
    println!(
        "short training: {} solved ({} in preparation), k={} {}, total {:.1} s",
        report.solved_count,
        report.solved_in_preparation,
        report.k,
        report.distance,
        report.total_time_ms as f64 / 1000.0
    );
    for o in &report.instances {
        let phase = o.solved_in.map_or("unsolved".to_string(), |p| format!("{p:?}").to_lowercase());
        println!("  {:<5} {:<6} {phase}", o.instance_id, o.selected.as_deref().unwrap_or("-"));
    }
    Ok(())
}
