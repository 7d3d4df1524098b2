//! Oracle, fixed solvers, k-NN, SUNNY-like schedules and ridge regression
//! compared on one synthetic corpus.

use csp_portfolio::compare::compare_methods;
use csp_portfolio::knn::TrainConfig;
use csp_portfolio::synth::{synthetic_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let corpus = synthetic_corpus(&SynthConfig { instances: 300, seed, ..SynthConfig::default() });
    let config = TrainConfig { seed, ..TrainConfig::default() };
    let cmp = compare_methods(&corpus.matrix, &corpus.catalog, &corpus.features, &config)?;
    println!("{} instances, {} solvers, timeout {} s", cmp.num_instances, cmp.num_solvers, cmp.timeout_ms / 1000);
    println!("{:<22} {:>7} {:>14}", "method", "solved", "par10_s");
    for m in &cmp.methods {
        println!("{:<22} {:>7} {:>14}", m.method, m.solved_count, m.par10_total_ms / 1000);
    }
    Ok(())
}
