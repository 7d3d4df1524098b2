//! Trains the k-NN selector on a synthetic corpus, shows the grid-search
//! winner and a few held-out selections.

use csp_portfolio::knn::{train, TrainConfig};
use csp_portfolio::synth::{synthetic_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synthetic_corpus(&SynthConfig { instances: 240, seed: 3, ..SynthConfig::default() });
    let (train_ids, query_ids) = corpus.matrix.instances().split_at(200);
    let train_matrix = corpus.matrix.select_instances(train_ids)?;
    let par10 = train_matrix.par10_table(train_matrix.measured_timeout_ms())?;

    let (model, grid) = train(&corpus.features, &par10, &corpus.catalog.version, &TrainConfig::default())?;
    println!("grid winner: k={} distance={} cv par10 {} s", grid.k, grid.distance, grid.objective_ms / 1000);
    let mut worst = grid.cells.clone();
    worst.sort_by_key(|c| std::cmp::Reverse(c.objective_ms));
    println!(
        "worst cell:  k={} distance={} cv par10 {} s",
        worst[0].k,
        worst[0].distance,
        worst[0].objective_ms / 1000
    );

    for id in query_ids.iter().take(8) {
        let i = corpus.matrix.instance_index(id).expect("known id");
        let q = model.normalize(&corpus.features[i])?;
        let chosen = model.select_solver(&q)?;
        let neighbors = model.nearest_neighbors(&q, 3)?;
        println!("{id} (cluster {}): {chosen}  nearest {}", corpus.clusters[i], neighbors.join(","));
    }
    Ok(())
}
