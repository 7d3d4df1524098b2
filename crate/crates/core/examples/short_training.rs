//! Timeout sweep on a synthetic clustered corpus: short training versus
//! cross-validated evaluation, with best-fixed and oracle reference lines.

use csp_portfolio::knn::TrainConfig;
use csp_portfolio::perf::format_ms;
use csp_portfolio::short_train::{timeout_sweep, SweepMode};
use csp_portfolio::synth::{synthetic_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let corpus = synthetic_corpus(&SynthConfig { seed, ..SynthConfig::default() });
    let timeouts: Vec<u64> = [1, 5, 10, 30, 60, 600].iter().map(|s| s * 1000).collect();
    let config = TrainConfig { seed, ..TrainConfig::default() };

    let short =
        timeout_sweep(&corpus.matrix, &corpus.catalog, &corpus.features, &timeouts, SweepMode::ShortTraining, &config)?;
    let cv = timeout_sweep(
        &corpus.matrix,
        &corpus.catalog,
        &corpus.features,
        &timeouts,
        SweepMode::CrossValidation,
        &config,
    )?;

    println!("best fixed solves {}, oracle solves {}", short.best_fixed.solved_count, short.oracle.solved_count);
    println!("{:>9} {:>7} {:>7} {:>12} {:>12}", "timeout_s", "short", "cv", "prep_s", "exploit_s");
    for (s, c) in short.points.iter().zip(&cv.points) {
        println!(
            "{:>9} {:>7} {:>7} {:>12} {:>12}",
            format_ms(s.solving_timeout_ms),
            s.solved_count,
            c.solved_count,
            format_ms(s.prep_train_ms),
            format_ms(s.exploitation_ms)
        );
    }
    let mut csv = Vec::new();
    short.write_csv(&mut csv)?;
    print!("\n{}", String::from_utf8(csv)?);
    Ok(())
}
