//! Extracts the built-in feature vector from instance files (or a bundled
//! toy instance) and prints it as CSV.

use std::path::PathBuf;

use csp_portfolio::csp::parse_instance_with_id;
use csp_portfolio::features::{extract_features, write_feature_csv, FeatureCatalog};
use csp_portfolio::runner::instance_id;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        paths.push(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy/instances/ad01.csp"));
    }
    let catalog = FeatureCatalog::builtin();
    let mut vectors = Vec::new();
    for p in &paths {
        let inst = parse_instance_with_id(&std::fs::read(p)?, &instance_id(p))?;
        vectors.push(extract_features(&inst));
    }
    for (name, v) in catalog.names.iter().zip(&vectors[0].values).filter(|(_, v)| **v != 0.0) {
        eprintln!("{:>28} {v}", name);
    }
    write_feature_csv(std::io::stdout().lock(), &catalog, &vectors)?;
    Ok(())
}
