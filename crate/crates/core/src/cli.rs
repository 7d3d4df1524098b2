//! Command-line front end. Exit codes: 0 on success, 1 on usage errors,
//! 2 on data errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::compare::{compare_methods, fixed_methods, Comparison};
use crate::csp::parse_instance_with_id;
use crate::features::{
    extract_features, load_feature_csv, write_feature_csv, FeatureCatalog, FeatureVector, CATALOG_VERSION,
};
use crate::knn::{train, Distance, PortfolioModel, TrainConfig};
use crate::perf::{format_ms, parse_secs, RuntimeMatrix};
use crate::runner::{instance_id, load_solver_configs, LiveRunner};
use crate::short_train::{short_train_run, timeout_sweep, EvaluationReport, ShortTrainPlan, SweepMode};

#[derive(Debug, Parser)]
#[command(name = "csp-portfolio", version, about = "k-NN solver selection for finite linear CSPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the built-in feature catalog.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract features from instance files (directories are scanned for *.csp).
    ExtractFeatures {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        instances: Vec<PathBuf>,
    },
    /// Run every solver on every instance and write a runtime matrix.
    Run {
        /// JSON list of solver configurations.
        #[arg(long)]
        solvers: PathBuf,
        /// Wall-clock timeout per run, in seconds.
        #[arg(long, value_parser = secs_arg)]
        timeout: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Check models printed as `v name=value` lines against the instance.
        #[arg(long)]
        validate_models: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        instances: Vec<PathBuf>,
    },
    /// Train a selector model from features and a runtime matrix.
    Train {
        #[arg(long)]
        features_csv: PathBuf,
        #[arg(long)]
        matrix_csv: PathBuf,
        /// Training timeout in seconds (defaults to the measurement timeout).
        #[arg(long, value_parser = secs_arg)]
        timeout: Option<u64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the solver selected for one instance.
    Select {
        #[arg(long)]
        model: PathBuf,
        /// Instance file; its features are extracted on the fly.
        #[arg(long, conflicts_with_all = ["features_csv", "id"])]
        instance: Option<PathBuf>,
        /// Precomputed features (with --id).
        #[arg(long, requires = "id")]
        features_csv: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Short training: prepare with a short timeout, exploit with a long one.
    ShortTrain {
        /// Preparation timeout in seconds.
        #[arg(long, value_parser = secs_arg)]
        prep_timeout: u64,
        /// Exploitation timeout in seconds.
        #[arg(long, value_parser = secs_arg)]
        timeout: u64,
        #[arg(long)]
        features_csv: Option<PathBuf>,
        /// Simulate from a recorded matrix instead of running solvers.
        #[arg(long, conflicts_with_all = ["solvers", "instances"])]
        matrix_csv: Option<PathBuf>,
        #[arg(long, requires = "instances")]
        solvers: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Count feature extraction time as preparation time.
        #[arg(long)]
        include_feature_time: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
        instances: Vec<PathBuf>,
    },
    /// Solved-count and time curve over preparation timeouts (simulated).
    Sweep {
        /// `short` or `cv`.
        #[arg(long)]
        mode: SweepMode,
        /// Comma-separated timeouts in seconds.
        #[arg(long, value_delimiter = ',', value_parser = secs_arg, required = true)]
        timeouts: Vec<u64>,
        #[arg(long)]
        features_csv: PathBuf,
        #[arg(long)]
        matrix_csv: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare methods on a runtime matrix and summarize a short-training report.
    Report {
        #[arg(long)]
        matrix_csv: PathBuf,
        /// With features, cross-validated k-NN, SUNNY and ridge are compared too.
        #[arg(long)]
        features_csv: Option<PathBuf>,
        /// Report written by `short-train`.
        #[arg(long)]
        short_train: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidate k values: `lo-hi` or a comma-separated list.
    #[arg(long, default_value = "1-20", value_parser = k_range_arg)]
    k_range: KRange,
    /// Comma-separated distance names.
    #[arg(long, value_delimiter = ',', default_value = "euclidean,manhattan,chebyshev,canberra")]
    distances: Vec<Distance>,
}

#[derive(Debug, Clone)]
struct KRange(Vec<usize>);

impl GridArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig { k_values: self.k_range.0.clone(), distances: self.distances.clone(), seed: self.seed }
    }
}

fn secs_arg(s: &str) -> Result<u64, String> {
    match parse_secs(s) {
        Some(ms) if ms > 0 => Ok(ms),
        _ => Err(format!("expected a positive number of seconds, got {s:?}")),
    }
}

fn k_range_arg(s: &str) -> Result<KRange, String> {
    let bad = || format!("expected lo-hi or a list of positive integers, got {s:?}");
    let ks: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        s.split(',').map(|k| k.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(KRange(ks))
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Catalog { out } => write_output(out.as_deref(), FeatureCatalog::builtin().dump().as_bytes()),
        Command::ExtractFeatures { out, instances } => {
            let files = expand_instances(&instances)?;
            let (vectors, _) = extract_all(&files)?;
            let mut buf = Vec::new();
            write_feature_csv(&mut buf, &FeatureCatalog::builtin(), &vectors)?;
            write_output(Some(&out), &buf)
        }
        Command::Run { solvers, timeout, parallelism, validate_models, out, instances } => {
            let files = expand_instances(&instances)?;
            let runner = LiveRunner::new(
                &files,
                load_solver_configs(&solvers)
                    .with_context(|| format!("loading solver configs {}", solvers.display()))?,
                parallelism,
                validate_models,
            )?;
            let matrix = runner.run_all(timeout)?;
            matrix.save_csv(&out)?;
            Ok(())
        }
        Command::Train { features_csv, matrix_csv, timeout, grid, out } => {
            let (catalog, features) = load_features(&features_csv)?;
            let matrix = load_matrix(&matrix_csv)?;
            let par10 = matrix.par10_table(timeout.unwrap_or(matrix.measured_timeout_ms()))?;
            let (model, _) = train(&features, &par10, &catalog.version, &grid.config())?;
            write_output(Some(&out), model.to_json()?.as_bytes())
        }
        Command::Select { model, instance, features_csv, id } => {
            if instance.is_none() && (features_csv.is_none() || id.is_none()) {
                return Err(usage("select needs --instance or --features-csv with --id"));
            }
            let model = PortfolioModel::load(&model).with_context(|| format!("loading model {}", model.display()))?;
            let raw = match (instance, features_csv, id) {
                (Some(path), _, _) => {
                    if model.catalog_version != CATALOG_VERSION {
                        bail!(
                            "model was trained on '{}' features; instance files need '{CATALOG_VERSION}'",
                            model.catalog_version
                        );
                    }
                    extract_all(&[path])?.0.remove(0)
                }
                (None, Some(csv), Some(id)) => {
                    let (_, vectors) = load_features(&csv)?;
                    vectors.into_iter().find(|v| v.instance_id == id).ok_or_else(|| anyhow!("no features for {id}"))?
                }
                _ => return Err(usage("select needs --instance or --features-csv with --id")),
            };
            println!("{}", model.select_for(&raw)?);
            Ok(())
        }
        Command::ShortTrain {
            prep_timeout,
            timeout,
            features_csv,
            matrix_csv,
            solvers,
            parallelism,
            include_feature_time,
            grid,
            out,
            instances,
        } => {
            let report = match (matrix_csv, solvers) {
                (Some(matrix_csv), None) => {
                    let features_csv = features_csv.ok_or_else(|| usage("--matrix-csv needs --features-csv"))?;
                    let (catalog, features) = load_features(&features_csv)?;
                    let matrix = load_matrix(&matrix_csv)?;
                    let plan = ShortTrainPlan::for_matrix(&matrix, prep_timeout, timeout);
                    short_train_run(&plan, &catalog, &features, &matrix, &grid.config())?
                }
                (None, Some(solvers)) => {
                    let files = expand_instances(&instances)?;
                    let (catalog, features, feature_ms) = match features_csv {
                        Some(path) => {
                            let (c, f) = load_features(&path)?;
                            (c, f, None)
                        }
                        None => {
                            let (f, ms) = extract_all(&files)?;
                            (FeatureCatalog::builtin(), f, Some(ms))
                        }
                    };
                    let runner = LiveRunner::new(
                        &files,
                        load_solver_configs(&solvers)
                            .with_context(|| format!("loading solver configs {}", solvers.display()))?,
                        parallelism,
                        false,
                    )?;
                    let plan = ShortTrainPlan {
                        prep_timeout_ms: prep_timeout,
                        exploit_timeout_ms: timeout,
                        corpus: runner.instance_ids(),
                        solvers: runner.solver_ids(),
                    };
                    let mut report = short_train_run(&plan, &catalog, &features, &runner, &grid.config())?;
                    if include_feature_time {
                        let ms =
                            feature_ms.ok_or_else(|| usage("--include-feature-time needs features extracted here"))?;
                        report.include_feature_time(ms);
                    }
                    report
                }
                _ => return Err(usage("short-train needs --matrix-csv or --solvers with instance files")),
            };
            report.save(&out)?;
            eprintln!(
                "solved {}/{} ({} in preparation), prep {} s, exploitation {} s",
                report.solved_count,
                report.num_instances,
                report.solved_in_preparation,
                format_ms(report.prep_time_ms),
                format_ms(report.exploit_time_ms)
            );
            Ok(())
        }
        Command::Sweep { mode, timeouts, features_csv, matrix_csv, grid, out } => {
            let (catalog, features) = load_features(&features_csv)?;
            let matrix = load_matrix(&matrix_csv)?;
            let curve = timeout_sweep(&matrix, &catalog, &features, &timeouts, mode, &grid.config())?;
            curve.save_csv(&out)?;
            Ok(())
        }
        Command::Report { matrix_csv, features_csv, short_train, seed, out } => {
            let matrix = load_matrix(&matrix_csv)?;
            let comparison = match features_csv {
                Some(path) => {
                    let (catalog, features) = load_features(&path)?;
                    let config = TrainConfig { seed, ..TrainConfig::default() };
                    compare_methods(&matrix, &catalog, &features, &config)?
                }
                None => {
                    let par10 = matrix.par10_table(matrix.measured_timeout_ms())?;
                    Comparison {
                        timeout_ms: matrix.measured_timeout_ms(),
                        num_instances: par10.num_instances(),
                        num_solvers: par10.num_solvers(),
                        methods: fixed_methods(&par10)?,
                    }
                }
            };
            let short = short_train
                .map(|p| EvaluationReport::load(&p).with_context(|| format!("loading report {}", p.display())))
                .transpose()?;
            print_report(&comparison, short.as_ref());
            if let Some(out) = out {
                let json =
                    serde_json::json!({ "comparison": comparison, "short_train": short.map(|r| r.sweep_point()) });
                write_output(Some(&out), format!("{}\n", serde_json::to_string_pretty(&json)?).as_bytes())?;
            }
            Ok(())
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: &str) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("usage error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            2
        }
    }
}

/// The error and its causes, leaving out causes whose text an outer message
/// already includes.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn print_report(c: &Comparison, short: Option<&EvaluationReport>) {
    println!("{} instances, {} solvers, timeout {} s", c.num_instances, c.num_solvers, format_ms(c.timeout_ms));
    println!("{:<28} {:>8} {:>16}", "method", "solved", "par10_total_s");
    for m in &c.methods {
        println!("{:<28} {:>8} {:>16}", m.method, m.solved_count, format_ms(m.par10_total_ms));
    }
    if let Some(r) = short {
        println!(
            "{:<28} {:>8}   prep {} s + exploitation {} s = {} s",
            format!("short_train({} s)", format_ms(r.prep_timeout_ms)),
            r.solved_count,
            format_ms(r.prep_time_ms),
            format_ms(r.exploit_time_ms),
            format_ms(r.total_time_ms)
        );
    }
}

fn load_matrix(path: &Path) -> anyhow::Result<RuntimeMatrix> {
    RuntimeMatrix::load_csv(path).with_context(|| format!("loading matrix {}", path.display()))
}

fn load_features(path: &Path) -> anyhow::Result<(FeatureCatalog, Vec<FeatureVector>)> {
    load_feature_csv(path).with_context(|| format!("loading features {}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing stdout"),
    }
}

/// Files as given; directories contribute their `*.csp` files, sorted.
fn expand_instances(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "csp"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no instance files");
    }
    Ok(files)
}

/// Features of each file plus the total extraction time in milliseconds.
fn extract_all(files: &[PathBuf]) -> anyhow::Result<(Vec<FeatureVector>, u64)> {
    let started = Instant::now();
    let vectors = files
        .iter()
        .map(|f| {
            let text = std::fs::read(f).with_context(|| format!("reading {}", f.display()))?;
            let inst =
                parse_instance_with_id(&text, &instance_id(f)).with_context(|| format!("parsing {}", f.display()))?;
            Ok(extract_features(&inst))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((vectors, started.elapsed().as_millis() as u64))
}
