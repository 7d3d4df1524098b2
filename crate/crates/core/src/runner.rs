//! Runs external solver commands under a wall-clock timeout.
//!
//! Each run gets its own process group, killed as a whole when the timeout
//! expires or the command exits, so solver back ends cannot outlive the
//! measurement. Runs are spread over a fixed-size thread pool; results are
//! assembled in plan order, so the matrix does not depend on the parallelism.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csp::{check_assignment, parse_instance, Assignment};
use crate::perf::{format_ms, PerfError, RunRecord, RunStatus, RuntimeMatrix};
use crate::short_train::{RunSource, ShortTrainError};

/// Environment variable naming the directory for per-run scratch space.
pub const TMPDIR_ENV: &str = "PORTFOLIO_TMPDIR";

const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("solver config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// How a solver reports an answer. A run is solved when stdout matches one of
/// the regexes or the exit code equals `exit_code`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnswerParser {
    #[serde(default)]
    pub exit_code: Option<i32>,
    #[serde(default)]
    pub stdout_regex_sat: Option<String>,
    #[serde(default)]
    pub stdout_regex_unsat: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub solver_id: String,
    /// Shell command. `{instance}` and `{timeout_s}` are replaced by the
    /// quoted instance path and the timeout in seconds.
    pub command_template: String,
    #[serde(default)]
    pub answer_parser: AnswerParser,
}

struct CompiledSolver {
    config: SolverConfig,
    sat: Option<Regex>,
    unsat: Option<Regex>,
}

impl CompiledSolver {
    fn new(config: SolverConfig) -> Result<Self, RunnerError> {
        if !config.command_template.contains("{instance}") {
            return Err(RunnerError::Config(format!("{}: command_template lacks {{instance}}", config.solver_id)));
        }
        let compile = |re: &Option<String>| {
            re.as_deref()
                .map(Regex::new)
                .transpose()
                .map_err(|e| RunnerError::Config(format!("{}: {e}", config.solver_id)))
        };
        let sat = compile(&config.answer_parser.stdout_regex_sat)?;
        let unsat = compile(&config.answer_parser.stdout_regex_unsat)?;
        if sat.is_none() && unsat.is_none() && config.answer_parser.exit_code.is_none() {
            return Err(RunnerError::Config(format!("{}: answer_parser recognizes nothing", config.solver_id)));
        }
        Ok(CompiledSolver { config, sat, unsat })
    }

    fn command_line(&self, instance: &Path, timeout_ms: u64) -> String {
        self.config
            .command_template
            .replace("{instance}", &shell_quote(&instance.to_string_lossy()))
            .replace("{timeout_s}", &format_ms(timeout_ms))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Reads a JSON list of solver configs. `{config_dir}` in a command template
/// becomes the directory of the config file.
pub fn load_solver_configs(path: impl AsRef<Path>) -> Result<Vec<SolverConfig>, RunnerError> {
    let path = path.as_ref();
    let mut configs: Vec<SolverConfig> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let dir = std::fs::canonicalize(dir)?;
    for c in &mut configs {
        c.command_template = c.command_template.replace("{config_dir}", &shell_quote(&dir.to_string_lossy()));
    }
    Ok(configs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPlan {
    pub instances: Vec<PathBuf>,
    pub solvers: Vec<SolverConfig>,
    pub timeout_ms: u64,
    pub parallelism: usize,
    /// Check `v name=value` model lines of satisfiable answers against the
    /// instance; a model that fails becomes a wrong answer.
    pub validate_models: bool,
}

/// Instance id of a file: its name without the extension.
pub fn instance_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.to_string_lossy().into_owned(), |s| s.to_string_lossy().into_owned())
}

/// Executes solver commands on instance files.
pub struct LiveRunner {
    instances: Vec<(String, PathBuf)>,
    solvers: Vec<CompiledSolver>,
    pool: rayon::ThreadPool,
    validate_models: bool,
}

impl LiveRunner {
    pub fn new(
        instances: &[PathBuf],
        solvers: Vec<SolverConfig>,
        parallelism: usize,
        validate_models: bool,
    ) -> Result<Self, RunnerError> {
        if parallelism == 0 {
            return Err(RunnerError::Plan("parallelism must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &solvers {
            if !ids.insert(s.solver_id.clone()) {
                return Err(RunnerError::Config(format!("duplicate solver id {}", s.solver_id)));
            }
        }
        if solvers.is_empty() {
            return Err(RunnerError::Config("no solvers".into()));
        }
        let mut seen = BTreeSet::new();
        let instances: Vec<(String, PathBuf)> = instances
            .iter()
            .map(|p| {
                let id = instance_id(p);
                if !seen.insert(id.clone()) {
                    return Err(RunnerError::Plan(format!("two instance files share the id {id}")));
                }
                Ok((id, p.clone()))
            })
            .collect::<Result<_, _>>()?;
        let solvers = solvers.into_iter().map(CompiledSolver::new).collect::<Result<Vec<_>, _>>()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| RunnerError::Pool(e.to_string()))?;
        Ok(LiveRunner { instances, solvers, pool, validate_models })
    }

    pub fn instance_ids(&self) -> Vec<String> {
        self.instances.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn solver_ids(&self) -> Vec<String> {
        self.solvers.iter().map(|s| s.config.solver_id.clone()).collect()
    }

    /// Runs the given (instance index, solver index) pairs; records come back
    /// in the same order.
    fn run_indexed(&self, pairs: &[(usize, usize)], timeout_ms: u64) -> Vec<RunRecord> {
        self.pool.install(|| {
            pairs
                .par_iter()
                .map(|&(i, s)| {
                    let (id, path) = &self.instances[i];
                    let solver = &self.solvers[s];
                    let mut rec = run_one(solver, path, timeout_ms);
                    if self.validate_models && rec.status == RunStatus::Solved {
                        if let Some(false) = rec_model_ok(&rec, path) {
                            rec.status = RunStatus::WrongAnswer;
                        }
                    }
                    RunRecord {
                        instance_id: id.clone(),
                        solver_id: solver.config.solver_id.clone(),
                        status: rec.status,
                        runtime_ms: rec.runtime_ms,
                    }
                })
                .collect()
        })
    }

    /// Every solver on every instance.
    pub fn run_all(&self, timeout_ms: u64) -> Result<RuntimeMatrix, RunnerError> {
        if timeout_ms == 0 {
            return Err(RunnerError::Plan("timeout must be positive".into()));
        }
        let pairs: Vec<(usize, usize)> =
            (0..self.instances.len()).flat_map(|i| (0..self.solvers.len()).map(move |s| (i, s))).collect();
        let records = self.run_indexed(&pairs, timeout_ms);
        Ok(RuntimeMatrix::from_records(self.instance_ids(), self.solver_ids(), records, timeout_ms)?)
    }
}

impl RunSource for LiveRunner {
    fn run_pairs(&self, pairs: &[(String, String)], timeout_ms: u64) -> Result<Vec<RunRecord>, ShortTrainError> {
        let inst: HashMap<&str, usize> =
            self.instances.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
        let solv: HashMap<&str, usize> =
            self.solvers.iter().enumerate().map(|(s, c)| (c.config.solver_id.as_str(), s)).collect();
        let indexed = pairs
            .iter()
            .map(|(i, s)| {
                let i = *inst.get(i.as_str()).ok_or_else(|| PerfError::UnknownInstance(i.clone()))?;
                let s = *solv.get(s.as_str()).ok_or_else(|| PerfError::UnknownSolver(s.clone()))?;
                Ok((i, s))
            })
            .collect::<Result<Vec<_>, PerfError>>()?;
        Ok(self.run_indexed(&indexed, timeout_ms))
    }
}

/// Runs a whole plan into a complete matrix. Commands that cannot be
/// started or that fail produce crashed records; the matrix is always
/// complete.
pub fn run_all(plan: &RunPlan) -> Result<RuntimeMatrix, RunnerError> {
    LiveRunner::new(&plan.instances, plan.solvers.clone(), plan.parallelism, plan.validate_models)?
        .run_all(plan.timeout_ms)
}

struct RawRun {
    status: RunStatus,
    runtime_ms: u64,
    stdout: String,
}

fn rec_model_ok(rec: &RawRun, path: &Path) -> Option<bool> {
    let model = parse_model(&rec.stdout)?;
    let inst = parse_instance(&std::fs::read(path).ok()?).ok()?;
    Some(check_assignment(&inst, &model).unwrap_or(false))
}

/// Collects `v name=value ...` lines. Values `true`/`false` bind Boolean
/// variables, integers bind integer variables.
fn parse_model(stdout: &str) -> Option<Assignment> {
    let mut a = Assignment::new();
    let mut any = false;
    for line in stdout.lines().filter_map(|l| l.strip_prefix("v ")) {
        for tok in line.split_whitespace() {
            let (name, value) = tok.split_once('=')?;
            if value == "true" || value == "false" {
                a.bool_values.insert(name.to_string(), value == "true");
            } else {
                a.int_values.insert(name.to_string(), value.parse().ok()?);
            }
            any = true;
        }
    }
    any.then_some(a)
}

fn kill_group(child: &Child) {
    // the child leads its own process group
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
}

fn run_one(solver: &CompiledSolver, instance: &Path, timeout_ms: u64) -> RawRun {
    let crashed = |runtime_ms| RawRun { status: RunStatus::Crashed, runtime_ms, stdout: String::new() };
    let scratch = match std::env::var_os(TMPDIR_ENV) {
        Some(dir) => tempfile::Builder::new().prefix("run-").tempdir_in(dir),
        None => tempfile::Builder::new().prefix("run-").tempdir(),
    };
    let Ok(scratch) = scratch else { return crashed(0) };
    let instance = std::fs::canonicalize(instance).unwrap_or_else(|_| instance.to_path_buf());

    let mut cmd = Command::new("/bin/sh");
    cmd.arg("-c")
        .arg(solver.command_line(&instance, timeout_ms))
        .current_dir(scratch.path())
        .env("TMPDIR", scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0);
    let start = Instant::now();
    let Ok(mut child) = cmd.spawn() else { return crashed(0) };
    let mut pipe = child.stdout.take().expect("stdout is piped");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Duration::from_millis(timeout_ms);
    let exit = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= deadline => break None,
            Ok(None) => thread::sleep(POLL),
            Err(_) => break None,
        }
    };
    let elapsed_ms = start.elapsed().as_millis() as u64;
    // also reaps anything the command left running in its group
    kill_group(&child);
    let _ = child.wait();
    let stdout = String::from_utf8_lossy(&reader.join().unwrap_or_default()).into_owned();

    let Some(exit) = exit.filter(|_| elapsed_ms <= timeout_ms) else {
        return RawRun { status: RunStatus::Timeout, runtime_ms: timeout_ms, stdout };
    };
    let parser = &solver.config.answer_parser;
    let answered = solver.sat.as_ref().is_some_and(|re| re.is_match(&stdout))
        || solver.unsat.as_ref().is_some_and(|re| re.is_match(&stdout))
        || (parser.exit_code.is_some() && exit.code() == parser.exit_code);
    RawRun { status: if answered { RunStatus::Solved } else { RunStatus::Crashed }, runtime_ms: elapsed_ms, stdout }
}
