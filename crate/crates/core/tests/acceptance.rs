//! Acceptance criteria, one test each. Every test prints a PASS/FAIL line
//! before asserting.

mod common;

use std::time::Instant;

use csp_portfolio::baselines::{best_fixed, oracle_choices, ridge_fit, solved_count, total_par10, DEFAULT_RIDGES};
use csp_portfolio::csp::{check_assignment, parse_instance, Assignment};
use csp_portfolio::features::{save_feature_csv, FeatureVector};
use csp_portfolio::knn::{cross_validated_choices, Distance, PortfolioModel, TrainConfig};
use csp_portfolio::perf::{par10_ms, Par10Table, RunRecord, RunStatus, RuntimeMatrix};
use csp_portfolio::short_train::{timeout_sweep, EvaluationReport, SweepMode};
use csp_portfolio::synth::{synthetic_corpus, SynthConfig};
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::csp_gen::{ev_c, random_csp};
use common::{cli_ok, toy_dir, toy_instances, verdict};

// ---------------------------------------------------------------- criterion 1

#[test]
fn c1_parser_and_evaluator() {
    let started = Instant::now();
    let ex1 = parse_instance(
        b"(int x1 1 2) (int x2 1 4) (int x3 2 3) (bool p)
          (or p (<= (+ x1 x3) 4))
          (or (not p) (<= (+ x3 (* -1 x1)) 0))
          (or (<= x1 1) (<= (* 2 x2) 4))",
    )
    .unwrap();
    let a1 = Assignment::new().with_bool("p", false).with_int("x1", 1).with_int("x2", 3).with_int("x3", 2);
    let ex2 = parse_instance(
        b"(int x1 1 2) (int x2 1 4) (int x3 2 3)
          (imp (>= (+ x1 (* 2 x3)) 3) (and (< x1 x2) (<= x3 (+ x1 x2))))
          (alldifferent x1 x2 x3)",
    )
    .unwrap();
    let a2 = Assignment::new().with_int("x1", 1).with_int("x2", 2).with_int("x3", 3);
    let dup = Assignment::new().with_int("x1", 1).with_int("x2", 1).with_int("x3", 3);
    let paper_ok = check_assignment(&ex1, &a1) == Ok(true)
        && check_assignment(&ex2, &a2) == Ok(true)
        && check_assignment(&ex2, &dup) == Ok(false);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut mismatches, mut satisfied) = (0usize, Vec::new(), 0usize);
    for n in 0..200 {
        let csp = random_csp(&mut rng);
        let inst = parse_instance(csp.text.as_bytes()).unwrap_or_else(|e| panic!("instance {n}: {e}\n{}", csp.text));
        // each variable ranges over its domain plus one value outside it
        let ranges: Vec<Vec<i64>> =
            csp.domains.iter().map(|d| d.iter().copied().chain([d.last().unwrap() + 1]).collect()).collect();
        let total: usize = ranges.iter().map(Vec::len).product::<usize>() << csp.bools;
        for code in 0..total {
            let mut c = code;
            let b: Vec<bool> = (0..csp.bools)
                .map(|_| {
                    let v = c & 1 == 1;
                    c >>= 1;
                    v
                })
                .collect();
            let x: Vec<i64> = ranges
                .iter()
                .map(|r| {
                    let v = r[c % r.len()];
                    c /= r.len();
                    v
                })
                .collect();
            let in_domain = x.iter().zip(&csp.domains).all(|(v, d)| d.contains(v));
            let expected = in_domain && csp.constraints.iter().all(|k| ev_c(k, &x, &b));
            let mut a = Assignment::new();
            for (i, v) in x.iter().enumerate() {
                a = a.with_int(&format!("v{i}"), *v);
            }
            for (i, v) in b.iter().enumerate() {
                a = a.with_bool(&format!("b{i}"), *v);
            }
            let got = check_assignment(&inst, &a);
            checked += 1;
            satisfied += expected as usize;
            if got != Ok(expected) && mismatches.len() < 3 {
                mismatches.push(format!("instance {n} x={x:?} b={b:?}: got {got:?}, want {expected}\n{}", csp.text));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = paper_ok && mismatches.is_empty() && secs < 5.0;
    verdict(
        "1 parser/evaluator",
        pass,
        &format!(
            "examples {paper_ok}, {checked} assignments ({satisfied} satisfying), {} mismatches, {secs:.2}s",
            mismatches.len()
        ),
    );
    assert!(paper_ok);
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
    assert!(secs < 5.0);
}

// ---------------------------------------------------------------- criterion 2

fn random_status(rng: &mut ChaCha8Rng) -> RunStatus {
    *[RunStatus::Solved, RunStatus::Solved, RunStatus::Timeout, RunStatus::Crashed, RunStatus::WrongAnswer]
        .choose(rng)
        .unwrap()
}

#[test]
fn c2_par10_and_truncation() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let measured = 600_000u64;
    let mut bad_par10 = 0;
    for _ in 0..1000 {
        let status = random_status(&mut rng);
        let t = rng.random_range(1..=measured);
        let runtime = match (status, rng.random_range(0..4)) {
            (RunStatus::Timeout, _) => measured,
            (_, 0) => t,
            _ => rng.random_range(0..=measured),
        };
        let rec = RunRecord { instance_id: "i".into(), solver_id: "s".into(), status, runtime_ms: runtime };
        let want = if status == RunStatus::Solved && runtime <= t { runtime } else { 10 * t };
        bad_par10 += (par10_ms(&rec, t, measured).unwrap() != want) as usize;
    }

    let instances: Vec<String> = (0..50).map(|i| format!("i{i:02}")).collect();
    let solvers: Vec<String> = (0..6).map(|s| format!("s{s}")).collect();
    let mut records = Vec::new();
    for i in &instances {
        for s in &solvers {
            let status = random_status(&mut rng);
            let runtime_ms = if status == RunStatus::Timeout {
                measured
            } else if rng.random_bool(0.3) {
                rng.random_range(1..=600) * 1000
            } else {
                rng.random_range(0..=measured)
            };
            records.push(RunRecord { instance_id: i.clone(), solver_id: s.clone(), status, runtime_ms });
        }
    }
    let m = RuntimeMatrix::from_records(instances, solvers, records, measured).unwrap();
    let mut violations = Vec::new();
    let mut prev: Option<RuntimeMatrix> = None;
    for secs in 1..=600u64 {
        let t = secs * 1000;
        let cut = m.truncate(t).unwrap();
        if cut.truncate(t).unwrap() != cut {
            violations.push(format!("idempotence at {secs}"));
        }
        if cut.records().iter().any(|r| r.runtime_ms > t) {
            violations.push(format!("runtime above cap at {secs}"));
        }
        if m.par10_table(t).unwrap() != cut.par10_table(t).unwrap() {
            violations.push(format!("par10 of truncation at {secs}"));
        }
        if let Some(p) = &prev {
            // composing truncations keeps the smaller cutoff; solved sets only grow
            if cut.truncate(t - 1000).unwrap() != *p {
                violations.push(format!("composition at {secs}"));
            }
            let grew = p
                .records()
                .iter()
                .zip(cut.records())
                .all(|(a, b)| a.status != RunStatus::Solved || b.status == RunStatus::Solved);
            if !grew || p.solved_pairs() > cut.solved_pairs() {
                violations.push(format!("monotonicity at {secs}"));
            }
        }
        prev = Some(cut);
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = bad_par10 == 0 && violations.is_empty() && secs < 5.0;
    verdict(
        "2 par10/truncation",
        pass,
        &format!("{bad_par10} par10 mismatches, {} law violations, {secs:.2}s", violations.len()),
    );
    assert_eq!(bad_par10, 0);
    assert!(violations.is_empty(), "{violations:?}");
    assert!(secs < 5.0);
}

// ---------------------------------------------------------------- criterion 3

fn brute_distance(d: Distance, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        let diff = (a[i] - b[i]).abs();
        match d {
            Distance::Euclidean => acc += (a[i] - b[i]) * (a[i] - b[i]),
            Distance::Manhattan => acc += diff,
            Distance::Chebyshev => acc = acc.max(diff),
            Distance::Canberra => {
                let den = a[i].abs() + b[i].abs();
                acc += if den == 0.0 { 0.0 } else { diff / den };
            }
        }
    }
    if d == Distance::Euclidean {
        acc.sqrt()
    } else {
        acc
    }
}

#[test]
fn c3_knn_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = Vec::new();
    for case in 0..100 {
        let n = rng.random_range(1..=100);
        let dim = rng.random_range(1..=70);
        let ns = rng.random_range(1..=6);
        let coarse = rng.random_bool(0.5);
        let mut ids: Vec<String> = (0..n).map(|i| format!("inst-{i:03}")).collect();
        ids.shuffle(&mut rng);
        let draw =
            |rng: &mut ChaCha8Rng| if coarse { rng.random_range(0..3) as f64 } else { rng.random_range(-5.0..5.0) };
        let features: Vec<FeatureVector> = ids
            .iter()
            .map(|id| FeatureVector { instance_id: id.clone(), values: (0..dim).map(|_| draw(&mut rng)).collect() })
            .collect();
        let rows: Vec<Vec<u64>> = (0..n)
            .map(|_| (0..ns).map(|_| *[1_000, 2_000, 5_000, 100_000].choose(&mut rng).unwrap()).collect())
            .collect();
        let solvers: Vec<String> = (0..ns).map(|s| format!("s{s}")).collect();
        let par10 = Par10Table::from_rows(ids.clone(), solvers.clone(), rows.clone(), 10_000);
        let k = rng.random_range(1..=n);
        let distance = Distance::ALL[rng.random_range(0..4)];
        let model = PortfolioModel::with_params(&features, &par10, "test", k, distance).unwrap();

        let lo: Vec<f64> =
            (0..dim).map(|j| features.iter().map(|f| f.values[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> =
            (0..dim).map(|j| features.iter().map(|f| f.values[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let norm = |v: &[f64]| -> Vec<f64> {
            (0..dim)
                .map(|j| if hi[j] > lo[j] { ((v[j] - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 1.0) } else { 0.0 })
                .collect()
        };
        let points: Vec<Vec<f64>> = features.iter().map(|f| norm(&f.values)).collect();

        for q in 0..3 {
            let raw = if q == 0 {
                features[rng.random_range(0..n)].values.clone()
            } else {
                (0..dim).map(|_| draw(&mut rng) * 1.2).collect()
            };
            let query = norm(&raw);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                brute_distance(distance, &query, &points[a])
                    .total_cmp(&brute_distance(distance, &query, &points[b]))
                    .then_with(|| ids[a].cmp(&ids[b]))
            });
            let kq = rng.random_range(1..=n);
            let want: Vec<&str> = order[..kq].iter().map(|&i| ids[i].as_str()).collect();
            let got_q = model.normalize(&FeatureVector { instance_id: "q".into(), values: raw.clone() }).unwrap();
            let got = model.nearest_neighbors(&got_q, kq).unwrap();
            let sums: Vec<u64> = (0..ns).map(|s| order[..k].iter().map(|&i| rows[i][s]).sum()).collect();
            let best = (0..ns).fold(0, |b, s| if sums[s] < sums[b] { s } else { b });
            let chosen = model.select_solver(&got_q).unwrap();
            if got_q.iter().zip(&query).any(|(a, b)| a.to_bits() != b.to_bits())
                || got != want
                || chosen != solvers[best]
            {
                mismatches.push(format!("case {case} query {q}: n={n} dim={dim} k={k} {distance}"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 30.0;
    verdict(
        "3 knn oracle",
        pass,
        &format!("300 queries over 100 datasets, {} mismatches, {secs:.2}s", mismatches.len()),
    );
    assert!(mismatches.is_empty(), "{mismatches:?}");
    assert!(secs < 30.0);
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn c4_dominance_chain() {
    let mut corpora = Vec::new();
    for seed in 0..6 {
        let c = synthetic_corpus(&SynthConfig { instances: 120, seed, ..SynthConfig::default() });
        corpora.push((format!("synthetic seed {seed}"), c));
    }
    // flat corpora: no cluster structure, lots of timeouts
    for seed in 0..2 {
        let c = synthetic_corpus(&SynthConfig {
            instances: 80,
            solvers: 4,
            clusters: 1,
            difficulty: (2.0, 8.0),
            noise: 1.5,
            crash_rate: 0.1,
            seed: 100 + seed,
            ..SynthConfig::default()
        });
        corpora.push((format!("flat seed {seed}"), c));
    }
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for (name, c) in &corpora {
        let par10 = c.matrix.par10_table(c.matrix.measured_timeout_ms()).unwrap();
        let oracle = oracle_choices(&par10).unwrap();
        let knn = cross_validated_choices(&c.features, &par10, &c.catalog.version, &TrainConfig::default()).unwrap();
        let worst = (0..par10.num_solvers()).map(|s| par10.column_sum(s)).max().unwrap();
        let (po, pk) = (total_par10(&par10, &oracle), total_par10(&par10, &knn));
        let (so, sk) = (solved_count(&par10, &oracle), solved_count(&par10, &knn));
        lines.push(format!("{name}: oracle {po}/{so} knn {pk}/{sk} worst {worst}"));
        if !(po <= pk && pk <= worst && so >= sk) {
            failures.push(name.clone());
        }
    }
    verdict("4 dominance chain", failures.is_empty(), &format!("{} matrices, violations {failures:?}", corpora.len()));
    for l in &lines {
        eprintln!("  {l}");
    }
    assert!(failures.is_empty(), "{lines:#?}");
}

// ------------------------------------------------------------ criteria 5 and 6

const SWEEP_TIMEOUTS_S: [u64; 6] = [1, 5, 10, 30, 60, 600];

#[test]
fn c5_c6_short_training_sweep() {
    let started = Instant::now();
    let corpus = synthetic_corpus(&SynthConfig::default());
    let timeouts: Vec<u64> = SWEEP_TIMEOUTS_S.iter().map(|s| s * 1000).collect();
    let config = TrainConfig::default();
    let short =
        timeout_sweep(&corpus.matrix, &corpus.catalog, &corpus.features, &timeouts, SweepMode::ShortTraining, &config)
            .unwrap();
    let cv = timeout_sweep(
        &corpus.matrix,
        &corpus.catalog,
        &corpus.features,
        &timeouts,
        SweepMode::CrossValidation,
        &config,
    )
    .unwrap();
    let secs = started.elapsed().as_secs_f64();
    let counts: Vec<usize> = short.points.iter().map(|p| p.solved_count).collect();
    let cv_counts: Vec<usize> = cv.points.iter().map(|p| p.solved_count).collect();
    let last = short.points.last().unwrap();

    let a = counts.windows(2).all(|w| w[0] <= w[1]);
    let b = counts.iter().all(|&c| c >= short.best_fixed.solved_count);
    let c = last.solved_count == short.oracle.solved_count && last.exploitation_ms == 0;
    let six = counts.iter().zip(&cv_counts).all(|(s, v)| s >= v);
    verdict("5a solved nondecreasing", a, &format!("short {counts:?}"));
    verdict("5b solved >= best fixed", b, &format!("best fixed {}", short.best_fixed.solved_count));
    verdict(
        "5c 600s equals oracle",
        c,
        &format!("{} vs oracle {}, exploit {} ms", last.solved_count, short.oracle.solved_count, last.exploitation_ms),
    );
    verdict("5 runtime", secs < 60.0, &format!("{secs:.2}s for both sweeps"));
    verdict("6 short >= cv", six, &format!("short {counts:?} cv {cv_counts:?}"));
    assert!(secs < 60.0);
    assert!(b && c && six);
    assert!(a, "short-mode solved counts decrease: {counts:?}");
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn c7_ridge_against_normal_equations() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    let mut non_monotone = 0;
    for _ in 0..50 {
        let n = rng.random_range(5..=60);
        let p = rng.random_range(1..=8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ridge = [DEFAULT_RIDGES.as_slice(), &[0.5, 10.0]].concat()[rng.random_range(0..10)];

        let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
        let means = DVector::from_fn(p, |j, _| xm.column(j).mean());
        let ymean = y.iter().sum::<f64>() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - means[j]);
        let yc = DVector::from_fn(n, |i, _| y[i] - ymean);
        let a = xc.transpose() * &xc + DMatrix::identity(p, p) * ridge;
        let w = a.lu().solve(&(xc.transpose() * yc)).expect("regular system");
        let intercept = ymean - means.dot(&w);

        let fit = ridge_fit(&x, &y, ridge).unwrap();
        let err = (DVector::from_vec(fit.weights.clone()) - &w).norm() / w.norm().max(1e-300);
        let ierr = (fit.intercept - intercept).abs() / intercept.abs().max(1.0);
        worst_rel = worst_rel.max(err).max(ierr);

        let mut ridges: Vec<f64> = DEFAULT_RIDGES.iter().copied().chain([1.0, 10.0, 100.0, 1000.0]).collect();
        ridges.sort_by(f64::total_cmp);
        let rss: Vec<f64> = ridges
            .iter()
            .map(|&r| {
                let m = ridge_fit(&x, &y, r).unwrap();
                x.iter().zip(&y).map(|(row, t)| (m.predict(row) - t).powi(2)).sum()
            })
            .collect();
        non_monotone += rss.windows(2).filter(|w| w[1] < w[0] * (1.0 - 1e-12)).count();
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst_rel <= 1e-8 && non_monotone == 0 && secs < 10.0;
    verdict(
        "7 ridge oracle",
        pass,
        &format!("max rel err {worst_rel:.2e}, {non_monotone} residual decreases, {secs:.2}s"),
    );
    assert!(worst_rel <= 1e-8);
    assert_eq!(non_monotone, 0);
    assert!(secs < 10.0);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn c8_live_pipeline() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let solvers = toy_dir().join("solvers.json");
    let instances: Vec<String> = toy_instances().iter().map(|p| p.display().to_string()).collect();
    let with = |head: &[&str]| -> Vec<String> {
        head.iter().map(|s| s.to_string()).chain(instances.iter().cloned()).collect()
    };
    let run = |args: Vec<String>| cli_ok(&args.iter().map(String::as_str).collect::<Vec<_>>(), cwd);

    run(with(&["extract-features", "--out", "features.csv"]));
    run(with(&[
        "run",
        "--solvers",
        solvers.to_str().unwrap(),
        "--timeout",
        "1.5",
        "--parallelism",
        "8",
        "--validate-models",
        "--out",
        "matrix.csv",
    ]));
    run(with(&[
        "short-train",
        "--prep-timeout",
        "0.3",
        "--timeout",
        "1.5",
        "--features-csv",
        "features.csv",
        "--solvers",
        solvers.to_str().unwrap(),
        "--parallelism",
        "8",
        "--out",
        "short.json",
    ]));
    let report = run([
        "report",
        "--matrix-csv",
        "matrix.csv",
        "--features-csv",
        "features.csv",
        "--short-train",
        "short.json",
        "--out",
        "report.json",
    ]
    .map(String::from)
    .to_vec());

    let matrix = RuntimeMatrix::load_csv(cwd.join("matrix.csv")).unwrap();
    let complete = matrix.records().len() == 20 * 3;
    let max_rt = matrix.records().iter().map(|r| r.runtime_ms).max().unwrap();
    let par10 = matrix.par10_table(matrix.measured_timeout_ms()).unwrap();
    let bf = best_fixed(&par10).unwrap();
    let bf_solved = solved_count(&par10, &vec![bf; par10.num_instances()]);
    let short = EvaluationReport::load(cwd.join("short.json")).unwrap();
    let capped = max_rt <= 1500 && short.instances.iter().all(|o| o.exploit_runtime_ms.is_none_or(|t| t <= 1500));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(cwd.join("report.json")).unwrap()).unwrap();
    let reported = json["comparison"]["methods"].as_array().is_some_and(|m| m.len() >= 6) && !report.stdout.is_empty();
    let secs = started.elapsed().as_secs_f64();
    let pass = complete && capped && short.solved_count >= bf_solved && reported && secs < 180.0;
    verdict(
        "8 live pipeline",
        pass,
        &format!(
            "{} records, max runtime {max_rt} ms, short-train {} vs best fixed {bf_solved}, {secs:.1}s",
            matrix.records().len(),
            short.solved_count
        ),
    );
    assert!(complete && capped && reported);
    assert!(short.solved_count >= bf_solved);
    assert!(secs < 180.0);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn c9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let corpus = synthetic_corpus(&SynthConfig { instances: 150, seed: 9, ..SynthConfig::default() });
    save_feature_csv(cwd.join("features.csv"), &corpus.catalog, &corpus.features).unwrap();
    corpus.matrix.save_csv(cwd.join("matrix.csv")).unwrap();
    let common = ["--features-csv", "features.csv", "--matrix-csv", "matrix.csv", "--seed", "42"];
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let model = format!("model_{run}.json");
        let curve = format!("curve_{run}.csv");
        let args: Vec<&str> = ["train"].into_iter().chain(common).chain(["--out", &model]).collect();
        cli_ok(&args, cwd);
        let args: Vec<&str> = ["sweep", "--mode", "short", "--timeouts", "1,10,600"]
            .into_iter()
            .chain(common)
            .chain(["--out", &curve])
            .collect();
        cli_ok(&args, cwd);
        files.push((std::fs::read(cwd.join(&model)).unwrap(), std::fs::read(cwd.join(&curve)).unwrap()));
    }
    let same_model = files[0].0 == files[1].0;
    let same_curve = files[0].1 == files[1].1;
    verdict(
        "9 determinism",
        same_model && same_curve,
        &format!(
            "model {} bytes identical={same_model}, curve {} bytes identical={same_curve}",
            files[0].0.len(),
            files[0].1.len()
        ),
    );
    assert!(same_model && same_curve);
}
