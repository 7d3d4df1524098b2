use serde::{Deserialize, Serialize};

use super::{best_fixed, BaselineError};
use crate::knn::{nearest, Distance, KnnError};
use crate::perf::{ms_to_secs, Par10Table, RunRecord, RunStatus};

pub const SUNNY_DEFAULT_K: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSlot {
    pub solver_id: String,
    pub budget_ms: u64,
}

impl ScheduleSlot {
    pub fn budget_s(&self) -> f64 {
        ms_to_secs(self.budget_ms)
    }
}

/// Solvers run one after another, each with its own time budget.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub slots: Vec<ScheduleSlot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub solved_by: Option<String>,
    pub time_ms: u64,
}

impl Schedule {
    pub fn total_budget_ms(&self) -> u64 {
        self.slots.iter().map(|s| s.budget_ms).sum()
    }

    /// Replays the schedule against measured runs (`runs` holds one record per
    /// solver id). A slot succeeds when its solver finished within the slot
    /// budget; failed slots cost their budget, or less if the run ended early
    /// without an answer.
    pub fn simulate(&self, runs: &[RunRecord]) -> ScheduleOutcome {
        let mut time_ms = 0;
        for slot in &self.slots {
            let Some(run) = runs.iter().find(|r| r.solver_id == slot.solver_id) else {
                time_ms += slot.budget_ms;
                continue;
            };
            if run.solved_within(slot.budget_ms) {
                return ScheduleOutcome { solved_by: Some(slot.solver_id.clone()), time_ms: time_ms + run.runtime_ms };
            }
            let early_exit =
                matches!(run.status, RunStatus::Crashed | RunStatus::WrongAnswer) && run.runtime_ms <= slot.budget_ms;
            time_ms += if early_exit { run.runtime_ms } else { slot.budget_ms };
        }
        ScheduleOutcome { solved_by: None, time_ms }
    }
}

/// SUNNY-like schedule for one query.
///
/// Among the `k` Euclidean neighbors of `query`, solvers are picked greedily
/// by how many not-yet-covered neighbors they solve (then by smaller PAR10 sum
/// on the neighbors, then by solver order) until no solver adds coverage. The
/// total budget is split in proportion to each picked solver's neighbor
/// solved-count; the best fixed solver of the training table takes the share
/// of the uncovered neighbors. Slots are ordered by descending solved-count,
/// then solver order. Budgets are floored to milliseconds, so their sum never
/// exceeds `total_timeout_ms`.
pub fn sunny_schedule(
    points: &[Vec<f64>],
    par10: &Par10Table,
    query: &[f64],
    k: usize,
    total_timeout_ms: u64,
) -> Result<Schedule, BaselineError> {
    let n = par10.num_instances();
    if k == 0 {
        return Err(KnnError::ZeroK.into());
    }
    if k > n {
        return Err(KnnError::KTooLarge { k, available: n }.into());
    }
    let ns = par10.num_solvers();
    let backup = best_fixed(par10)?;
    let neighbors: Vec<usize> =
        nearest(points, &par10.instances, 0..n, query, k, Distance::Euclidean).into_iter().map(|(_, j)| j).collect();

    let solved_count: Vec<u64> =
        (0..ns).map(|s| neighbors.iter().filter(|&&j| par10.is_solved(j, s)).count() as u64).collect();
    let par10_sum: Vec<u64> = (0..ns).map(|s| neighbors.iter().map(|&j| par10.score(j, s)).sum()).collect();

    let mut covered = vec![false; neighbors.len()];
    let mut picked: Vec<usize> = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None; // (gain, solver)
        for s in (0..ns).filter(|s| !picked.contains(s)) {
            let gain = neighbors.iter().zip(&covered).filter(|&(&j, &c)| !c && par10.is_solved(j, s)).count();
            if gain == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((g, b)) => gain > g || (gain == g && par10_sum[s] < par10_sum[b]),
            };
            if better {
                best = Some((gain, s));
            }
        }
        let Some((_, s)) = best else { break };
        for (c, &j) in covered.iter_mut().zip(&neighbors) {
            *c |= par10.is_solved(j, s);
        }
        picked.push(s);
    }
    let uncovered = covered.iter().filter(|c| !**c).count() as u64;

    let mut weights: Vec<(usize, u64)> = picked.iter().map(|&s| (s, solved_count[s])).collect();
    if uncovered > 0 {
        match weights.iter_mut().find(|(s, _)| *s == backup) {
            Some(w) => w.1 += uncovered,
            None => weights.push((backup, uncovered)),
        }
    }
    let total_weight: u64 = weights.iter().map(|w| w.1).sum();
    weights.sort_by(|a, b| solved_count[b.0].cmp(&solved_count[a.0]).then(a.0.cmp(&b.0)));

    let slots = weights
        .into_iter()
        .map(|(s, w)| ScheduleSlot {
            solver_id: par10.solvers[s].clone(),
            budget_ms: ((total_timeout_ms as u128 * w as u128) / total_weight as u128) as u64,
        })
        .filter(|slot| slot.budget_ms > 0)
        .collect();
    Ok(Schedule { slots })
}
