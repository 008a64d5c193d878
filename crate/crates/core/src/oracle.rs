//! Exhaustive ground truth for small search spaces: global optimum, the
//! Best/Good/Bad census, and the single-neuron-drop baseline.
//!
//! Enumeration is split into one task per `(weight, lowest dropped neuron)`
//! pair. Tasks run under the chosen [`Execution`] and merge with a
//! deterministic `(cost, state)` minimum, so results do not depend on the
//! evaluation order.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{self, SplitMetrics};
use crate::model::MlpModel;
use crate::search::{CostEvaluator, CostParams, SearchSpaceBounds, StateCost};
use crate::state::DropoutState;

pub const DEFAULT_BUDGET: u128 = 10_000_000;
pub const DEFAULT_GOOD_MARGIN: f64 = 0.05;

/// Refuses spaces larger than `budget` before evaluating anything.
pub fn check_budget(bounds: &SearchSpaceBounds, budget: u128) -> Result<u128> {
    bounds.validate()?;
    let cardinality = bounds.cardinality();
    if cardinality > budget {
        return Err(Error::Budget {
            cardinality,
            budget,
        });
    }
    Ok(cardinality)
}

#[derive(Debug, Clone, Copy)]
struct Task {
    weight: usize,
    first: Option<usize>,
}

fn tasks(bounds: &SearchSpaceBounds) -> Vec<Task> {
    let mut out = Vec::new();
    for weight in bounds.n_l..=bounds.n_u {
        if weight == 0 {
            out.push(Task {
                weight,
                first: None,
            });
        } else {
            for first in 0..=bounds.n_total - weight {
                out.push(Task {
                    weight,
                    first: Some(first),
                });
            }
        }
    }
    out
}

/// Calls `f` on every state of `task` in ascending numeric order of the
/// remaining indices.
fn for_each_in_task(n: usize, task: Task, mut f: impl FnMut(&DropoutState)) {
    let Some(first) = task.first else {
        f(&DropoutState::zeros(n));
        return;
    };
    let rest = task.weight - 1;
    let lo = first + 1;
    let mut idx: Vec<usize> = (lo..lo + rest).collect();
    let mut state = DropoutState::zeros(n);
    state.set(first, true);
    for &i in &idx {
        state.set(i, true);
    }
    loop {
        f(&state);
        // Advance to the next combination of `rest` indices from lo..n.
        let mut k = rest;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if idx[k] < n - (rest - k) {
                break;
            }
            if k == 0 {
                return;
            }
        }
        state.set(idx[k], false);
        idx[k] += 1;
        state.set(idx[k], true);
        for j in k + 1..rest {
            state.set(idx[j], false);
            idx[j] = idx[j - 1] + 1;
        }
        for &i in &idx[k + 1..] {
            state.set(i, true);
        }
    }
}

/// Every state of the bounded space, grouped by task, in task order.
pub fn all_states(bounds: &SearchSpaceBounds) -> Vec<DropoutState> {
    let mut out = Vec::new();
    for t in tasks(bounds) {
        for_each_in_task(bounds.n_total, t, |s| out.push(s.clone()));
    }
    out
}

fn better(a: &(f64, DropoutState), b: &(f64, DropoutState)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1 < b.1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub state: DropoutState,
    pub cost: f64,
    pub eval: StateCost,
    pub evaluations: u64,
}

pub fn enumerate_best(
    model: &MlpModel,
    validation: &TabularDataset,
    bounds: &SearchSpaceBounds,
    params: &CostParams,
) -> Result<Optimum> {
    let evaluator = CostEvaluator::new(model, validation, *params)?;
    enumerate_best_with(&evaluator, bounds, DEFAULT_BUDGET, Execution::default())
}

/// Lowest `(cost, state)` of one task and the number of states it visited.
type TaskBest = (Option<(f64, DropoutState)>, u64);

/// Global minimum of the cost over the bounded space; ties go to the
/// numerically (equivalently, hex-key lexicographically) smallest state.
pub fn enumerate_best_with(
    evaluator: &CostEvaluator<'_>,
    bounds: &SearchSpaceBounds,
    budget: u128,
    exec: Execution,
) -> Result<Optimum> {
    check_space(evaluator, bounds, budget)?;
    let evaluator = &evaluator.clone_sequential();
    let per_task: Vec<Result<TaskBest>> =
        exec.map(&tasks(bounds), |&task| {
            let mut best: Option<(f64, DropoutState)> = None;
            let mut count = 0u64;
            let mut err = None;
            for_each_in_task(bounds.n_total, task, |s| {
                if err.is_some() {
                    return;
                }
                match evaluator.evaluate(s) {
                    Ok(c) => {
                        count += 1;
                        let cand = (c.cost, s.clone());
                        if best.as_ref().is_none_or(|b| better(&cand, b)) {
                            best = Some(cand);
                        }
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((best, count)),
            }
        });
    let mut best: Option<(f64, DropoutState)> = None;
    let mut evaluations = 0;
    for r in per_task {
        let (b, n) = r?;
        evaluations += n;
        if let Some(b) = b {
            if best.as_ref().is_none_or(|cur| better(&b, cur)) {
                best = Some(b);
            }
        }
    }
    let (cost, state) = best.ok_or_else(|| Error::Search("empty search space".into()))?;
    let eval = evaluator.evaluate(&state)?;
    Ok(Optimum {
        state,
        cost,
        eval,
        evaluations,
    })
}

fn check_space(
    evaluator: &CostEvaluator<'_>,
    bounds: &SearchSpaceBounds,
    budget: u128,
) -> Result<u128> {
    if bounds.n_total != evaluator.hidden_count() {
        return Err(Error::Search(format!(
            "bounds cover {} neurons, model has {}",
            bounds.n_total,
            evaluator.hidden_count()
        )));
    }
    check_budget(bounds, budget)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCensus {
    pub best_count: u64,
    pub good_count: u64,
    pub bad_count: u64,
    pub ordinary_count: u64,
    pub total: u64,
    pub optimal_cost: f64,
    pub good_margin: f64,
    pub f1_floor: f64,
}

impl StateCensus {
    /// `(best, good, bad, ordinary)` as fractions of the space.
    pub fn likelihoods(&self) -> [f64; 4] {
        let t = self.total.max(1) as f64;
        [
            self.best_count as f64 / t,
            self.good_count as f64 / t,
            self.bad_count as f64 / t,
            self.ordinary_count as f64 / t,
        ]
    }

    /// Classifies `(cost, f1)` pairs. Classes are exclusive: Best is the
    /// optimal cost, Bad is below the F1 floor, Good is within the margin of
    /// the optimum and above the floor.
    pub fn classify(evals: &[(f64, f64)], good_margin: f64, f1_floor: f64) -> Self {
        let optimal_cost = evals
            .iter()
            .map(|e| e.0)
            .min_by(f64::total_cmp)
            .unwrap_or(f64::INFINITY);
        let mut c = StateCensus {
            best_count: 0,
            good_count: 0,
            bad_count: 0,
            ordinary_count: 0,
            total: evals.len() as u64,
            optimal_cost,
            good_margin,
            f1_floor,
        };
        for &(cost, f1) in evals {
            if cost == optimal_cost {
                c.best_count += 1;
            } else if f1 < f1_floor {
                c.bad_count += 1;
            } else if cost <= optimal_cost + good_margin {
                c.good_count += 1;
            } else {
                c.ordinary_count += 1;
            }
        }
        c
    }
}

pub fn census(
    model: &MlpModel,
    validation: &TabularDataset,
    bounds: &SearchSpaceBounds,
    params: &CostParams,
    good_margin: f64,
) -> Result<StateCensus> {
    let evaluator = CostEvaluator::new(model, validation, *params)?;
    census_with(&evaluator, bounds, good_margin, DEFAULT_BUDGET, Execution::default())
}

pub fn census_with(
    evaluator: &CostEvaluator<'_>,
    bounds: &SearchSpaceBounds,
    good_margin: f64,
    budget: u128,
    exec: Execution,
) -> Result<StateCensus> {
    let evals: Vec<(f64, f64)> = evaluate_all(evaluator, bounds, budget, exec)?
        .into_iter()
        .map(|(_, c)| (c.cost, c.f1))
        .collect();
    Ok(StateCensus::classify(
        &evals,
        good_margin,
        evaluator.params().f1_floor(),
    ))
}

/// Every state with its cost, sorted in canonical (numeric) order.
pub fn evaluate_all(
    evaluator: &CostEvaluator<'_>,
    bounds: &SearchSpaceBounds,
    budget: u128,
    exec: Execution,
) -> Result<Vec<(DropoutState, StateCost)>> {
    check_space(evaluator, bounds, budget)?;
    let evaluator = &evaluator.clone_sequential();
    let chunks: Vec<Result<Vec<(DropoutState, StateCost)>>> = exec.map(&tasks(bounds), |&task| {
        let mut out = Vec::new();
        let mut err = None;
        for_each_in_task(bounds.n_total, task, |s| {
            if err.is_none() {
                match evaluator.evaluate(s) {
                    Ok(c) => out.push((s.clone(), c)),
                    Err(e) => err = Some(e),
                }
            }
        });
        err.map_or(Ok(out), Err)
    });
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    all.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(all)
}

/// Per-state dump with header `state_key_hex,cost,eod,f1`.
pub fn write_cost_dump<W: Write>(rows: &[(DropoutState, StateCost)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["state_key_hex", "cost", "eod", "f1"])?;
    for (s, c) in rows {
        out.write_record([
            s.to_hex(),
            c.cost.to_string(),
            c.eod.map_or_else(|| "undefined".to_string(), |e| e.to_string()),
            c.f1.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<dump>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleNeuronReport {
    pub bit: usize,
    pub layer: usize,
    pub unit: usize,
    pub state: DropoutState,
    pub validation_cost: f64,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
    pub evaluations: u64,
}

/// Tries every single-neuron mask on the validation split, keeps the
/// cheapest (lowest bit on ties), and scores it on both splits.
pub fn single_neuron_baseline(
    model: &MlpModel,
    validation: &TabularDataset,
    test: &TabularDataset,
    params: &CostParams,
) -> Result<SingleNeuronReport> {
    let evaluator = CostEvaluator::new(model, validation, *params)?;
    single_neuron_baseline_with(&evaluator, test)
}

pub fn single_neuron_baseline_with(
    evaluator: &CostEvaluator<'_>,
    test: &TabularDataset,
) -> Result<SingleNeuronReport> {
    let n = evaluator.hidden_count();
    let mut best: Option<(f64, usize)> = None;
    for bit in 0..n {
        let s = DropoutState::from_indices(n, &[bit])?;
        let c = evaluator.evaluate(&s)?.cost;
        if best.is_none_or(|(bc, _)| c.total_cmp(&bc) == Ordering::Less) {
            best = Some((c, bit));
        }
    }
    let (validation_cost, bit) = best.ok_or_else(|| Error::Search("model has no hidden neurons".into()))?;
    let state = DropoutState::from_indices(n, &[bit])?;
    let model = evaluator.model();
    let val = evaluator.metrics(Some(&state))?;
    let test_preds = model.predict_batch(test, Some(&state))?;
    let test_eval = metrics::evaluate(&test_preds, &test.labels, &test.protected)?;
    let (layer, unit) = model.neuron_of_bit()[bit];
    Ok(SingleNeuronReport {
        bit,
        layer,
        unit,
        state,
        validation_cost,
        validation: (&val).into(),
        test: (&test_eval).into(),
        evaluations: n as u64,
    })
}
