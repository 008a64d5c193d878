//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use fairdrop::dataset::TabularDataset;
use fairdrop::model::MlpModel;
use fairdrop::search::{Algorithm, SearchResult, SearchSpaceBounds};
use fairdrop::DropoutState;

/// Metrics recomputed by counting, one quantity at a time.
#[derive(Debug, Clone, Copy)]
pub struct Counted {
    pub f1: f64,
    pub accuracy: f64,
    pub eod: Option<f64>,
    pub dp_diff: Option<f64>,
    pub eo_diff: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn count_metrics(preds: &[u8], labels: &[u8], protected: &[u8]) -> Counted {
    let n = preds.len();
    let hits = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count();
    let tp = hits(&|i| preds[i] == 1 && labels[i] == 1);
    let fp = hits(&|i| preds[i] == 1 && labels[i] == 0);
    let fneg = hits(&|i| preds[i] == 0 && labels[i] == 1);
    let correct = hits(&|i| preds[i] == labels[i]);
    let precision = rate(tp, tp + fp);
    let recall = rate(tp, tp + fneg);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    };
    let group = |a: u8| {
        let tpr = rate(
            hits(&|i| protected[i] == a && labels[i] == 1 && preds[i] == 1),
            hits(&|i| protected[i] == a && labels[i] == 1),
        );
        let fpr = rate(
            hits(&|i| protected[i] == a && labels[i] == 0 && preds[i] == 1),
            hits(&|i| protected[i] == a && labels[i] == 0),
        );
        let pos = rate(
            hits(&|i| protected[i] == a && preds[i] == 1),
            hits(&|i| protected[i] == a),
        );
        (tpr, fpr, pos)
    };
    let (t0, f0, p0) = group(0);
    let (t1, f1r, p1) = group(1);
    let diff = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
    let eo = diff(t0, t1);
    let fpr_gap = diff(f0, f1r);
    Counted {
        f1,
        accuracy: correct as f64 / n as f64,
        eod: eo.zip(fpr_gap).map(|(a, b)| a.max(b)),
        dp_diff: diff(p0, p1),
        eo_diff: eo,
    }
}

/// Cost of a mask via weight surgery and counted metrics.
pub fn surgery_cost(
    model: &MlpModel,
    data: &TabularDataset,
    mask: &DropoutState,
    p: f64,
    t: f64,
    eod_base: f64,
    f1_base: f64,
) -> (f64, f64) {
    let repaired = model.repaired(mask).unwrap();
    let preds = repaired.predict_batch(data, None).unwrap();
    let m = count_metrics(&preds, &data.labels, &data.protected);
    let cost = match m.eod {
        None => f64::INFINITY,
        Some(e) => e + if m.f1 < t * f1_base { p * eod_base } else { 0.0 },
    };
    (cost, m.f1)
}

/// Every in-bounds state, generated by counting through all `2^n` masks.
pub fn brute_states(bounds: &SearchSpaceBounds) -> Vec<DropoutState> {
    let n = bounds.n_total;
    (0u64..1 << n)
        .filter(|v| (bounds.n_l..=bounds.n_u).contains(&(v.count_ones() as usize)))
        .map(|v| DropoutState::from_bits(&(0..n).map(|i| v >> i & 1 == 1).collect::<Vec<_>>()))
        .collect()
}

/// Temperature with mean acceptance `target`, by bisection on `ln T`.
pub fn bisect_temperature(deltas: &[f64], target: f64) -> f64 {
    let chi = |t: f64| deltas.iter().map(|d| (-d / t).exp()).sum::<f64>() / deltas.len() as f64;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if chi(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Breadth-first distances from `source` over the explicit neighbor graph.
pub fn bfs(bounds: &SearchSpaceBounds, source: &DropoutState) -> HashMap<DropoutState, usize> {
    let mut dist = HashMap::from([(source.clone(), 0)]);
    let mut queue = VecDeque::from([source.clone()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        for n in bounds.neighbors(&s) {
            if !dist.contains_key(&n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Trace invariant violations of one search run.
pub fn trace_violations(result: &SearchResult, bounds: &SearchSpaceBounds) -> Vec<String> {
    let mut out = Vec::new();
    let mut prev_best = result.initial_cost;
    for r in &result.trace {
        if r.best_cost > prev_best {
            out.push(format!("iteration {}: best cost rose", r.iteration));
        }
        prev_best = r.best_cost;
        let state = DropoutState::from_hex(bounds.n_total, &r.state_key).unwrap();
        if !bounds.contains(&state) || state.weight() != r.hamming_weight {
            out.push(format!("iteration {}: state {} out of bounds", r.iteration, r.state_key));
        }
        match result.algorithm {
            Algorithm::RandomWalk if !r.accepted => {
                out.push(format!("iteration {}: random walk rejected a move", r.iteration));
            }
            Algorithm::SimulatedAnnealing if r.delta() <= 0.0 && !r.accepted => {
                out.push(format!("iteration {}: downhill move rejected", r.iteration));
            }
            _ => {}
        }
    }
    out
}

/// Same checks on a written trace CSV. The current cost is replayed from
/// `initial_cost` and the accepted moves.
pub fn csv_trace_violations(
    csv_bytes: &[u8],
    initial_cost: f64,
    bounds: &SearchSpaceBounds,
    algorithm: Algorithm,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut reader = csv::Reader::from_reader(csv_bytes);
    let mut current = initial_cost;
    let mut prev_best = initial_cost;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.unwrap();
        let candidate: f64 = rec[3].parse().unwrap();
        let accepted: bool = rec[4].parse().unwrap();
        let best: f64 = rec[5].parse().unwrap();
        let weight: usize = rec[6].parse().unwrap();
        let state = DropoutState::from_hex(bounds.n_total, &rec[7]).unwrap();
        if best > prev_best {
            out.push(format!("row {i}: best cost rose"));
        }
        if !bounds.contains(&state) || state.weight() != weight {
            out.push(format!("row {i}: state out of bounds"));
        }
        let downhill = candidate - current <= 0.0;
        match algorithm {
            Algorithm::RandomWalk if !accepted => out.push(format!("row {i}: rejected")),
            Algorithm::SimulatedAnnealing if downhill && !accepted => {
                out.push(format!("row {i}: downhill rejected"))
            }
            _ => {}
        }
        if accepted {
            current = candidate;
        }
        prev_best = best;
    }
    out
}
