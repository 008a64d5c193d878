//! The search loop shared by simulated annealing and random walk.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cost::{CostEvaluator, CostParams, MemoizedCost, StateCost};
use super::schedule::{
    estimate_initial_temperature, cost_range_t0_bound, T0Mode, TemperatureSchedule,
    DEFAULT_T0_SAMPLES, DEFAULT_TARGET_ACCEPTANCE,
};
use super::space::{generate_neighbor, random_state, SearchSpaceBounds};
use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::prng::{stream, Rng};
use crate::state::DropoutState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Simulated annealing: uphill moves accepted with `exp(-dE / T)`.
    #[serde(rename = "SA")]
    SimulatedAnnealing,
    /// Random walk: every move is accepted.
    #[serde(rename = "RW")]
    RandomWalk,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SA" => Ok(Algorithm::SimulatedAnnealing),
            "RW" => Ok(Algorithm::RandomWalk),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`, expected SA or RW"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    #[serde(with = "opt_secs", rename = "time_limit_secs")]
    pub time_limit: Option<Duration>,
    pub max_iterations: Option<u64>,
    pub bounds: SearchSpaceBounds,
    pub cost_params: CostParams,
    pub seed: u64,
    pub t0_mode: T0Mode,
    pub target_acceptance: f64,
    pub t0_sample_size: usize,
}

impl SearchConfig {
    /// SA with Ben-Ameur initialization and an iteration budget.
    pub fn new(bounds: SearchSpaceBounds, cost_params: CostParams, max_iterations: u64, seed: u64) -> Self {
        SearchConfig {
            algorithm: Algorithm::SimulatedAnnealing,
            time_limit: None,
            max_iterations: Some(max_iterations),
            bounds,
            cost_params,
            seed,
            t0_mode: T0Mode::BenAmeur,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
            t0_sample_size: DEFAULT_T0_SAMPLES,
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_limit.is_none() && self.max_iterations.is_none() {
            return Err(Error::Config(
                "set at least one of time_limit and max_iterations".into(),
            ));
        }
        self.bounds.validate()?;
        self.cost_params.validate()?;
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if let T0Mode::Explicit(t) = self.t0_mode {
            TemperatureSchedule::new(t)?;
        }
        Ok(())
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let v: Option<f64> = Option::deserialize(d)?;
        v.map(|secs| Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// One loop iteration. `hamming_weight` and `state_key` describe the
/// candidate evaluated in this iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub elapsed: Duration,
    pub temperature: f64,
    pub current_cost: f64,
    pub candidate_cost: f64,
    pub accepted: bool,
    pub best_cost: f64,
    pub hamming_weight: usize,
    pub state_key: String,
}

impl TraceRecord {
    pub fn delta(&self) -> f64 {
        self.candidate_cost - self.current_cost
    }
}

pub const TRACE_HEADER: [&str; 8] = [
    "iteration",
    "elapsed_ms",
    "temperature",
    "candidate_cost",
    "accepted",
    "best_cost",
    "hamming_weight",
    "state_key_hex",
];

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub algorithm: Algorithm,
    pub initial_state: DropoutState,
    pub initial_cost: f64,
    pub best_state: DropoutState,
    pub best_cost: f64,
    pub best_eval: StateCost,
    /// Best state's validation F1 reaches `t * F1_base` (and its cost is finite).
    pub success: bool,
    pub t0: f64,
    pub trace: Vec<TraceRecord>,
    /// Distinct states whose cost was computed, including temperature sampling.
    pub evaluations: u64,
    pub cache_hits: u64,
    pub iterations: u64,
    pub elapsed: Duration,
}

impl SearchResult {
    /// Trace as CSV. `elapsed_ms` is left empty unless `timing` is set, so
    /// iteration-bounded runs produce byte-identical files.
    pub fn write_trace_csv<W: Write>(&self, w: W, timing: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for r in &self.trace {
            let elapsed = if timing {
                format!("{:.3}", r.elapsed.as_secs_f64() * 1e3)
            } else {
                String::new()
            };
            out.write_record([
                r.iteration.to_string(),
                elapsed,
                r.temperature.to_string(),
                r.candidate_cost.to_string(),
                r.accepted.to_string(),
                r.best_cost.to_string(),
                r.hamming_weight.to_string(),
                r.state_key.clone(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn trace_csv_bytes(&self, timing: bool) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf, timing)?;
        Ok(buf)
    }

    /// Result document: best state as hex key and per-layer unit lists,
    /// best cost, success flag, evaluation count, and the config echo.
    pub fn to_json(&self, model: &MlpModel, config: &SearchConfig) -> Value {
        json!({
            "algorithm": self.algorithm,
            "best_state": {
                "key_hex": self.best_state.to_hex(),
                "hamming_weight": self.best_state.weight(),
                "dropped_by_layer": model.dropped_by_layer(&self.best_state),
            },
            "best_cost": finite_or_string(self.best_cost),
            "best_validation_eod": self.best_eval.eod.map_or(Value::from("undefined"), Value::from),
            "best_validation_f1": self.best_eval.f1,
            "success": self.success,
            "initial_state": self.initial_state.to_hex(),
            "initial_cost": finite_or_string(self.initial_cost),
            "t0": finite_or_string(self.t0),
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "cache_hits": self.cache_hits,
            "config": config,
        })
    }
}

fn finite_or_string(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::from(v.to_string())
    }
}

pub fn run_search(model: &MlpModel, validation: &TabularDataset, config: &SearchConfig) -> Result<SearchResult> {
    let evaluator = CostEvaluator::new(model, validation, config.cost_params)?;
    run_search_with(&evaluator, config)
}

/// Runs one search against a prepared evaluator.
///
/// Starts from a random in-bounds state, which is also the initial best.
/// Each iteration computes `T_m`, samples a neighbor, and accepts it when
/// `dE <= 0`, always under RW, or with probability `exp(-dE / T_m)` under SA.
/// The best state is replaced whenever a candidate's finite cost is `<=` the
/// best cost, so the latest of equal-cost states wins. Infinite-cost
/// candidates are never accepted by SA and never become best.
pub fn run_search_with(evaluator: &CostEvaluator<'_>, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    if config.bounds.n_total != evaluator.hidden_count() {
        return Err(Error::Search(format!(
            "bounds cover {} neurons, model has {}",
            config.bounds.n_total,
            evaluator.hidden_count()
        )));
    }
    if config.cost_params != *evaluator.params() {
        return Err(Error::Config(
            "search cost params differ from the evaluator's".into(),
        ));
    }
    let bounds = &config.bounds;
    let mut rng = Rng::with_stream(config.seed, stream::SEARCH);
    let mut memo = MemoizedCost::new(evaluator);

    let mut current = random_state(bounds, &mut rng)?;
    let mut current_cost = memo.cost(&current)?;
    let initial_state = current.clone();
    let initial_cost = current_cost;
    let mut best_state = current.clone();
    let mut best_cost = current_cost;

    let t0 = match config.algorithm {
        Algorithm::RandomWalk => f64::INFINITY,
        Algorithm::SimulatedAnnealing => match config.t0_mode {
            T0Mode::Explicit(t) => t,
            T0Mode::CostRangeBound => cost_range_t0_bound(&config.cost_params, bounds)?,
            T0Mode::BenAmeur => {
                estimate_initial_temperature(
                    &mut memo,
                    bounds,
                    &mut rng,
                    config.target_acceptance,
                    config.t0_sample_size,
                )?
                .t0
            }
        },
    };
    let schedule = TemperatureSchedule { t0 };

    let mut trace = Vec::new();
    let start = Instant::now();
    let mut m: u64 = 0;
    loop {
        if config.max_iterations.is_some_and(|max| m >= max) {
            break;
        }
        if config.time_limit.is_some_and(|limit| start.elapsed() > limit) {
            break;
        }
        let temperature = schedule.temperature(m);
        let candidate = generate_neighbor(&current, bounds, &mut rng)?;
        let candidate_cost = memo.cost(&candidate)?;
        let delta = candidate_cost - current_cost;
        let accepted = match config.algorithm {
            Algorithm::RandomWalk => true,
            Algorithm::SimulatedAnnealing => {
                if candidate_cost.is_infinite() {
                    false
                } else if delta <= 0.0 {
                    true
                } else {
                    (-delta / temperature).exp() >= rng.next_f64()
                }
            }
        };
        if candidate_cost.is_finite() && candidate_cost <= best_cost {
            best_cost = candidate_cost;
            best_state = candidate.clone();
        }
        trace.push(TraceRecord {
            iteration: m,
            elapsed: start.elapsed(),
            temperature,
            current_cost,
            candidate_cost,
            accepted,
            best_cost,
            hamming_weight: candidate.weight(),
            state_key: candidate.to_hex(),
        });
        if accepted {
            current = candidate;
            current_cost = candidate_cost;
        }
        m += 1;
    }

    let (evaluations, cache_hits) = (memo.evaluations(), memo.cache_hits());
    let best_eval = memo.get(&best_state)?;
    let success = best_cost.is_finite() && best_eval.f1 >= config.cost_params.f1_floor();
    Ok(SearchResult {
        algorithm: config.algorithm,
        initial_state,
        initial_cost,
        best_state,
        best_cost,
        best_eval,
        success,
        t0,
        trace,
        evaluations,
        cache_hits,
        iterations: m,
        elapsed: start.elapsed(),
    })
}
