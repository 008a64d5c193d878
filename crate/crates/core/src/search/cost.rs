//! Penalized fairness cost of a dropout state.
//!
//! `cost(s) = EOD_s + p * EOD_base * 1[F1_s < t * F1_base]`, evaluated on the
//! validation split. A state whose EOD is undefined costs `+inf`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{self, Evaluation};
use crate::model::{MlpModel, Scratch};
use crate::state::DropoutState;

pub const DEFAULT_PENALTY: f64 = 3.0;
pub const DEFAULT_THRESHOLD: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Penalty multiplier `p >= 0`.
    pub p: f64,
    /// Threshold multiplier `t` in `(0, 1)`.
    pub t: f64,
    pub eod_baseline: f64,
    pub f1_baseline: f64,
}

impl CostParams {
    pub fn new(p: f64, t: f64, eod_baseline: f64, f1_baseline: f64) -> Result<Self> {
        let c = CostParams {
            p,
            t,
            eod_baseline,
            f1_baseline,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("penalty p must be >= 0, got {}", self.p)));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::Config(format!("threshold t must lie in (0, 1), got {}", self.t)));
        }
        for (name, v) in [("eod_baseline", self.eod_baseline), ("f1_baseline", self.f1_baseline)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Baselines from the unmasked model on `validation`.
    pub fn from_baseline(
        model: &MlpModel,
        validation: &TabularDataset,
        p: f64,
        t: f64,
    ) -> Result<Self> {
        let preds = model.predict_batch(validation, None)?;
        let eval = metrics::evaluate(&preds, &validation.labels, &validation.protected)?;
        let eod = eval.fairness.eod.ok_or_else(|| {
            Error::Search("baseline EOD is undefined on the validation split".into())
        })?;
        Self::new(p, t, eod, eval.f1)
    }

    pub fn f1_floor(&self) -> f64 {
        self.t * self.f1_baseline
    }

    pub fn cost(&self, eod: Option<f64>, f1: f64) -> f64 {
        match eod {
            None => f64::INFINITY,
            Some(e) if f1 < self.f1_floor() => e + self.p * self.eod_baseline,
            Some(e) => e,
        }
    }
}

/// Cost of one state plus the metrics it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCost {
    pub cost: f64,
    pub eod: Option<f64>,
    pub f1: f64,
    pub accuracy: f64,
}

/// Scores masks against a fixed model and validation split. The unmasked
/// first-hidden-layer activations are computed once, since masks do not
/// change them.
pub struct CostEvaluator<'a> {
    model: &'a MlpModel,
    data: &'a TabularDataset,
    params: CostParams,
    first_hidden: Vec<f64>,
    width: usize,
    exec: Execution,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(model: &'a MlpModel, data: &'a TabularDataset, params: CostParams) -> Result<Self> {
        params.validate()?;
        if data.n_features() != model.input_size() {
            return Err(Error::Shape(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                model.input_size()
            )));
        }
        if data.is_empty() {
            return Err(Error::Size("empty evaluation split".into()));
        }
        let width = model.architecture().layer_sizes[1];
        let mut first_hidden = Vec::with_capacity(data.len() * width);
        for x in data.rows() {
            first_hidden.extend(model.first_hidden(x)?);
        }
        Ok(CostEvaluator {
            model,
            data,
            params,
            first_hidden,
            width,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Copy that evaluates rows sequentially, for use inside tasks that are
    /// already running in parallel.
    pub fn clone_sequential(&self) -> CostEvaluator<'a> {
        CostEvaluator {
            model: self.model,
            data: self.data,
            params: self.params,
            first_hidden: self.first_hidden.clone(),
            width: self.width,
            exec: Execution::Sequential,
        }
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn model(&self) -> &MlpModel {
        self.model
    }

    pub fn data(&self) -> &TabularDataset {
        self.data
    }

    pub fn hidden_count(&self) -> usize {
        self.model.hidden_count()
    }

    pub fn predictions(&self, mask: Option<&DropoutState>) -> Result<Vec<u8>> {
        let net = self.model.masked(mask)?;
        let rows: Vec<&[f64]> = self.first_hidden.chunks_exact(self.width).collect();
        Ok(self.exec.map_chunks(&rows, 512, |chunk| {
            let mut scratch = Scratch::default();
            chunk
                .iter()
                .map(|h| u8::from(net.probability_from_first_hidden(h, &mut scratch) >= 0.5))
                .collect()
        }))
    }

    pub fn metrics(&self, mask: Option<&DropoutState>) -> Result<Evaluation> {
        let preds = self.predictions(mask)?;
        metrics::evaluate(&preds, &self.data.labels, &self.data.protected)
    }

    pub fn evaluate(&self, mask: &DropoutState) -> Result<StateCost> {
        let e = self.metrics(Some(mask))?;
        Ok(StateCost {
            cost: self.params.cost(e.fairness.eod, e.f1),
            eod: e.fairness.eod,
            f1: e.f1,
            accuracy: e.accuracy,
        })
    }
}

/// Per-run memo of state costs.
pub struct MemoizedCost<'e, 'a> {
    evaluator: &'e CostEvaluator<'a>,
    cache: HashMap<DropoutState, StateCost>,
    evaluations: u64,
    hits: u64,
}

impl<'e, 'a> MemoizedCost<'e, 'a> {
    pub fn new(evaluator: &'e CostEvaluator<'a>) -> Self {
        MemoizedCost {
            evaluator,
            cache: HashMap::new(),
            evaluations: 0,
            hits: 0,
        }
    }

    pub fn get(&mut self, s: &DropoutState) -> Result<StateCost> {
        if let Some(c) = self.cache.get(s) {
            self.hits += 1;
            return Ok(*c);
        }
        let c = self.evaluator.evaluate(s)?;
        self.evaluations += 1;
        self.cache.insert(s.clone(), c);
        Ok(c)
    }

    pub fn cost(&mut self, s: &DropoutState) -> Result<f64> {
        self.get(s).map(|c| c.cost)
    }

    /// Distinct states evaluated.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits
    }

    pub fn evaluator(&self) -> &'e CostEvaluator<'a> {
        self.evaluator
    }
}
