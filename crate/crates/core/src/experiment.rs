//! Config-driven pipelines: synthesize, train, repair, sweep, oracle.
//!
//! Every command reads one [`ExperimentConfig`], runs once per seed, and
//! writes its artifacts atomically under the output directory. JSON outputs
//! carry a `config` block echoing the effective configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{load_csv, split, synthesize_biased, DatasetSchema, Scaling, SplitDataset, TabularDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::{write_atomic, write_json_atomic};
use crate::metrics::{self, SplitMetrics};
use crate::model::{train_with_report, MlpArchitecture, MlpModel, TrainConfig};
use crate::oracle::{self, Optimum, SingleNeuronReport, StateCensus};
use crate::search::{
    run_search_with, Algorithm, CostEvaluator, CostParams, SearchConfig, SearchResult, SearchSpaceBounds, T0Mode,
    DEFAULT_PENALTY, DEFAULT_T0_SAMPLES, DEFAULT_TARGET_ACCEPTANCE, DEFAULT_THRESHOLD,
};

pub const DEFAULT_MAX_ITERATIONS: u64 = 20_000;
pub const DEFAULT_P_VALUES: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
/// z-value of the normal-approximation 95% interval.
pub const CI_Z: f64 = 1.96;
pub const CI_FORMULA: &str = "mean +/- 1.96 * sd / sqrt(n), sd with n - 1 denominator";

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthParams),
    Csv { path: PathBuf, schema: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth(SynthParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_rows: usize,
    pub n_features: usize,
    pub bias_strength: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_rows: 10_000,
            n_features: 10,
            bias_strength: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    /// The `seed` field is replaced by the run seed.
    pub train: TrainConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![16, 16],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub algorithm: Algorithm,
    pub p: f64,
    pub t: f64,
    pub n_l: usize,
    /// Defaults to a quarter of the hidden neurons (at least `n_l`).
    pub n_u: Option<usize>,
    pub max_iterations: Option<u64>,
    pub time_limit_secs: Option<f64>,
    pub t0_mode: T0Mode,
    pub target_acceptance: f64,
    pub t0_sample_size: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            algorithm: Algorithm::SimulatedAnnealing,
            p: DEFAULT_PENALTY,
            t: DEFAULT_THRESHOLD,
            n_l: 2,
            n_u: None,
            max_iterations: Some(DEFAULT_MAX_ITERATIONS),
            time_limit_secs: None,
            t0_mode: T0Mode::BenAmeur,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
            t0_sample_size: DEFAULT_T0_SAMPLES,
        }
    }
}

impl SearchSection {
    pub fn bounds(&self, n_total: usize) -> Result<SearchSpaceBounds> {
        let n_u = self.n_u.unwrap_or((n_total / 4).max(self.n_l));
        SearchSpaceBounds::new(n_total, self.n_l, n_u)
    }

    pub fn time_limit(&self) -> Result<Option<Duration>> {
        self.time_limit_secs
            .map(|s| {
                Duration::try_from_secs_f64(s)
                    .map_err(|_| Error::Config(format!("invalid time_limit_secs {s}")))
            })
            .transpose()
    }

    pub fn config(&self, bounds: SearchSpaceBounds, cost_params: CostParams, seed: u64) -> Result<SearchConfig> {
        let c = SearchConfig {
            algorithm: self.algorithm,
            time_limit: self.time_limit()?,
            max_iterations: self.max_iterations,
            bounds,
            cost_params,
            seed,
            t0_mode: self.t0_mode,
            target_acceptance: self.target_acceptance,
            t0_sample_size: self.t0_sample_size,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub p_values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            p_values: DEFAULT_P_VALUES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub budget: u64,
    pub good_margin: f64,
    /// Also write every state's cost to `costs_seed{S}.csv`.
    pub dump_costs: bool,
    /// A repair result JSON to compare against the enumerated optimum.
    pub sa_result: Option<PathBuf>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            budget: oracle::DEFAULT_BUDGET as u64,
            good_margin: oracle::DEFAULT_GOOD_MARGIN,
            dump_costs: false,
            sa_result: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Where `repair`, `sweep`, and `oracle` look for model files; defaults
    /// to `dir`.
    pub model_dir: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs"),
            model_dir: None,
        }
    }
}

/// The whole experiment. Missing sections and fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub model: ModelSection,
    pub search: SearchSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
    pub seeds: Vec<u64>,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            model: ModelSection::default(),
            search: SearchSection::default(),
            sweep: SweepSection::default(),
            oracle: OracleSection::default(),
            seeds: default_seeds(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        match &self.dataset {
            DatasetSource::Synth(s) => {
                if !(0.0..=1.0).contains(&s.bias_strength) {
                    return Err(Error::Config(format!(
                        "bias_strength must lie in [0, 1], got {}",
                        s.bias_strength
                    )));
                }
            }
            DatasetSource::Csv { path, schema } => {
                for p in [path, schema] {
                    if !p.exists() {
                        return Err(Error::Config(format!("{} does not exist", p.display())));
                    }
                }
            }
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "model.hidden must list positive widths, got {:?}",
                self.model.hidden
            )));
        }
        self.model.train.validate()?;
        let s = &self.search;
        CostParams::new(s.p, s.t, 0.0, 0.0)?;
        if s.max_iterations.is_none() && s.time_limit_secs.is_none() {
            return Err(Error::Config(
                "search needs max_iterations or time_limit_secs".into(),
            ));
        }
        s.time_limit()?;
        if !(s.target_acceptance > 0.0 && s.target_acceptance < 1.0) {
            return Err(Error::Config(format!(
                "target_acceptance must lie in (0, 1), got {}",
                s.target_acceptance
            )));
        }
        if self.sweep.p_values.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Config("sweep p_values must be finite and >= 0".into()));
        }
        if self.oracle.good_margin.is_nan() || self.oracle.good_margin < 0.0 {
            return Err(Error::Config("oracle good_margin must be >= 0".into()));
        }
        Ok(())
    }

    pub fn model_dir(&self) -> &Path {
        self.output.model_dir.as_deref().unwrap_or(&self.output.dir)
    }

    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn load_dataset(&self) -> Result<TabularDataset> {
        match &self.dataset {
            DatasetSource::Synth(s) => synthesize_biased(s.n_rows, s.n_features, s.bias_strength, s.seed),
            DatasetSource::Csv { path, schema } => load_csv(path, &DatasetSchema::from_json_file(schema)?),
        }
    }

    pub fn architecture(&self, n_features: usize) -> Result<MlpArchitecture> {
        let mut sizes = vec![n_features];
        sizes.extend(&self.model.hidden);
        sizes.push(1);
        MlpArchitecture::new(sizes)
    }
}

pub fn model_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("model_seed{seed}.json"))
}

pub fn baseline_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("baseline_seed{seed}.json"))
}

pub fn result_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("result_seed{seed}.json"))
}

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("trace_seed{seed}.csv"))
}

pub fn oracle_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("oracle_seed{seed}.json"))
}

pub fn cost_dump_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("costs_seed{seed}.csv"))
}

fn split_metrics(model: &MlpModel, data: &TabularDataset, exec: Execution) -> Result<SplitMetrics> {
    let preds = model.predict_batch_with(data, None, exec)?;
    Ok((&metrics::evaluate(&preds, &data.labels, &data.protected)?).into())
}

fn masked_metrics(
    model: &MlpModel,
    data: &TabularDataset,
    mask: &crate::DropoutState,
    exec: Execution,
) -> Result<SplitMetrics> {
    let preds = model.predict_batch_with(data, Some(mask), exec)?;
    Ok((&metrics::evaluate(&preds, &data.labels, &data.protected)?).into())
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub csv_path: PathBuf,
    pub schema_path: PathBuf,
    pub rows: usize,
}

/// Writes `synth.csv` and `synth_schema.json` (the schema that loads it
/// back, plus the generator parameters under `config`).
pub fn cmd_synth(params: &SynthParams, out_dir: &Path) -> Result<SynthOutput> {
    let data = synthesize_biased(params.n_rows, params.n_features, params.bias_strength, params.seed)?;
    let csv_path = out_dir.join("synth.csv");
    let schema_path = out_dir.join("synth_schema.json");
    let mut buf = Vec::new();
    data.write_csv_to(&mut buf)?;
    write_atomic(&csv_path, &buf)?;
    let mut schema = serde_json::to_value(data.raw_schema(Scaling::Standard))?;
    schema["config"] = json!({ "synth": params });
    write_json_atomic(&schema_path, &schema)?;
    Ok(SynthOutput {
        csv_path,
        schema_path,
        rows: data.len(),
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub seed: u64,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
    pub best_epoch: usize,
    pub gradient_steps: usize,
}

/// Trains one model per seed on that seed's split and reports the unmasked
/// model's validation and test metrics.
pub fn cmd_train(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<BaselineReport>> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let arch = cfg.architecture(data.n_features())?;
    let dir = &cfg.output.dir;
    let reports = exec.map(&cfg.seeds, |&seed| -> Result<BaselineReport> {
        let sp = split(&data, seed)?;
        let train_cfg = TrainConfig {
            seed,
            ..cfg.model.train.clone()
        };
        let (model, report) = train_with_report(&sp, &arch, &train_cfg)?;
        model.save(model_path(dir, seed))?;
        let baseline = BaselineReport {
            seed,
            validation: split_metrics(&model, &sp.validation, Execution::Sequential)?,
            test: split_metrics(&model, &sp.test, Execution::Sequential)?,
            best_epoch: report.best_epoch,
            gradient_steps: report.gradient_steps,
        };
        let mut doc = serde_json::to_value(&baseline)?;
        doc["epochs"] = serde_json::to_value(&report.epochs)?;
        doc["train"] = serde_json::to_value(&train_cfg)?;
        doc["config"] = cfg.echo();
        write_json_atomic(baseline_path(dir, seed), &doc)?;
        Ok(baseline)
    });
    collect(reports)
}

/// Split and trained model of one seed, as `repair`, `sweep`, and `oracle`
/// see them.
pub struct SeedContext {
    pub seed: u64,
    pub split: SplitDataset,
    pub model: MlpModel,
}

fn load_context(cfg: &ExperimentConfig, data: &TabularDataset, seed: u64) -> Result<SeedContext> {
    let path = model_path(cfg.model_dir(), seed);
    let model = MlpModel::load(&path)?;
    if model.input_size() != data.n_features() {
        return Err(Error::Shape(format!(
            "{} expects {} inputs, dataset has {} features",
            path.display(),
            model.input_size(),
            data.n_features()
        )));
    }
    Ok(SeedContext {
        seed,
        split: split(data, seed)?,
        model,
    })
}

// ---------------------------------------------------------------- repair

#[derive(Debug, Clone)]
pub struct RepairRun {
    pub seed: u64,
    pub baseline_validation: SplitMetrics,
    pub baseline_test: SplitMetrics,
    pub repaired_validation: SplitMetrics,
    pub repaired_test: SplitMetrics,
    pub search: SearchResult,
}

impl RepairRun {
    pub fn success(&self) -> bool {
        self.search.success
    }

    /// `(base - repaired) / base` on validation EOD, when both are defined
    /// and the baseline is positive.
    pub fn relative_eod_improvement(&self) -> Option<f64> {
        let base = self.baseline_validation.eod?;
        let rep = self.repaired_validation.eod?;
        (base > 0.0).then(|| (base - rep) / base)
    }
}

/// Sample mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `None` for an empty sample; a single value has zero width.
pub fn mean_ci(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half_width = CI_Z * sd / (n as f64).sqrt();
    Some(MeanCi {
        n,
        mean,
        sd,
        half_width,
        lower: mean - half_width,
        upper: mean + half_width,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairSummary {
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub failed_seeds: Vec<u64>,
    pub baseline_validation_eod: Option<MeanCi>,
    pub validation_eod: Option<MeanCi>,
    pub test_eod: Option<MeanCi>,
    pub validation_f1: Option<MeanCi>,
    pub test_f1: Option<MeanCi>,
    pub relative_validation_eod_improvement: Option<MeanCi>,
    pub best_cost: Option<MeanCi>,
}

impl RepairSummary {
    pub fn from_runs(runs: &[RepairRun]) -> Self {
        let stat = |f: &dyn Fn(&RepairRun) -> Option<f64>| {
            let v: Vec<f64> = runs.iter().filter_map(f).filter(|x| x.is_finite()).collect();
            mean_ci(&v)
        };
        RepairSummary {
            seeds: runs.iter().map(|r| r.seed).collect(),
            runs: runs.len(),
            failed_seeds: runs.iter().filter(|r| !r.success()).map(|r| r.seed).collect(),
            baseline_validation_eod: stat(&|r| r.baseline_validation.eod),
            validation_eod: stat(&|r| r.repaired_validation.eod),
            test_eod: stat(&|r| r.repaired_test.eod),
            validation_f1: stat(&|r| Some(r.repaired_validation.f1)),
            test_f1: stat(&|r| Some(r.repaired_test.f1)),
            relative_validation_eod_improvement: stat(&|r| r.relative_eod_improvement()),
            best_cost: stat(&|r| Some(r.search.best_cost)),
        }
    }

    pub fn all_succeeded(&self) -> bool {
        self.failed_seeds.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub runs: Vec<RepairRun>,
    pub summary: RepairSummary,
}

/// Searches one seed's model with the configured search section.
pub fn repair_seed(ctx: &SeedContext, search: &SearchSection, p: f64, exec: Execution) -> Result<RepairRun> {
    let model = &ctx.model;
    let sp = &ctx.split;
    let params = CostParams::from_baseline(model, &sp.validation, p, search.t)?;
    let bounds = search.bounds(model.hidden_count())?;
    let config = search.config(bounds, params, ctx.seed)?;
    let evaluator = CostEvaluator::new(model, &sp.validation, params)?.with_execution(exec);
    let result = run_search_with(&evaluator, &config)?;
    Ok(RepairRun {
        seed: ctx.seed,
        baseline_validation: split_metrics(model, &sp.validation, exec)?,
        baseline_test: split_metrics(model, &sp.test, exec)?,
        repaired_validation: masked_metrics(model, &sp.validation, &result.best_state, exec)?,
        repaired_test: masked_metrics(model, &sp.test, &result.best_state, exec)?,
        search: result,
    })
}

fn search_config_of(cfg: &ExperimentConfig, run: &RepairRun, model: &MlpModel, p: f64) -> Result<SearchConfig> {
    let params = CostParams::new(
        p,
        cfg.search.t,
        run.baseline_validation.eod.unwrap_or(0.0),
        run.baseline_validation.f1,
    )?;
    cfg.search.config(cfg.search.bounds(model.hidden_count())?, params, run.seed)
}

/// Repairs every seed's model and writes `result_seed{S}.json`,
/// `trace_seed{S}.csv`, and `summary.json`.
pub fn cmd_repair(cfg: &ExperimentConfig, exec: Execution) -> Result<RepairOutcome> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let dir = &cfg.output.dir;
    let timing = cfg.search.time_limit_secs.is_some();
    let runs = exec.map(&cfg.seeds, |&seed| -> Result<RepairRun> {
        let ctx = load_context(cfg, &data, seed)?;
        let run = repair_seed(&ctx, &cfg.search, cfg.search.p, Execution::Sequential)?;
        write_atomic(trace_path(dir, seed), &run.search.trace_csv_bytes(timing)?)?;
        let search_config = search_config_of(cfg, &run, &ctx.model, cfg.search.p)?;
        let mut doc = run.search.to_json(&ctx.model, &search_config);
        doc["seed"] = json!(seed);
        doc["baseline"] = json!({ "validation": run.baseline_validation, "test": run.baseline_test });
        doc["repaired"] = json!({ "validation": run.repaired_validation, "test": run.repaired_test });
        doc["config"] = cfg.echo();
        doc["search_config"] = serde_json::to_value(&search_config)?;
        write_json_atomic(result_path(dir, seed), &doc)?;
        Ok(run)
    });
    let runs = collect(runs)?;
    let summary = RepairSummary::from_runs(&runs);
    let mut doc = serde_json::to_value(&summary)?;
    doc["interval"] = json!(CI_FORMULA);
    doc["config"] = cfg.echo();
    write_json_atomic(dir.join("summary.json"), &doc)?;
    Ok(RepairOutcome { runs, summary })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub seed: u64,
    pub validation_eod: Option<f64>,
    pub test_eod: Option<f64>,
    pub success: bool,
}

pub const SWEEP_HEADER: [&str; 5] = ["p", "seed", "validation_eod", "test_eod", "success"];

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

pub fn sweep_csv_bytes(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.p),
            r.seed.to_string(),
            opt_cell(r.validation_eod),
            opt_cell(r.test_eod),
            r.success.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<sweep>", e.into_error()))
}

/// One repair per `(p, seed)`, rows ordered by `p_values` then seeds.
/// Failed runs stay in the table with `success = false`.
pub fn cmd_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if cfg.sweep.p_values.is_empty() {
        return Err(Error::Config("sweep needs at least one p value".into()));
    }
    let data = cfg.load_dataset()?;
    let contexts = collect(exec.map(&cfg.seeds, |&seed| load_context(cfg, &data, seed)))?;
    let jobs: Vec<(f64, &SeedContext)> = cfg
        .sweep
        .p_values
        .iter()
        .flat_map(|&p| contexts.iter().map(move |c| (p, c)))
        .collect();
    let rows = collect(exec.map(&jobs, |&(p, ctx)| -> Result<SweepRow> {
        let run = repair_seed(ctx, &cfg.search, p, Execution::Sequential)?;
        Ok(SweepRow {
            p,
            seed: ctx.seed,
            validation_eod: run.repaired_validation.eod,
            test_eod: run.repaired_test.eod,
            success: run.success(),
        })
    }))?;
    let dir = &cfg.output.dir;
    write_atomic(dir.join("sweep.csv"), &sweep_csv_bytes(&rows)?)?;
    write_json_atomic(dir.join("sweep.json"), &json!({ "rows": rows, "config": cfg.echo() }))?;
    Ok(rows)
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone, Serialize)]
pub struct SaComparison {
    pub source: PathBuf,
    pub sa_best_cost: f64,
    /// `sa_best_cost - optimal_cost`; never negative.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub bounds: SearchSpaceBounds,
    pub cost_params: CostParams,
    pub optimum: Optimum,
    pub census: StateCensus,
    pub likelihoods: [f64; 4],
    pub single_neuron: SingleNeuronReport,
    pub sa_comparison: Option<SaComparison>,
}

/// Reads `best_cost` (and `seed`, when present) from a repair result file.
pub fn read_sa_result(path: &Path) -> Result<(Option<u64>, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    let cost = match &doc["best_cost"] {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
    .ok_or_else(|| Error::Format {
        location: path.display().to_string(),
        msg: "missing best_cost".into(),
    })?;
    Ok((doc["seed"].as_u64(), cost))
}

/// Exhaustive optimum, census, and single-neuron baseline per seed. Spaces
/// larger than the budget are refused before any evaluation.
pub fn cmd_oracle(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<OracleReport>> {
    cfg.validate()?;
    let sa = cfg.oracle.sa_result.as_deref().map(|p| read_sa_result(p).map(|r| (p, r))).transpose()?;
    if let Some((path, (Some(seed), _))) = &sa {
        if !cfg.seeds.contains(seed) {
            return Err(Error::Config(format!(
                "{} is for seed {seed}, which is not among the oracle seeds",
                path.display()
            )));
        }
    }
    let data = cfg.load_dataset()?;
    let dir = &cfg.output.dir;
    let budget = u128::from(cfg.oracle.budget);
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let ctx = load_context(cfg, &data, seed)?;
        let bounds = cfg.search.bounds(ctx.model.hidden_count())?;
        oracle::check_budget(&bounds, budget)?;
        let params = CostParams::from_baseline(&ctx.model, &ctx.split.validation, cfg.search.p, cfg.search.t)?;
        let evaluator = CostEvaluator::new(&ctx.model, &ctx.split.validation, params)?.with_execution(exec);
        let optimum = oracle::enumerate_best_with(&evaluator, &bounds, budget, exec)?;
        let (census, all) = if cfg.oracle.dump_costs {
            let all = oracle::evaluate_all(&evaluator, &bounds, budget, exec)?;
            let pairs: Vec<(f64, f64)> = all.iter().map(|(_, c)| (c.cost, c.f1)).collect();
            (StateCensus::classify(&pairs, cfg.oracle.good_margin, params.f1_floor()), Some(all))
        } else {
            (oracle::census_with(&evaluator, &bounds, cfg.oracle.good_margin, budget, exec)?, None)
        };
        if let Some(all) = all {
            let mut buf = Vec::new();
            oracle::write_cost_dump(&all, &mut buf)?;
            write_atomic(cost_dump_path(dir, seed), &buf)?;
        }
        let single_neuron = oracle::single_neuron_baseline_with(&evaluator, &ctx.split.test)?;
        let sa_comparison = match &sa {
            Some((path, (s, cost))) if s.is_none_or(|s| s == seed) => Some(SaComparison {
                source: path.to_path_buf(),
                sa_best_cost: *cost,
                delta: cost - optimum.cost,
            }),
            _ => None,
        };
        let report = OracleReport {
            seed,
            bounds,
            cost_params: params,
            likelihoods: census.likelihoods(),
            optimum,
            census,
            single_neuron,
            sa_comparison,
        };
        let mut doc = serde_json::to_value(&report)?;
        doc["config"] = cfg.echo();
        write_json_atomic(oracle_path(dir, seed), &doc)?;
        reports.push(report);
    }
    Ok(reports)
}
