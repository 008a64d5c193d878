//! `fairdrop`: synthesize data, train baselines, and repair them by searching
//! inference-time dropout masks.
//!
//! Settings come from built-in defaults, then the `--config` file, then
//! command-line flags, each overriding the previous.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fairdrop::experiment::{self, DatasetSource, ExperimentConfig, MeanCi, SynthParams};
use fairdrop::search::{Algorithm, T0Mode};
use fairdrop::Execution;

/// Exit status when a repair finished but some run violated the F1 floor.
const EXIT_FAILED_RUNS: u8 = 3;

#[derive(Parser)]
#[command(name = "fairdrop", version, about = "Fairness repair by inference-time neuron dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic biased dataset and its schema.
    Synth(SynthArgs),
    /// Train one baseline model per seed.
    Train(TrainArgs),
    /// Search a fair dropout mask for each seed's model.
    Repair(RepairArgs),
    /// Repair once per penalty value and seed.
    Sweep(SweepArgs),
    /// Exhaustive optimum, state census, and single-neuron baseline.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed; shorthand for `--seeds S`.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    /// Group bias in [0, 1].
    #[arg(long, value_parser = unit_interval)]
    bias_strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct SearchFlags {
    /// Directory holding `model_seed{S}.json`; defaults to the output directory.
    #[arg(long)]
    models: Option<PathBuf>,
    /// SA or RW.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Penalty multiplier.
    #[arg(long)]
    p: Option<f64>,
    /// F1 threshold multiplier.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    n_l: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Wall-clock limit; without `--max-iterations` it replaces the
    /// iteration limit.
    #[arg(long)]
    time_limit_secs: Option<f64>,
    /// Fixed initial temperature instead of the sampled estimate.
    #[arg(long)]
    t0: Option<f64>,
}

#[derive(Args)]
struct RepairArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchFlags,
    /// Comma-separated penalty multipliers.
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<f64>>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchFlags,
    /// Refuse spaces with more states than this.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    good_margin: Option<f64>,
    /// Write every state's cost to `costs_seed{S}.csv`.
    #[arg(long)]
    dump_costs: bool,
    /// Repair result JSON to compare with the optimum.
    #[arg(long)]
    sa_result: Option<PathBuf>,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

impl Common {
    fn apply(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(self.config.as_ref())?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }
}

impl SearchFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.search;
        if let Some(m) = &self.models {
            cfg.output.model_dir = Some(m.clone());
        }
        if let Some(a) = self.algorithm {
            s.algorithm = a;
        }
        if let Some(p) = self.p {
            s.p = p;
        }
        if let Some(t) = self.t {
            s.t = t;
        }
        if let Some(n) = self.n_l {
            s.n_l = n;
        }
        if let Some(n) = self.n_u {
            s.n_u = Some(n);
        }
        if let Some(secs) = self.time_limit_secs {
            s.time_limit_secs = Some(secs);
            if self.max_iterations.is_none() {
                s.max_iterations = None;
            }
        }
        if let Some(m) = self.max_iterations {
            s.max_iterations = Some(m);
        }
        if let Some(t0) = self.t0 {
            s.t0_mode = T0Mode::Explicit(t0);
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn fmt_ci(c: &Option<MeanCi>) -> String {
    c.map_or_else(
        || "n/a".into(),
        |c| format!("{:.4} ± {:.4} (n={})", c.mean, c.half_width, c.n),
    )
}

fn synth(args: &SynthArgs) -> Result<u8> {
    let cfg = load_config(args.config.as_ref())?;
    let mut params = match cfg.dataset {
        DatasetSource::Synth(p) => p,
        DatasetSource::Csv { .. } => SynthParams::default(),
    };
    if let Some(n) = args.rows {
        params.n_rows = n;
    }
    if let Some(f) = args.features {
        params.n_features = f;
    }
    if let Some(b) = args.bias_strength {
        params.bias_strength = b;
    }
    if let Some(s) = args.seed {
        params.seed = s;
    }
    let dir = args.out.clone().unwrap_or(cfg.output.dir);
    let out = experiment::cmd_synth(&params, &dir)?;
    println!(
        "wrote {} rows to {} (schema {})",
        out.rows,
        out.csv_path.display(),
        out.schema_path.display()
    );
    Ok(0)
}

fn train(args: &TrainArgs, exec: Execution) -> Result<u8> {
    let mut cfg = args.common.apply()?;
    if let Some(h) = &args.hidden {
        cfg.model.hidden = h.clone();
    }
    if let Some(e) = args.epochs {
        cfg.model.train.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.model.train.learning_rate = lr;
    }
    let reports = experiment::cmd_train(&cfg, exec)?;
    println!("seed  val_eod  val_f1  val_acc  test_eod  test_f1  test_acc");
    for r in &reports {
        println!(
            "{:>4}  {:>7}  {:.4}  {:.4}   {:>7}   {:.4}  {:.4}",
            r.seed,
            fmt_opt(r.validation.eod),
            r.validation.f1,
            r.validation.accuracy,
            fmt_opt(r.test.eod),
            r.test.f1,
            r.test.accuracy
        );
    }
    println!("models in {}", cfg.output.dir.display());
    Ok(0)
}

fn repair(args: &RepairArgs, exec: Execution) -> Result<u8> {
    let mut cfg = args.common.apply()?;
    args.search.apply(&mut cfg);
    let out = experiment::cmd_repair(&cfg, exec)?;
    println!("seed  base_val_eod  val_eod  test_eod  val_f1  best_cost  success");
    for r in &out.runs {
        println!(
            "{:>4}  {:>12}  {:>7}  {:>8}  {:.4}  {:>9.4}  {}",
            r.seed,
            fmt_opt(r.baseline_validation.eod),
            fmt_opt(r.repaired_validation.eod),
            fmt_opt(r.repaired_test.eod),
            r.repaired_validation.f1,
            r.search.best_cost,
            r.success()
        );
    }
    let s = &out.summary;
    println!("validation EOD  {}", fmt_ci(&s.validation_eod));
    println!("test EOD        {}", fmt_ci(&s.test_eod));
    println!("validation F1   {}", fmt_ci(&s.validation_f1));
    println!("EOD improvement {}", fmt_ci(&s.relative_validation_eod_improvement));
    if s.all_succeeded() {
        Ok(0)
    } else {
        eprintln!("F1 floor violated for seeds {:?}", s.failed_seeds);
        Ok(EXIT_FAILED_RUNS)
    }
}

fn sweep(args: &SweepArgs, exec: Execution) -> Result<u8> {
    let mut cfg = args.common.apply()?;
    args.search.apply(&mut cfg);
    if let Some(p) = &args.p_values {
        cfg.sweep.p_values = p.clone();
    }
    let rows = experiment::cmd_sweep(&cfg, exec)?;
    println!("p     seed  val_eod  test_eod  success");
    for r in &rows {
        println!(
            "{:<5} {:>4}  {:>7}  {:>8}  {}",
            format!("{:?}", r.p),
            r.seed,
            fmt_opt(r.validation_eod),
            fmt_opt(r.test_eod),
            r.success
        );
    }
    println!("wrote {}", cfg.output.dir.join("sweep.csv").display());
    Ok(0)
}

fn oracle(args: &OracleArgs, exec: Execution) -> Result<u8> {
    let mut cfg = args.common.apply()?;
    args.search.apply(&mut cfg);
    if let Some(b) = args.budget {
        cfg.oracle.budget = b;
    }
    if let Some(m) = args.good_margin {
        cfg.oracle.good_margin = m;
    }
    if args.dump_costs {
        cfg.oracle.dump_costs = true;
    }
    if let Some(p) = &args.sa_result {
        cfg.oracle.sa_result = Some(p.clone());
    }
    let reports = experiment::cmd_oracle(&cfg, exec)?;
    for r in &reports {
        let c = &r.census;
        println!(
            "seed {}: |S|={} optimum {} cost {:.4}; best {} good {} bad {} ordinary {}; single-neuron cost {:.4}",
            r.seed,
            c.total,
            r.optimum.state,
            r.optimum.cost,
            c.best_count,
            c.good_count,
            c.bad_count,
            c.ordinary_count,
            r.single_neuron.validation_cost
        );
        if let Some(sa) = &r.sa_comparison {
            println!("  SA best {:.4}, delta {:.4}", sa.sa_best_cost, sa.delta);
        }
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a, exec),
        Command::Repair(a) => repair(a, exec),
        Command::Sweep(a) => sweep(a, exec),
        Command::Oracle(a) => {
            if a.budget == Some(0) {
                bail!("--budget must be positive");
            }
            oracle(a, exec)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
