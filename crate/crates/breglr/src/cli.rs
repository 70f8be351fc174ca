//! Command-line surface: train, eval, bench and synth subcommands.
//!
//! Output formats: traces are CSV (iter, loss, train_err, test_err,
//! active_features, max_abs_delta), models are a versioned text format, and
//! metrics are one CSV row per method with the TP/FN/FP/TN/accuracy schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bregman::ConstraintMatrix;
use crate::data::{
    constraint_matrix, load_csv_with, normalize, split, synth_hyperplane, CsvOptions, Dataset,
    NormalizeOptions,
};
use crate::error::{Error, Result};
use crate::oracle::{oracle_solve, Constraint, OracleConfig};
use crate::trainer::{train_eval, Budget, Model, SubproblemKnobs, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "breglr", version, about = "L1-constrained logistic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the model and trace files.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Compare the trainer, the oracle and an unregularized run.
    Bench(TrainArgs),
    /// Generate a synthetic noisy-hyperplane dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BudgetMode {
    /// `||lambda||_1 <= budget` via per-coordinate boxes budget/n.
    Aggregate,
    /// `||lambda||_1 <= budget` enforced exactly by rescaling each sweep.
    AggregateStrict,
    /// The same box `|lambda_j| <= budget` on every coordinate.
    PerCoord,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV dataset path.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Zero-based index of the label column.
    #[arg(long, default_value_t = 0)]
    pub label_col: usize,
    /// Token in the label column mapped to +1.
    #[arg(long, default_value = "+1")]
    pub positive_label: String,
    /// Comma-separated column indices to ignore (identifiers etc).
    #[arg(long, value_delimiter = ',')]
    pub ignore_cols: Vec<usize>,
    /// Column holding a bag identifier for multiple-instance evaluation.
    #[arg(long)]
    pub bag_col: Option<usize>,
    /// Synthetic data dimension (alternative to --data).
    #[arg(long)]
    pub synth_dim: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub synth_train: usize,
    #[arg(long, default_value_t = 200)]
    pub synth_test: usize,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// L1 budget.
    #[arg(long, default_value_t = 5.0)]
    pub budget: f64,
    #[arg(long, value_enum, default_value_t = BudgetMode::Aggregate)]
    pub budget_mode: BudgetMode,
    /// Initial barrier parameter.
    #[arg(long, default_value_t = 1.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mu_shrink: f64,
    /// KKT tolerance for the coordinate subproblems.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub drop_threshold: f64,
    /// Held-out fraction for the test split (0 disables).
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Skip the intercept feature.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub m_train: usize,
    #[arg(long, default_value_t = 200)]
    pub m_test: usize,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Confusion counts and summary metrics in the Tables 1-2 column schema.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub active_features: usize,
    pub final_loss: f64,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    fn from_pairs(pairs: impl Iterator<Item = (i8, i8)>) -> Self {
        let mut rep = MetricsReport::default();
        for (truth, pred) in pairs {
            match (truth > 0, pred > 0) {
                (true, true) => rep.tp += 1,
                (true, false) => rep.fn_ += 1,
                (false, true) => rep.fp += 1,
                (false, false) => rep.tn += 1,
            }
        }
        let total = rep.total();
        rep.accuracy = if total == 0 {
            0.0
        } else {
            (rep.tp + rep.tn) as f64 / total as f64
        };
        rep
    }
}

/// Instance-level metrics of a weight vector on a constraint matrix.
pub fn metrics_from_margins(a: &ConstraintMatrix, lambda: &[f64]) -> Result<MetricsReport> {
    let margins = a.margins(lambda)?;
    Ok(MetricsReport::from_pairs(
        margins.iter().zip(a.labels()).map(|(&v, &y)| {
            let f = y * v;
            (if y > 0.0 { 1 } else { -1 }, if f >= 0.0 { 1 } else { -1 })
        }),
    ))
}

/// Bag-level metrics: a bag is positive iff any of its instances is, both in
/// truth and in prediction.
pub fn bag_metrics(ds: &Dataset, model: &Model) -> Result<MetricsReport> {
    let bags = ds
        .bags
        .as_ref()
        .ok_or_else(|| Error::Config("dataset has no bag column".into()))?;
    let mut order: Vec<String> = Vec::new();
    let mut truth: std::collections::HashMap<&str, bool> = Default::default();
    let mut pred: std::collections::HashMap<&str, bool> = Default::default();
    for i in 0..ds.n_instances() {
        let b = bags[i].as_str();
        if !truth.contains_key(b) {
            order.push(bags[i].clone());
        }
        let (p, _) = model.predict(ds.instance(i))?;
        *truth.entry(b).or_insert(false) |= ds.labels()[i] > 0.0;
        *pred.entry(b).or_insert(false) |= p > 0;
    }
    Ok(MetricsReport::from_pairs(order.iter().map(|b| {
        (
            if truth[b.as_str()] { 1 } else { -1 },
            if pred[b.as_str()] { 1 } else { -1 },
        )
    })))
}

fn write_metrics(path: &Path, rows: &[(&str, &MetricsReport)]) -> Result<()> {
    let mut out = String::from("method,TP,FN,FP,TN,accuracy,active_features,final_loss\n");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            name, r.tp, r.fn_, r.fp, r.tn, r.accuracy, r.active_features, r.final_loss
        );
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn load_data(args: &DataArgs, seed: u64, test_fraction: f64) -> Result<(Dataset, Option<Dataset>)> {
    match (&args.data, args.synth_dim) {
        (Some(path), None) => {
            let opts = CsvOptions {
                ignore_cols: args.ignore_cols.clone(),
                bag_col: args.bag_col,
            };
            let report = load_csv_with(path, args.label_col, &args.positive_label, &opts)?;
            if report.rejected_rows > 0 {
                log::warn!("rejected {} malformed rows", report.rejected_rows);
            }
            if test_fraction > 0.0 {
                let (train, test) = split(&report.dataset, test_fraction, seed)?;
                Ok((train, Some(test)))
            } else {
                Ok((report.dataset, None))
            }
        }
        (None, Some(dim)) => {
            let (train, test) =
                synth_hyperplane(dim, args.synth_train, args.synth_test, args.sigma, seed)?;
            Ok((train, Some(test)))
        }
        _ => Err(Error::Config(
            "exactly one data source required: --data or --synth-dim".into(),
        )),
    }
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    let budget = match args.budget_mode {
        BudgetMode::Aggregate => Budget::Aggregate(args.budget),
        BudgetMode::AggregateStrict => Budget::AggregateStrict(args.budget),
        BudgetMode::PerCoord => Budget::Uniform(args.budget),
    };
    let mut cfg = TrainConfig::new(budget);
    cfg.max_outer = args.max_iter;
    cfg.drop_threshold = args.drop_threshold;
    cfg.knobs = SubproblemKnobs {
        mu0: args.mu0,
        mu_shrink: args.mu_shrink,
        tol_kkt: args.tol,
        max_newton: 80,
    };
    cfg
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

struct Trained {
    model: Model,
    lambda: crate::trainer::ParamVector,
    trace: crate::trainer::TrainTrace,
    train_matrix: ConstraintMatrix,
    test_matrix: Option<ConstraintMatrix>,
}

fn run_training(args: &TrainArgs, cfg: &TrainConfig) -> Result<Trained> {
    let (train_ds, test_ds) = load_data(&args.data, args.seed, args.test_fraction)?;
    if train_ds.n_features() == 0 {
        return Err(Error::Data("dataset has no features".into()));
    }
    let opts = NormalizeOptions {
        intercept: !args.no_intercept,
        per_example: false,
    };
    let (scaled, a) = normalize(&train_ds, opts)?;
    let record = scaled.scale_record.clone().expect("normalize sets the record");
    let test_matrix = test_ds
        .as_ref()
        .map(|t| constraint_matrix(t, &record))
        .transpose()?;
    let (lambda, trace) = train_eval(&a, cfg, test_matrix.as_ref())?;
    let model = Model {
        lambda: lambda.values.clone(),
        active: lambda.active.clone(),
        scale: record,
        positive_label: train_ds.positive_label.clone(),
        negative_label: train_ds.negative_label.clone(),
    };
    Ok(Trained {
        model,
        lambda,
        trace,
        train_matrix: a,
        test_matrix,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    ensure_out(&args.out)?;
    let cfg = train_config(args);
    let trained = run_training(args, &cfg)?;
    trained.model.save(&args.out.join("model.txt"))?;
    trained.trace.to_csv(&args.out.join("trace.csv"))?;
    let metrics = metrics_from_margins(&trained.train_matrix, &trained.lambda.values)?;
    println!(
        "final loss {:.6}, train accuracy {:.4}, {} active features, {} iterations",
        trained.trace.final_loss(),
        metrics.accuracy,
        trained.lambda.active_count(),
        trained.trace.rows.len() - 1
    );
    if !trained.trace.converged {
        return Err(Error::NonConvergence(format!(
            "outer loop hit the {}-iteration cap",
            cfg.max_outer
        )));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    ensure_out(&args.out)?;
    let model = Model::load(&args.model)?;
    let (ds, _) = load_data(&args.data, 0, 0.0)?;
    let mut rep = MetricsReport::from_pairs((0..ds.n_instances()).map(|i| {
        let (p, _) = model.predict(ds.instance(i)).expect("dimension checked");
        (if ds.labels()[i] > 0.0 { 1 } else { -1 }, p)
    }));
    rep.active_features = model.active.iter().filter(|&&a| a).count();
    let mut rows: Vec<(&str, &MetricsReport)> = vec![("model", &rep)];
    let bag;
    if ds.bags.is_some() {
        bag = bag_metrics(&ds, &model)?;
        rows.push(("model-bag-level", &bag));
    }
    write_metrics(&args.out.join("metrics.csv"), &rows)?;
    for (name, r) in &rows {
        println!(
            "{name}: TP {} FN {} FP {} TN {} acc {:.4}",
            r.tp, r.fn_, r.fp, r.tn, r.accuracy
        );
    }
    Ok(())
}

pub fn cmd_bench(args: &TrainArgs) -> Result<()> {
    ensure_out(&args.out)?;

    // our method
    let cfg = train_config(args);
    let trained = run_training(args, &cfg)?;
    let eval_matrix = trained.test_matrix.as_ref().unwrap_or(&trained.train_matrix);
    let mut l1lrb = metrics_from_margins(eval_matrix, &trained.lambda.values)?;
    l1lrb.active_features = trained.lambda.active_count();
    l1lrb.final_loss = trained.trace.final_loss();
    trained.trace.to_csv(&args.out.join("curves_l1lrb.csv"))?;
    trained.model.save(&args.out.join("model.txt"))?;

    // unregularized: same pipeline under an effectively inactive budget
    let mut unreg_args_cfg = cfg.clone();
    unreg_args_cfg.budget = Budget::Uniform(1e3);
    let unreg = run_training(args, &unreg_args_cfg)?;
    let unreg_eval = unreg.test_matrix.as_ref().unwrap_or(&unreg.train_matrix);
    let mut unreg_rep = metrics_from_margins(unreg_eval, &unreg.lambda.values)?;
    unreg_rep.active_features = unreg.lambda.active_count();
    unreg_rep.final_loss = unreg.trace.final_loss();
    unreg.trace.to_csv(&args.out.join("curves_unregularized.csv"))?;

    // oracle on the identical constrained problem
    let n = trained.train_matrix.n_features();
    let constraint = match args.budget_mode {
        BudgetMode::Aggregate => Constraint::Box(vec![args.budget / n as f64; n]),
        BudgetMode::AggregateStrict => Constraint::L1Ball(args.budget),
        BudgetMode::PerCoord => Constraint::Box(vec![args.budget; n]),
    };
    let sol = oracle_solve(&trained.train_matrix, &OracleConfig::new(constraint))?;
    let mut oracle_rep = metrics_from_margins(eval_matrix, &sol.lambda)?;
    oracle_rep.active_features = sol.lambda.iter().filter(|l| l.abs() > 1e-9).count();
    oracle_rep.final_loss = sol.objective;

    write_metrics(
        &args.out.join("metrics.csv"),
        &[
            ("L1LRB", &l1lrb),
            ("oracle", &oracle_rep),
            ("unregularized", &unreg_rep),
        ],
    )?;
    for (name, r) in [("L1LRB", &l1lrb), ("oracle", &oracle_rep), ("unregularized", &unreg_rep)] {
        println!(
            "{name}: TP {} FN {} FP {} TN {} acc {:.4} ({} active)",
            r.tp, r.fn_, r.fp, r.tn, r.accuracy, r.active_features
        );
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    ensure_out(&args.out)?;
    let (train, test) = synth_hyperplane(args.dim, args.m_train, args.m_test, args.sigma, args.seed)?;
    train.to_csv(&args.out.join("train.csv"))?;
    test.to_csv(&args.out.join("test.csv"))?;
    println!(
        "wrote {} train and {} test instances of dimension {}",
        train.n_instances(),
        test.n_instances(),
        args.dim
    );
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter("BREGLR_LOG_LEVEL")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Dimension(_) => 1,
                Error::Data(_) | Error::Io { .. } | Error::Domain(_) => 2,
                Error::NonConvergence(_) | Error::Numerical(_) => 3,
            }
        }
    }
}
