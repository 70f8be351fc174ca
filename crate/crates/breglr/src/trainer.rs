//! Outer auxiliary-function descent loop.
//!
//! Starting from `lambda = 0`, each iteration forms `q^k = sigma(lambda^T A)`,
//! decomposes the auxiliary bound into per-coordinate losses via W+/W-, solves
//! every coordinate subproblem under the remaining box budget, and applies the
//! assembled step. The loss `D_B(0 || q^k)` is non-increasing by construction;
//! coordinates whose updates stay below threshold are dropped.

use std::fmt::Write as _;
use std::path::Path;

use crate::auxfn::{coord_loss, coord_weights, CoordWeights};
use crate::barrier::{solve_subproblem, SubproblemSpec};
use crate::bregman::{loss_at_zero, model_distribution, ConstraintMatrix};
use crate::data::ScaleRecord;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// L1 budget description.
#[derive(Debug, Clone)]
pub enum Budget {
    /// Aggregate ball `||lambda||_1 <= c`, realized as per-coordinate boxes
    /// `u_j = c/n` (the decoupled subproblems solve boxes).
    Aggregate(f64),
    /// Aggregate ball enforced strictly: boxes `u_j = c` plus a rescale of
    /// each sweep's step back onto the ball.
    AggregateStrict(f64),
    /// The same box `|lambda_j| <= u` for every coordinate.
    Uniform(f64),
    /// Explicit per-coordinate boxes.
    PerCoord(Vec<f64>),
}

impl Budget {
    /// Per-coordinate boxes plus the aggregate radius when one is enforced.
    pub fn resolve(&self, n: usize) -> Result<(Vec<f64>, Option<f64>)> {
        let check = |u: f64| -> Result<f64> {
            if u > 0.0 {
                Ok(u)
            } else {
                Err(Error::Config(format!("budget {u} must be positive")))
            }
        };
        match self {
            Budget::Aggregate(c) => Ok((vec![check(*c)? / n as f64; n], None)),
            Budget::AggregateStrict(c) => Ok((vec![check(*c)?; n], Some(*c))),
            Budget::Uniform(u) => Ok((vec![check(*u)?; n], None)),
            Budget::PerCoord(u) => {
                if u.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} budgets for {} features",
                        u.len(),
                        n
                    )));
                }
                for &uj in u {
                    check(uj)?;
                }
                Ok((u.clone(), None))
            }
        }
    }
}

/// Barrier-solver knobs threaded through to every coordinate subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemKnobs {
    pub mu0: f64,
    pub mu_shrink: f64,
    pub tol_kkt: f64,
    pub max_newton: usize,
}

impl Default for SubproblemKnobs {
    fn default() -> Self {
        SubproblemKnobs {
            mu0: 1.0,
            mu_shrink: 0.2,
            tol_kkt: 1e-10,
            max_newton: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub budget: Budget,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_outer: usize,
    pub drop_threshold: f64,
    pub drop_patience: usize,
    pub knobs: SubproblemKnobs,
}

impl TrainConfig {
    pub fn new(budget: Budget) -> Self {
        TrainConfig {
            budget,
            tol_abs: 1e-8,
            tol_rel: 1e-6,
            max_outer: 500,
            drop_threshold: 1e-6,
            drop_patience: 3,
            knobs: SubproblemKnobs::default(),
        }
    }
}

/// Model weights with box budgets, active mask and aggregate bookkeeping.
#[derive(Debug, Clone)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    pub budget_u: Vec<f64>,
    pub aggregate_c: Option<f64>,
}

impl ParamVector {
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn check_feasible(&self) -> Result<()> {
        for (j, (&v, &u)) in self.values.iter().zip(&self.budget_u).enumerate() {
            if v.abs() > u + 1e-9 {
                return Err(Error::Numerical(format!(
                    "|lambda[{j}]| = {} exceeds budget {u}",
                    v.abs()
                )));
            }
        }
        if let Some(c) = self.aggregate_c {
            if self.l1_norm() > c + 1e-9 {
                return Err(Error::Numerical(format!(
                    "||lambda||_1 = {} exceeds aggregate budget {c}",
                    self.l1_norm()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub active_features: usize,
    pub max_abs_delta: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iter,loss,train_err,test_err,active_features,max_abs_delta\n");
        for r in &self.rows {
            let test = r.test_err.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter, r.loss, r.train_err, test, r.active_features, r.max_abs_delta
            );
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Misclassification rate from margins: an example is wrong when its margin
/// `y f(x)` is negative, or zero with true label -1 (ties predict +1).
pub fn error_rate(a: &ConstraintMatrix, lambda: &[f64]) -> Result<f64> {
    let margins = a.margins(lambda)?;
    let errs = margins
        .iter()
        .zip(a.labels())
        .filter(|(&v, &y)| v < 0.0 || (v == 0.0 && y < 0.0))
        .count();
    Ok(errs as f64 / a.n_examples() as f64)
}

fn coordinate_step(
    j: usize,
    w: &CoordWeights,
    lambda: &[f64],
    u: &[f64],
    knobs: &SubproblemKnobs,
) -> Result<(f64, usize)> {
    let mut spec = SubproblemSpec::new(w.w_plus[j], w.w_minus[j], lambda[j], u[j])?;
    spec.mu0 = knobs.mu0;
    spec.mu_shrink = knobs.mu_shrink;
    spec.tol_kkt = knobs.tol_kkt;
    spec.max_newton = knobs.max_newton;
    let (delta, diag) = solve_subproblem(&spec)?;
    // never accept a step that fails the descent certificate
    let delta = if coord_loss(delta, w.w_plus[j], w.w_minus[j]) > 0.0 {
        0.0
    } else {
        delta
    };
    Ok((delta, diag.newton_iters))
}

/// One sweep of coordinate subproblems, sequential version.
pub fn sweep_sequential(
    w: &CoordWeights,
    lambda: &[f64],
    u: &[f64],
    active: &[bool],
    knobs: &SubproblemKnobs,
) -> Result<(Vec<f64>, usize)> {
    let mut delta = vec![0.0; lambda.len()];
    let mut newton = 0;
    for j in 0..lambda.len() {
        if !active[j] {
            continue;
        }
        let (d, it) = coordinate_step(j, w, lambda, u, knobs)?;
        delta[j] = d;
        newton += it;
    }
    Ok((delta, newton))
}

/// One sweep of coordinate subproblems, data-parallel over coordinates
/// (each subproblem only reads the shared weight snapshot).
#[cfg(feature = "parallel")]
pub fn sweep_parallel(
    w: &CoordWeights,
    lambda: &[f64],
    u: &[f64],
    active: &[bool],
    knobs: &SubproblemKnobs,
) -> Result<(Vec<f64>, usize)> {
    let results: Result<Vec<(f64, usize)>> = (0..lambda.len())
        .into_par_iter()
        .map(|j| {
            if active[j] {
                coordinate_step(j, w, lambda, u, knobs)
            } else {
                Ok((0.0, 0))
            }
        })
        .collect();
    let results = results?;
    let newton = results.iter().map(|r| r.1).sum();
    Ok((results.into_iter().map(|r| r.0).collect(), newton))
}

fn sweep(
    w: &CoordWeights,
    lambda: &[f64],
    u: &[f64],
    active: &[bool],
    knobs: &SubproblemKnobs,
) -> Result<(Vec<f64>, usize)> {
    #[cfg(feature = "parallel")]
    {
        sweep_parallel(w, lambda, u, active, knobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(w, lambda, u, active, knobs)
    }
}

/// Deactivates coordinates whose step stays below threshold for
/// `patience` consecutive sweeps while the weight itself is near zero.
#[derive(Debug, Clone)]
pub struct FeatureDropper {
    pub threshold: f64,
    pub patience: usize,
    counters: Vec<usize>,
}

impl FeatureDropper {
    pub fn new(n: usize, threshold: f64, patience: usize) -> Self {
        FeatureDropper {
            threshold,
            patience,
            counters: vec![0; n],
        }
    }

    /// Observes one sweep; flips newly dormant coordinates in `active`.
    pub fn observe(&mut self, delta: &[f64], lambda: &[f64], active: &mut [bool]) -> usize {
        let mut dropped = 0;
        for j in 0..delta.len() {
            if !active[j] {
                continue;
            }
            if delta[j].abs() < self.threshold {
                self.counters[j] += 1;
            } else {
                self.counters[j] = 0;
            }
            if self.counters[j] >= self.patience && lambda[j].abs() < self.threshold {
                active[j] = false;
                dropped += 1;
            }
        }
        dropped
    }
}

pub fn train(a: &ConstraintMatrix, cfg: &TrainConfig) -> Result<(ParamVector, TrainTrace)> {
    train_eval(a, cfg, None)
}

/// Trains on `a`; when `test` is given its error rate is traced per
/// iteration (the test matrix must use the train-derived scaling).
pub fn train_eval(
    a: &ConstraintMatrix,
    cfg: &TrainConfig,
    test: Option<&ConstraintMatrix>,
) -> Result<(ParamVector, TrainTrace)> {
    let n = a.n_features();
    let (u, aggregate) = cfg.budget.resolve(n)?;
    let mut lambda = ParamVector {
        values: vec![0.0; n],
        active: vec![true; n],
        budget_u: u,
        aggregate_c: aggregate,
    };
    let mut dropper = FeatureDropper::new(n, cfg.drop_threshold, cfg.drop_patience);
    let mut trace = TrainTrace::default();

    let mut q = model_distribution(a, &lambda.values)?;
    let mut loss = loss_at_zero(&q)?;
    trace.rows.push(TraceRow {
        iter: 0,
        loss,
        train_err: error_rate(a, &lambda.values)?,
        test_err: test.map(|t| error_rate(t, &lambda.values)).transpose()?,
        active_features: n,
        max_abs_delta: 0.0,
        newton_iters: 0,
    });

    for k in 1..=cfg.max_outer {
        let w = coord_weights(&q, a)?;
        let (mut delta, newton) =
            sweep(&w, &lambda.values, &lambda.budget_u, &lambda.active, &cfg.knobs)?;

        if let Some(c) = aggregate {
            rescale_onto_ball(&lambda.values, &mut delta, c);
        }

        for (v, d) in lambda.values.iter_mut().zip(&delta) {
            *v += d;
        }
        q = model_distribution(a, &lambda.values)?;
        let new_loss = loss_at_zero(&q)?;
        if new_loss.is_nan() {
            return Err(Error::Numerical(format!(
                "loss became NaN at iteration {k}; lambda norm {}",
                lambda.l1_norm()
            )));
        }
        if new_loss > loss + 1e-9 {
            return Err(Error::Numerical(format!(
                "monotonicity violated at iteration {k}: {loss} -> {new_loss}"
            )));
        }
        lambda.check_feasible()?;
        dropper.observe(&delta, &lambda.values, &mut lambda.active);

        let max_abs_delta = delta.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
        trace.rows.push(TraceRow {
            iter: k,
            loss: new_loss,
            train_err: error_rate(a, &lambda.values)?,
            test_err: test.map(|t| error_rate(t, &lambda.values)).transpose()?,
            active_features: lambda.active_count(),
            max_abs_delta,
            newton_iters: newton,
        });

        let decrease = loss - new_loss;
        loss = new_loss;
        if decrease < cfg.tol_abs || decrease < cfg.tol_rel * loss.abs() {
            trace.converged = true;
            break;
        }
        if lambda.active_count() == 0 {
            trace.converged = true;
            break;
        }
    }
    Ok((lambda, trace))
}

/// Shrinks the step until `||lambda + theta delta||_1 <= c`; valid because
/// each coordinate loss is convex with G(0) = 0, so a shrunken step still
/// certifies descent.
fn rescale_onto_ball(lambda: &[f64], delta: &mut [f64], c: f64) {
    let norm = |theta: f64| -> f64 {
        lambda
            .iter()
            .zip(delta.iter())
            .map(|(&l, &d)| (l + theta * d).abs())
            .sum()
    };
    if norm(1.0) <= c {
        return;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if norm(mid) <= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for d in delta.iter_mut() {
        *d *= lo;
    }
}

/// A trained classifier: weights plus the scaling recorded at train time.
#[derive(Debug, Clone)]
pub struct Model {
    pub lambda: Vec<f64>,
    pub active: Vec<bool>,
    pub scale: ScaleRecord,
    pub positive_label: String,
    pub negative_label: String,
}

impl Model {
    /// Predicted label (ties toward +1) and `P(y = +1 | x)` for one raw
    /// instance, scaled exactly as at train time.
    pub fn predict(&self, raw: &[f64]) -> Result<(i8, f64)> {
        let x = self.scale.apply(raw)?;
        if x.len() != self.lambda.len() {
            return Err(Error::Dimension(format!(
                "model has {} weights, scaled instance has {}",
                self.lambda.len(),
                x.len()
            )));
        }
        let f: f64 = self.lambda.iter().zip(&x).map(|(&l, &v)| l * v).sum();
        let prob = 1.0 / (1.0 + (-f).exp());
        Ok((if f >= 0.0 { 1 } else { -1 }, prob))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("breglr-model v1\n");
        let _ = writeln!(out, "positive_label {}", self.positive_label);
        let _ = writeln!(out, "negative_label {}", self.negative_label);
        let _ = writeln!(out, "intercept {}", u8::from(self.scale.intercept));
        let _ = writeln!(out, "per_example {}", u8::from(self.scale.per_example));
        let _ = writeln!(out, "divisor {}", self.scale.divisor);
        let _ = writeln!(out, "n_raw {}", self.scale.feature_range.len());
        for (j, (lo, hi)) in self.scale.feature_range.iter().enumerate() {
            let _ = writeln!(out, "range {j} {lo} {hi}");
        }
        for (j, (&l, &act)) in self.lambda.iter().zip(&self.active).enumerate() {
            let _ = writeln!(out, "lambda {j} {l} {}", u8::from(act));
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lines = text.lines();
        let bad = |what: &str| Error::Data(format!("model file {path:?}: {what}", path = path));
        if lines.next() != Some("breglr-model v1") {
            return Err(bad("missing version tag"));
        }
        let mut positive_label = String::new();
        let mut negative_label = String::new();
        let mut intercept = false;
        let mut per_example = false;
        let mut divisor = 0.0;
        let mut range = Vec::new();
        let mut lambda = Vec::new();
        let mut active = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("positive_label") => positive_label = it.next().unwrap_or("").to_string(),
                Some("negative_label") => negative_label = it.next().unwrap_or("").to_string(),
                Some("intercept") => intercept = it.next() == Some("1"),
                Some("per_example") => per_example = it.next() == Some("1"),
                Some("divisor") => {
                    divisor = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad divisor"))?
                }
                Some("n_raw") => {}
                Some("range") => {
                    let _j = it.next();
                    let lo: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad range"))?;
                    let hi: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad range"))?;
                    range.push((lo, hi));
                }
                Some("lambda") => {
                    let _j = it.next();
                    let l: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad lambda"))?;
                    lambda.push(l);
                    active.push(it.next() == Some("1"));
                }
                _ => {}
            }
        }
        if divisor <= 0.0 || range.is_empty() || lambda.is_empty() {
            return Err(bad("incomplete model"));
        }
        Ok(Model {
            lambda,
            active,
            scale: ScaleRecord {
                feature_range: range,
                divisor,
                intercept,
                per_example,
            },
            positive_label,
            negative_label,
        })
    }
}
