//! Independent projected-gradient solver for the constrained log-loss.
//!
//! Minimizes `sum_i ln(1 + e^{-(lambda^T A)_i})` over the L1 ball or the
//! per-coordinate box by gradient steps with Armijo backtracking followed by
//! exact projection. Deliberately shares no code with the Bregman descent
//! path; it exists to validate it.

use crate::bregman::ConstraintMatrix;
use crate::error::{Error, Result};

/// Budget description shared with the trainer.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// `||lambda||_1 <= radius`.
    L1Ball(f64),
    /// `|lambda_j| <= u_j` per coordinate.
    Box(Vec<f64>),
}

impl Constraint {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Constraint::L1Ball(radius) => l1_project(v, *radius),
            Constraint::Box(u) => v
                .iter()
                .zip(u)
                .map(|(&x, &uj)| x.clamp(-uj, uj))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub constraint: Constraint,
}

impl OracleConfig {
    pub fn new(constraint: Constraint) -> Self {
        OracleConfig {
            step_size: 1.0,
            max_iters: 200_000,
            tol: 1e-8,
            constraint,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Stable `ln(1 + e^{-v})`.
fn softplus_neg(v: f64) -> f64 {
    if v >= 0.0 {
        (-v).exp().ln_1p()
    } else {
        -v + v.exp().ln_1p()
    }
}

/// `sigma(v) = 1/(1+e^v)` without overflow.
fn sigma(v: f64) -> f64 {
    if v >= 0.0 {
        let e = (-v).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + v.exp())
    }
}

/// Log-loss `sum_i ln(1 + e^{-(lambda^T A)_i})` evaluated directly.
pub fn objective(a: &ConstraintMatrix, lambda: &[f64]) -> Result<f64> {
    Ok(a.margins(lambda)?.iter().map(|&v| softplus_neg(v)).sum())
}

/// Gradient of the log-loss: `-A q(lambda)` with `q_i = sigma(margin_i)`.
pub fn gradient(a: &ConstraintMatrix, lambda: &[f64]) -> Result<Vec<f64>> {
    let q: Vec<f64> = a.margins(lambda)?.iter().map(|&v| sigma(v)).collect();
    let mut g = vec![0.0; a.n_features()];
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = -a.row(j).iter().zip(&q).map(|(&aji, &qi)| aji * qi).sum::<f64>();
    }
    Ok(g)
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` by the exact
/// sort-and-soft-threshold construction.
pub fn l1_project(v: &[f64], radius: f64) -> Vec<f64> {
    let radius = radius.max(0.0);
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if candidate >= m {
            break;
        }
        theta = candidate;
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Projected gradient with Armijo backtracking from `step_size`.
pub fn oracle_solve(a: &ConstraintMatrix, cfg: &OracleConfig) -> Result<OracleSolution> {
    if !(cfg.step_size > 0.0) {
        return Err(Error::Config("oracle step_size must be positive".into()));
    }
    let n = a.n_features();
    if let Constraint::Box(u) = &cfg.constraint {
        if u.len() != n {
            return Err(Error::Dimension(format!(
                "box constraint has {} bounds for {} features",
                u.len(),
                n
            )));
        }
    }
    let mut lambda = cfg.constraint.project(&vec![0.0; n]);
    let mut obj = objective(a, &lambda)?;
    let mut eta = cfg.step_size;
    for iter in 0..cfg.max_iters {
        let g = gradient(a, &lambda)?;
        // projected-gradient residual with unit step
        let probe: Vec<f64> = lambda.iter().zip(&g).map(|(&l, &gj)| l - gj).collect();
        let probe = cfg.constraint.project(&probe);
        let resid = lambda
            .iter()
            .zip(&probe)
            .fold(0.0_f64, |acc, (&l, &p)| acc.max((l - p).abs()));
        if resid <= cfg.tol {
            return Ok(OracleSolution {
                lambda,
                objective: obj,
                iters: iter,
                converged: true,
            });
        }
        // backtracking from a gently growing step
        eta = (eta * 2.0).min(1e6);
        loop {
            let trial: Vec<f64> = lambda
                .iter()
                .zip(&g)
                .map(|(&l, &gj)| l - eta * gj)
                .collect();
            let trial = cfg.constraint.project(&trial);
            let trial_obj = objective(a, &trial)?;
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&lambda))
                .map(|(&gj, (&t, &l))| gj * (t - l))
                .sum();
            if trial_obj <= obj + 1e-4 * decrease || eta < 1e-16 {
                lambda = trial;
                obj = trial_obj;
                break;
            }
            eta *= 0.5;
        }
    }
    Ok(OracleSolution {
        lambda,
        objective: obj,
        iters: cfg.max_iters,
        converged: false,
    })
}
