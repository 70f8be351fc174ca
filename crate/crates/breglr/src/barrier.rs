//! Primal-dual log-barrier solver for the decoupled coordinate subproblems.
//!
//! Each coordinate j minimizes `G(delta) + a(s + t) - mu (ln s + ln t)`
//! subject to `delta + s - t = c`, `G(delta) + r = 0` and `r >= 0`, where
//! `G(delta) = w+ (e^{-delta} - 1) + w- (e^{delta} - 1)` and `c = u_j - lambda_j`.
//! The slack positivity `r >= 0` is handled primal-dually: its multiplier
//! `lam` obeys the centrality condition `lam r = mu`. The modified KKT
//! residual is driven to zero by damped Newton steps on the 7x7 system in
//! `(delta, r, s, t, lam, nu1, nu2)` while a master schedule shrinks the
//! barrier parameter `mu` toward zero. Interior iterates are kept by a
//! fraction-to-boundary rule.

use crate::auxfn::{coord_loss, coord_loss_grad, coord_loss_hess};
use crate::error::{Error, Result};

const MU_MIN: f64 = 1e-9;
const FRACTION_TO_BOUNDARY: f64 = 0.95;
const TIKHONOV: f64 = 1e-10;
/// Below this total weight a coordinate is inert: G is identically 0 and
/// delta stays 0 to preserve sparsity.
const INERT_WEIGHT: f64 = 1e-300;
/// No strict descent is available when the best feasible G is above this.
const DESCENT_EPS: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub w_plus: f64,
    pub w_minus: f64,
    /// Upper end of the feasible interval for delta: `c = u_j - lambda_j`.
    pub c: f64,
    /// Lower end of the feasible interval: `-u_j - lambda_j`.
    pub lo: f64,
    pub penalty_a: f64,
    pub mu0: f64,
    pub mu_shrink: f64,
    pub tol_kkt: f64,
    pub max_newton: usize,
}

impl SubproblemSpec {
    /// Builds the spec for coordinate j from its weights, current parameter
    /// value and box budget `|lambda_j + delta| <= u_j`.
    pub fn new(w_plus: f64, w_minus: f64, lambda_j: f64, u_j: f64) -> Result<Self> {
        if u_j < 0.0 || u_j.is_nan() {
            return Err(Error::Config(format!("budget u = {u_j} must be >= 0")));
        }
        if w_plus < 0.0 || w_minus < 0.0 {
            return Err(Error::Config("coordinate weights must be nonnegative".into()));
        }
        Ok(SubproblemSpec {
            w_plus,
            w_minus,
            c: u_j - lambda_j,
            lo: -u_j - lambda_j,
            // Small relative to the weights: the slack penalty only has to
            // break the degeneracy in (s, t), any visible magnitude would
            // bias delta away from the minimizer of G.
            penalty_a: 1e-5 * (1.0 + w_plus + w_minus),
            mu0: 1.0,
            mu_shrink: 0.2,
            tol_kkt: 1e-10,
            max_newton: 80,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu_shrink > 0.0 && self.mu_shrink < 1.0) {
            return Err(Error::Config(format!(
                "mu_shrink = {} must lie in (0,1)",
                self.mu_shrink
            )));
        }
        if !(self.tol_kkt > 0.0) || !(self.mu0 > 0.0) || !(self.penalty_a > 0.0) {
            return Err(Error::Config(
                "tol_kkt, mu0 and penalty_a must be positive".into(),
            ));
        }
        if self.lo > self.c {
            return Err(Error::Config(format!(
                "empty feasible interval [{}, {}]",
                self.lo, self.c
            )));
        }
        Ok(())
    }

    fn g(&self, d: f64) -> f64 {
        coord_loss(d, self.w_plus, self.w_minus)
    }

    fn g1(&self, d: f64) -> f64 {
        coord_loss_grad(d, self.w_plus, self.w_minus)
    }

    fn g2(&self, d: f64) -> f64 {
        coord_loss_hess(d, self.w_plus, self.w_minus)
    }

    /// Unconstrained minimizer of G clamped to the feasible interval.
    fn clamped_minimizer(&self) -> f64 {
        let d = if self.w_plus > 0.0 && self.w_minus > 0.0 {
            0.5 * (self.w_plus / self.w_minus).ln()
        } else if self.w_plus > 0.0 {
            f64::INFINITY // G strictly decreasing
        } else {
            f64::NEG_INFINITY // G strictly increasing
        };
        d.clamp(self.lo, self.c)
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemState {
    pub delta: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    /// Multiplier for `r >= 0`, paired with r in the centrality row.
    pub lam_ineq: f64,
    /// Multipliers for the two equality rows (delta + s - t = c, G + r = 0).
    pub nu: [f64; 2],
    pub mu: f64,
}

impl SubproblemState {
    fn interior(&self) -> bool {
        self.s > 0.0 && self.t > 0.0 && self.r > 0.0
    }

    fn norm_inf(&self) -> f64 {
        [
            self.delta,
            self.r,
            self.s,
            self.t,
            self.lam_ineq,
            self.nu[0],
            self.nu[1],
        ]
        .iter()
        .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// KKT residual split into its dual, centrality and primal blocks.
#[derive(Debug, Clone)]
pub struct KktResidual {
    pub dual: [f64; 4],
    pub cent: f64,
    pub pri: [f64; 2],
}

impl KktResidual {
    pub fn norm_inf(&self) -> f64 {
        self.stacked().iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn norm2(&self) -> f64 {
        self.stacked().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn stacked(&self) -> [f64; 7] {
        [
            self.dual[0],
            self.dual[1],
            self.dual[2],
            self.dual[3],
            self.cent,
            self.pri[0],
            self.pri[1],
        ]
    }
}

/// Stacked residual of the modified KKT conditions at the current point,
/// with `x = [delta, r, s, t]`, `f0 = G + a(s+t) - mu(ln s + ln t)`, the
/// inequality `-r <= 0` with multiplier lam, and the equality rows
/// `delta + s - t = c` (multiplier nu1), `G + r = 0` (multiplier nu2).
pub fn kkt_residual(spec: &SubproblemSpec, st: &SubproblemState) -> Result<KktResidual> {
    if !st.interior() {
        return Err(Error::Domain(format!(
            "non-interior state: r={}, s={}, t={}",
            st.r, st.s, st.t
        )));
    }
    let gp = spec.g1(st.delta);
    let g = spec.g(st.delta);
    let a = spec.penalty_a;
    let mu = st.mu;
    // grad f0 - lam e_r + nu1 Aeq1 + nu2 Aeq2, with Aeq2 = [G', 1, 0, 0]
    let dual = [
        gp * (1.0 + st.nu[1]) + st.nu[0],
        -st.lam_ineq + st.nu[1],
        a - mu / st.s + st.nu[0],
        a - mu / st.t - st.nu[0],
    ];
    // Boyd-style centrality for -r <= 0: -lam (-r) - mu
    let cent = st.lam_ineq * st.r - mu;
    let pri = [st.delta + st.s - st.t - spec.c, g + st.r];
    Ok(KktResidual { dual, cent, pri })
}

/// Dense 7x7 solve by Gaussian elimination with partial pivoting.
fn solve7(mut m: [[f64; 7]; 7], mut b: [f64; 7]) -> Option<[f64; 7]> {
    for col in 0..7 {
        let mut piv = col;
        for row in col + 1..7 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..7 {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..7 {
                m[row][k] -= factor * m[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 7];
    for row in (0..7).rev() {
        let mut acc = b[row];
        for k in row + 1..7 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        None
    } else {
        Some(x)
    }
}

/// Jacobian of the modified KKT residual, with `reg` added to the diagonal
/// of the Hessian block (and to the lam column of the centrality row).
pub fn assemble_matrix(spec: &SubproblemSpec, st: &SubproblemState, reg: f64) -> [[f64; 7]; 7] {
    let gp = spec.g1(st.delta);
    let gpp = spec.g2(st.delta);
    let mu = st.mu;
    let mut m = [[0.0; 7]; 7];
    // Hessian of the Lagrangian over x = (delta, r, s, t)
    m[0][0] = gpp * (1.0 + st.nu[1]) + reg;
    m[1][1] = reg;
    m[2][2] = mu / (st.s * st.s) + reg;
    m[3][3] = mu / (st.t * st.t) + reg;
    // columns for lam (-e_r), nu1 (Aeq1) and nu2 (Aeq2)
    m[1][4] = -1.0;
    m[0][5] = 1.0;
    m[2][5] = 1.0;
    m[3][5] = -1.0;
    m[0][6] = gp;
    m[1][6] = 1.0;
    // centrality row: d/dr(lam r) = lam, d/dlam = r
    m[4][1] = st.lam_ineq;
    m[4][4] = st.r + reg;
    // primal rows
    m[5][0] = 1.0;
    m[5][2] = 1.0;
    m[5][3] = -1.0;
    m[6][0] = gp;
    m[6][1] = 1.0;
    m
}

/// One Newton step on the KKT system; returns the 7-vector
/// `(d delta, d r, d s, d t, d lam, d nu1, d nu2)`.
///
/// A singular system is retried with Tikhonov regularization on the diagonal.
pub fn newton_step(spec: &SubproblemSpec, st: &SubproblemState) -> Result<[f64; 7]> {
    let res = kkt_residual(spec, st)?;
    let rhs = res.stacked().map(|v| -v);
    if let Some(step) = solve7(assemble_matrix(spec, st, 0.0), rhs) {
        return Ok(step);
    }
    solve7(assemble_matrix(spec, st, TIKHONOV), rhs)
        .ok_or_else(|| Error::Numerical("singular KKT system even after regularization".into()))
}

#[derive(Debug, Clone, Default)]
pub struct SubproblemDiagnostics {
    pub newton_iters: usize,
    pub converged: bool,
    /// Final KKT residual inf-norm at each barrier stage.
    pub residual_history: Vec<f64>,
    /// Barrier solution before projection onto the exact interval.
    pub pre_projection_delta: f64,
    /// True when the analytic shortcut answered without a barrier path
    /// (inert coordinate or no strictly feasible descent).
    pub analytic: bool,
}

fn apply_step(st: &SubproblemState, step: &[f64; 7], alpha: f64) -> SubproblemState {
    SubproblemState {
        delta: st.delta + alpha * step[0],
        r: st.r + alpha * step[1],
        s: st.s + alpha * step[2],
        t: st.t + alpha * step[3],
        lam_ineq: st.lam_ineq + alpha * step[4],
        nu: [st.nu[0] + alpha * step[5], st.nu[1] + alpha * step[6]],
        mu: st.mu,
    }
}

/// Largest step factor keeping s, t, r and lam strictly positive.
fn fraction_to_boundary(st: &SubproblemState, step: &[f64; 7]) -> f64 {
    let mut alpha = 1.0_f64;
    for (v, dv) in [
        (st.r, step[1]),
        (st.s, step[2]),
        (st.t, step[3]),
        (st.lam_ineq, step[4]),
    ] {
        if dv < 0.0 {
            alpha = alpha.min(FRACTION_TO_BOUNDARY * (-v / dv));
        }
    }
    alpha
}

/// Damped Newton iterations at a fixed barrier parameter.
///
/// Converged when the dual and primal blocks are below the scaled tolerance
/// and the centrality residual is O(mu); the latter shrinks with the
/// schedule, so the limit satisfies exact complementarity.
fn solve_at_mu(
    spec: &SubproblemSpec,
    st: &mut SubproblemState,
    diag: &mut SubproblemDiagnostics,
) -> Result<bool> {
    for _ in 0..spec.max_newton {
        let res = kkt_residual(spec, st)?;
        let scale = 1.0 + st.norm_inf();
        let dp = res
            .dual
            .iter()
            .chain(&res.pri)
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if dp <= spec.tol_kkt * scale && res.cent.abs() <= 10.0 * st.mu {
            return Ok(true);
        }
        let step = newton_step(spec, st)?;
        let mut alpha = fraction_to_boundary(st, &step);
        let base = res.norm2();
        let mut accepted = false;
        for _ in 0..40 {
            let trial = apply_step(st, &step, alpha);
            if trial.interior() {
                if let Ok(tres) = kkt_residual(spec, &trial) {
                    if tres.norm2() <= (1.0 - 1e-4 * alpha) * base {
                        *st = trial;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        diag.newton_iters += 1;
        if !accepted {
            // stalled line search; residual can no longer be reduced here
            return Ok(dp <= 1e3 * spec.tol_kkt * scale);
        }
    }
    Ok(false)
}

/// Solves one coordinate subproblem over the barrier path and returns the
/// minimizing delta, projected onto the exact interval `[lo, c]`.
pub fn solve_subproblem(spec: &SubproblemSpec) -> Result<(f64, SubproblemDiagnostics)> {
    spec.validate()?;
    let mut diag = SubproblemDiagnostics::default();

    if spec.w_plus + spec.w_minus < INERT_WEIGHT {
        // inert coordinate: G is identically zero, keep delta at 0
        diag.analytic = true;
        diag.converged = true;
        return Ok((0.0, diag));
    }

    let d_best = spec.clamped_minimizer();
    if spec.g(d_best) > -DESCENT_EPS {
        // No strictly feasible point with G < 0 exists (the minimum of G over
        // the box is ~0, attained at or next to delta = 0). Zero is optimal.
        diag.analytic = true;
        diag.converged = true;
        return Ok((0.0, diag));
    }

    // Strictly feasible start between 0 and the clamped minimizer: G < 0
    // there by convexity since G(0) = 0 and G(d_best) < 0.
    let d0 = if spec.w_plus > 0.0 && spec.w_minus > 0.0 {
        0.5 * d_best
    } else {
        0.9 * d_best
    };
    let gap = spec.c - d0; // >= 0 since d0 is inside [lo, c]
    let r0 = -spec.g(d0);
    let lam0 = spec.mu0 / r0; // on-center for the lam r = mu condition
    let mut st = SubproblemState {
        delta: d0,
        r: r0,
        s: gap + 1.0,
        t: 1.0,
        lam_ineq: lam0,
        nu: [0.0, lam0],
        mu: spec.mu0,
    };

    let mut all_converged = true;
    while st.mu >= MU_MIN {
        let ok = solve_at_mu(spec, &mut st, &mut diag)?;
        all_converged &= ok;
        diag.residual_history.push(kkt_residual(spec, &st)?.norm_inf());
        st.mu *= spec.mu_shrink;
    }

    diag.pre_projection_delta = st.delta;
    diag.converged = all_converged;
    let mut delta = st.delta.clamp(spec.lo, spec.c);
    if !all_converged && spec.g(d_best) < spec.g(delta) {
        // stalled barrier path; fall back to the analytic minimizer so the
        // caller still gets a feasible descent step
        delta = d_best;
        diag.analytic = true;
    }
    Ok((delta, diag))
}
