//! Generators, Bregman distances and Legendre transforms.
//!
//! The logistic generator is the bit entropy
//! `F(p) = sum_i p_i ln p_i + (1-p_i) ln(1-p_i)` on `[0,1]^m`; its Bregman
//! distance is the binary relative entropy and its Legendre transform is a
//! coordinatewise sigmoid reweighting. The unnormalized-entropy generator
//! `F(p) = sum_i p_i ln p_i` on the nonnegative orthant is provided for the
//! classical unnormalized relative entropy.
//!
//! Everything here is a pure function of its inputs; infinite distances are
//! a representable result (`f64::INFINITY`), not an error.

use crate::error::{Error, Result};

/// Convex generator inducing a Bregman distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Bit entropy `p ln p + (1-p) ln(1-p)` on `[0,1]`.
    LogisticEntropy,
    /// `p ln p` on `[0, inf)`.
    UnnormalizedEntropy,
}

#[derive(Debug, Clone, Copy)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub domain_dim: usize,
}

/// A point of the generator's domain; for the logistic generator this is the
/// per-example "distribution" iterate q in [0,1]^m.
#[derive(Debug, Clone, PartialEq)]
pub struct DistPoint {
    values: Vec<f64>,
}

impl DistPoint {
    pub fn new(values: Vec<f64>) -> Self {
        DistPoint { values }
    }

    pub fn uniform_half(m: usize) -> Self {
        DistPoint {
            values: vec![0.5; m],
        }
    }

    pub fn zeros(m: usize) -> Self {
        DistPoint {
            values: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `x ln x` with the convention `0 ln 0 = 0`.
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `p ln(p/q)` with `0 ln(0/q) = 0`; infinite when `p > 0, q = 0`.
fn xlnxy(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if q == 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

impl Generator {
    pub fn logistic(m: usize) -> Self {
        Generator {
            kind: GeneratorKind::LogisticEntropy,
            domain_dim: m,
        }
    }

    pub fn unnormalized(m: usize) -> Self {
        Generator {
            kind: GeneratorKind::UnnormalizedEntropy,
            domain_dim: m,
        }
    }

    fn check_domain(&self, p: &DistPoint, who: &str) -> Result<()> {
        if p.len() != self.domain_dim {
            return Err(Error::Dimension(format!(
                "{who}: expected dimension {}, got {}",
                self.domain_dim,
                p.len()
            )));
        }
        for (i, &v) in p.values().iter().enumerate() {
            let ok = match self.kind {
                GeneratorKind::LogisticEntropy => (0.0..=1.0).contains(&v),
                GeneratorKind::UnnormalizedEntropy => v >= 0.0,
            };
            if !ok || v.is_nan() {
                return Err(Error::Domain(format!("{who}[{i}] = {v}")));
            }
        }
        Ok(())
    }

    /// Generator value `F(p)`.
    pub fn value(&self, p: &DistPoint) -> Result<f64> {
        self.check_domain(p, "p")?;
        Ok(match self.kind {
            GeneratorKind::LogisticEntropy => p
                .values()
                .iter()
                .map(|&v| xlnx(v) + xlnx(1.0 - v))
                .sum(),
            GeneratorKind::UnnormalizedEntropy => p.values().iter().map(|&v| xlnx(v)).sum(),
        })
    }

    /// Bregman distance `B_F(p || q) = F(p) - F(q) - grad F(q) . (p - q)`,
    /// evaluated in closed form for each generator.
    ///
    /// Returns `f64::INFINITY` when a boundary coordinate of `q` makes a term
    /// infinite; domain violations are errors.
    pub fn bregman_distance(&self, p: &DistPoint, q: &DistPoint) -> Result<f64> {
        self.check_domain(p, "p")?;
        self.check_domain(q, "q")?;
        let mut total = 0.0;
        match self.kind {
            GeneratorKind::LogisticEntropy => {
                for (&pi, &qi) in p.values().iter().zip(q.values()) {
                    total += xlnxy(pi, qi) + xlnxy(1.0 - pi, 1.0 - qi);
                    if total == f64::INFINITY {
                        return Ok(f64::INFINITY);
                    }
                }
            }
            GeneratorKind::UnnormalizedEntropy => {
                for (&pi, &qi) in p.values().iter().zip(q.values()) {
                    total += xlnxy(pi, qi) + qi - pi;
                    if total == f64::INFINITY {
                        return Ok(f64::INFINITY);
                    }
                }
            }
        }
        Ok(total)
    }

    /// Legendre transform `L_F(v, q)`.
    ///
    /// For the logistic generator `L_F(v,q)_i = q_i e^{-v_i} / (1 - q_i + q_i e^{-v_i})`,
    /// computed via the equivalent `1 / (1 + ((1-q_i)/q_i) e^{v_i})` when
    /// `v_i > 0` so the exponential never overflows. Outputs are kept
    /// strictly inside (0,1).
    pub fn legendre_transform(&self, v: &[f64], q: &DistPoint) -> Result<DistPoint> {
        self.check_domain(q, "q")?;
        if v.len() != q.len() {
            return Err(Error::Dimension(format!(
                "legendre_transform: v has {} coordinates, q has {}",
                v.len(),
                q.len()
            )));
        }
        let out = match self.kind {
            GeneratorKind::LogisticEntropy => v
                .iter()
                .zip(q.values())
                .map(|(&vi, &qi)| logistic_legendre_coord(vi, qi))
                .collect(),
            GeneratorKind::UnnormalizedEntropy => v
                .iter()
                .zip(q.values())
                .map(|(&vi, &qi)| qi * (-vi).exp())
                .collect(),
        };
        Ok(DistPoint::new(out))
    }
}

/// Smallest value the transform is allowed to return; keeps iterates strictly
/// interior so later divisions by q or 1-q stay finite.
const INTERIOR_EPS: f64 = 1e-300;

fn logistic_legendre_coord(v: f64, q: f64) -> f64 {
    // q on the boundary is a fixed point of the transform.
    if q == 0.0 || q == 1.0 {
        return q;
    }
    // Overflow in the v > 0 branch yields 0 (then clamped), never NaN; the
    // v <= 0 branch keeps its exponential <= 1.
    let out = if v > 0.0 {
        1.0 / (1.0 + ((1.0 - q) / q) * v.exp())
    } else {
        q / (q + (1.0 - q) * v.exp())
    };
    out.clamp(INTERIOR_EPS, 1.0 - f64::EPSILON / 2.0)
}

/// `D_B(0 || q) = -sum_i ln(1 - q_i)`, the log-loss of the model behind `q`.
///
/// Returns `f64::INFINITY` when some `q_i = 1`.
pub fn loss_at_zero(q: &DistPoint) -> Result<f64> {
    let mut total = 0.0;
    for (i, &qi) in q.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&qi) || qi.is_nan() {
            return Err(Error::Domain(format!("q[{i}] = {qi}")));
        }
        if qi == 1.0 {
            return Ok(f64::INFINITY);
        }
        total -= (1.0 - qi).ln();
    }
    Ok(total)
}

/// Constraint matrix `A_ji = y_i h_j(x_i)` with rows indexed by features and
/// columns by examples, scaled so every column satisfies `sum_j |A_ji| <= 1`.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    entries: Vec<f64>, // row-major, n rows x m cols
    n: usize,
    m: usize,
    labels: Vec<f64>,
    feature_scale: Vec<f64>,
}

impl ConstraintMatrix {
    /// Column-normalization slack; the 1/(n+1) scaling is exact in theory but
    /// accumulates rounding over n terms.
    const NORM_TOL: f64 = 1e-12;

    pub fn new(entries: Vec<f64>, n: usize, m: usize, labels: Vec<f64>) -> Result<Self> {
        Self::with_scale(entries, n, m, labels, vec![1.0; n])
    }

    pub fn with_scale(
        entries: Vec<f64>,
        n: usize,
        m: usize,
        labels: Vec<f64>,
        feature_scale: Vec<f64>,
    ) -> Result<Self> {
        if entries.len() != n * m {
            return Err(Error::Dimension(format!(
                "constraint matrix: {} entries for {}x{}",
                entries.len(),
                n,
                m
            )));
        }
        if labels.len() != m {
            return Err(Error::Dimension(format!(
                "constraint matrix: {} labels for {} examples",
                labels.len(),
                m
            )));
        }
        if feature_scale.len() != n || feature_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config(
                "feature_scale must hold n positive reals".into(),
            ));
        }
        for &y in &labels {
            if y != 1.0 && y != -1.0 {
                return Err(Error::Data(format!("label {y} is not +/-1")));
            }
        }
        for &e in &entries {
            if !(-1.0..=1.0).contains(&e) || e.is_nan() {
                return Err(Error::Data(format!("matrix entry {e} outside [-1,1]")));
            }
        }
        let mat = ConstraintMatrix {
            entries,
            n,
            m,
            labels,
            feature_scale,
        };
        for i in 0..m {
            let s: f64 = (0..n).map(|j| mat.at(j, i).abs()).sum();
            if s > 1.0 + Self::NORM_TOL {
                return Err(Error::Data(format!(
                    "column {i} has absolute sum {s} > 1; normalize the features first"
                )));
            }
        }
        Ok(mat)
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.entries[j * self.m + i]
    }

    /// Row `j` of the matrix (one feature across all examples).
    pub fn row(&self, j: usize) -> &[f64] {
        &self.entries[j * self.m..(j + 1) * self.m]
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn n_examples(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_scale(&self) -> &[f64] {
        &self.feature_scale
    }

    /// Margin vector `(lambda^T A)_i = y_i f_lambda(x_i)`.
    pub fn margins(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.n {
            return Err(Error::Dimension(format!(
                "margins: lambda has {} coordinates, matrix has {} features",
                lambda.len(),
                self.n
            )));
        }
        let mut v = vec![0.0; self.m];
        for (j, &lj) in lambda.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            for (vi, &aji) in v.iter_mut().zip(self.row(j)) {
                *vi += lj * aji;
            }
        }
        Ok(v)
    }
}

/// `q_i = sigma((lambda^T A)_i)` with `sigma(x) = 1/(1+e^x)`; equal to
/// `L_F(lambda^T A, (1/2) 1)` for the logistic generator.
pub fn model_distribution(a: &ConstraintMatrix, lambda: &[f64]) -> Result<DistPoint> {
    let v = a.margins(lambda)?;
    let gen = Generator::logistic(a.n_examples());
    gen.legendre_transform(&v, &DistPoint::uniform_half(a.n_examples()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(m: usize) -> Generator {
        Generator::logistic(m)
    }

    #[test]
    fn distance_is_zero_at_identity() {
        let gen = logistic(2);
        let p = DistPoint::new(vec![0.3, 0.7]);
        assert_eq!(gen.bregman_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn distance_zero_vs_half_is_two_ln_two() {
        let gen = logistic(2);
        let p = DistPoint::zeros(2);
        let q = DistPoint::uniform_half(2);
        let d = gen.bregman_distance(&p, &q).unwrap();
        assert!((d - 2.0 * 2.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn distance_matches_termwise_oracle() {
        // Independent term-by-term evaluation of the binary relative entropy.
        let p: [f64; 2] = [0.2, 0.8];
        let q: [f64; 2] = [0.5, 0.5];
        let mut expect = 0.0;
        for k in 0..2 {
            expect += p[k] * (p[k] / q[k]).ln() + (1.0 - p[k]) * ((1.0 - p[k]) / (1.0 - q[k])).ln();
        }
        let gen = logistic(2);
        let d = gen
            .bregman_distance(&DistPoint::new(p.to_vec()), &DistPoint::new(q.to_vec()))
            .unwrap();
        assert!((d - expect).abs() < 1e-14);
    }

    #[test]
    fn boundary_q_gives_infinite_distance_not_error() {
        let gen = logistic(1);
        let p = DistPoint::new(vec![0.4]);
        let q = DistPoint::new(vec![0.0]);
        assert_eq!(gen.bregman_distance(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let gen = logistic(1);
        let p = DistPoint::new(vec![1.2]);
        let q = DistPoint::new(vec![0.5]);
        assert!(gen.bregman_distance(&p, &q).is_err());
    }

    #[test]
    fn loss_at_zero_uniform_half() {
        let q = DistPoint::uniform_half(4);
        let l = loss_at_zero(&q).unwrap();
        assert!((l - 4.0 * 2.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn loss_at_zero_of_zero_point() {
        assert_eq!(loss_at_zero(&DistPoint::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn loss_at_zero_signals_infinity() {
        let q = DistPoint::new(vec![0.5, 1.0]);
        assert_eq!(loss_at_zero(&q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn loss_at_zero_agrees_with_bregman_distance() {
        let gen = logistic(5);
        let q = DistPoint::new(vec![0.11, 0.52, 0.93, 0.004, 0.77]);
        let direct = loss_at_zero(&q).unwrap();
        let via_distance = gen.bregman_distance(&DistPoint::zeros(5), &q).unwrap();
        assert!((direct - via_distance).abs() < 1e-12);
    }

    #[test]
    fn legendre_at_zero_is_identity() {
        let gen = logistic(2);
        let q = DistPoint::new(vec![0.3, 0.9]);
        let out = gen.legendre_transform(&[0.0, 0.0], &q).unwrap();
        assert_eq!(out.values(), q.values());
    }

    #[test]
    fn legendre_at_half_is_sigmoid() {
        let gen = logistic(1);
        let q = DistPoint::uniform_half(1);
        let out = gen.legendre_transform(&[0.0], &q).unwrap();
        assert!((out.values()[0] - 0.5).abs() < 1e-15);
        // sigma(x) = 1/(1+e^x): large positive v drives q toward 0
        let out = gen.legendre_transform(&[3.0], &q).unwrap();
        assert!((out.values()[0] - 1.0 / (1.0 + 3.0_f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn legendre_survives_extreme_arguments() {
        let gen = logistic(2);
        let q = DistPoint::new(vec![0.4, 0.6]);
        let out = gen.legendre_transform(&[900.0, -900.0], &q).unwrap();
        for &v in out.values() {
            assert!(v > 0.0 && v < 1.0, "coordinate {v} left (0,1)");
        }
    }

    #[test]
    fn model_distribution_at_zero_lambda() {
        let a = ConstraintMatrix::new(vec![0.5, -0.5, 0.25, 0.25], 2, 2, vec![1.0, -1.0]).unwrap();
        let q = model_distribution(&a, &[0.0, 0.0]).unwrap();
        assert_eq!(q.values(), &[0.5, 0.5]);
    }

    #[test]
    fn model_distribution_closed_form() {
        // 1 feature, 1 example, y=+1, h=1, lambda=ln 3 -> q = 1/(1+3) = 0.25
        let a = ConstraintMatrix::new(vec![1.0], 1, 1, vec![1.0]).unwrap();
        let q = model_distribution(&a, &[3.0_f64.ln()]).unwrap();
        assert!((q.values()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalized_columns() {
        let r = ConstraintMatrix::new(vec![0.8, 0.8, 0.8, 0.8], 2, 2, vec![1.0, 1.0]);
        assert!(r.is_err());
    }
}
