//! Dataset ingestion, feature scaling and synthetic data generation.
//!
//! Scaling maps every raw feature affinely into [-1,1] using train-split
//! min/max, then divides all rows (intercept included) by n+1 so the induced
//! constraint matrix satisfies the column condition `sum_j |A_ji| <= 1`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bregman::ConstraintMatrix;
use crate::error::{Error, Result};

/// Per-feature affine map plus the global divisor, recorded at training time
/// so prediction applies the identical transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    /// (min, max) per raw feature; constant features have min == max and are
    /// mapped to zero.
    pub feature_range: Vec<(f64, f64)>,
    /// Uniform divisor applied after the affine map (n_raw + 1).
    pub divisor: f64,
    /// Whether an always-one intercept row was appended.
    pub intercept: bool,
    /// Per-example exact column normalization instead of the uniform divisor.
    pub per_example: bool,
}

impl ScaleRecord {
    /// Number of model coordinates (features plus optional intercept).
    pub fn model_dim(&self) -> usize {
        self.feature_range.len() + usize::from(self.intercept)
    }

    /// Scales one raw instance into the model's feature space.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.feature_range.len() {
            return Err(Error::Dimension(format!(
                "instance has {} features, scaler expects {}",
                raw.len(),
                self.feature_range.len()
            )));
        }
        let mut out = Vec::with_capacity(self.model_dim());
        for (&x, &(lo, hi)) in raw.iter().zip(&self.feature_range) {
            let v = if hi > lo {
                (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0 // constant feature contributes nothing
            };
            out.push(v);
        }
        if self.intercept {
            out.push(1.0);
        }
        let div = if self.per_example {
            out.iter().map(|v| v.abs()).sum::<f64>().max(1.0)
        } else {
            self.divisor
        };
        for v in &mut out {
            *v /= div;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major m instances x n raw features.
    features: Vec<f64>,
    n: usize,
    m: usize,
    labels: Vec<f64>,
    pub name: String,
    pub scale_record: Option<ScaleRecord>,
    /// Optional bag (multiple-instance) identifier per row.
    pub bags: Option<Vec<String>>,
    pub positive_label: String,
    pub negative_label: String,
}

impl Dataset {
    pub fn from_rows(features: Vec<f64>, n: usize, labels: Vec<f64>, name: &str) -> Result<Self> {
        if n == 0 || labels.is_empty() || features.len() != n * labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature values for {} labels x {} features",
                features.len(),
                labels.len(),
                n
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Data("labels must be +/-1".into()));
        }
        Ok(Dataset {
            features,
            n,
            m: labels.len(),
            labels,
            name: name.to_string(),
            scale_record: None,
            bags: None,
            positive_label: "+1".into(),
            negative_label: "-1".into(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn n_instances(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        &self.features[i * self.n..(i + 1) * self.n]
    }

    fn take_rows(&self, idx: &[usize], name: &str) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n);
        let mut labels = Vec::with_capacity(idx.len());
        let mut bags = self.bags.as_ref().map(|_| Vec::with_capacity(idx.len()));
        for &i in idx {
            features.extend_from_slice(self.instance(i));
            labels.push(self.labels[i]);
            if let (Some(b), Some(src)) = (bags.as_mut(), self.bags.as_ref()) {
                b.push(src[i].clone());
            }
        }
        Dataset {
            features,
            n: self.n,
            m: idx.len(),
            labels,
            name: name.to_string(),
            scale_record: self.scale_record.clone(),
            bags,
            positive_label: self.positive_label.clone(),
            negative_label: self.negative_label.clone(),
        }
    }

    /// Writes the dataset in the same CSV schema `load_csv` reads
    /// (label first, then features).
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("label");
        for j in 0..self.n {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for i in 0..self.m {
            let tok = if self.labels[i] > 0.0 {
                &self.positive_label
            } else {
                &self.negative_label
            };
            out.push_str(tok);
            for &v in self.instance(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// CSV ingestion options beyond the common case.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Column indices to drop entirely (identifiers and the like).
    pub ignore_cols: Vec<usize>,
    /// Column carrying a bag identifier for multiple-instance evaluation;
    /// excluded from the features.
    pub bag_col: Option<usize>,
}

/// Outcome of an ingestion, with the count of rejected rows.
#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rejected_rows: usize,
}

pub fn load_csv(path: &Path, label_col: usize, positive_label: &str) -> Result<LoadReport> {
    load_csv_with(path, label_col, positive_label, &CsvOptions::default())
}

pub fn load_csv_with(
    path: &Path,
    label_col: usize,
    positive_label: &str,
    opts: &CsvOptions,
) -> Result<LoadReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let mut rows: Vec<(Vec<f64>, String, Option<String>)> = Vec::new();
    let mut rejected = 0usize;
    let mut n_features: Option<usize> = None;
    let mut first_row = true;

    let is_skipped =
        |k: usize| -> bool { opts.ignore_cols.contains(&k) || opts.bag_col == Some(k) };

    for line in &mut lines {
        let line = line.map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if label_col >= cells.len() {
            return Err(Error::Data(format!(
                "label column {label_col} out of range for a {}-column row",
                cells.len()
            )));
        }
        let mut feats = Vec::with_capacity(cells.len() - 1);
        let mut bad = false;
        for (k, cell) in cells.iter().enumerate() {
            if k == label_col || is_skipped(k) {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => feats.push(v),
                _ => {
                    bad = true;
                    break;
                }
            }
        }
        if first_row {
            first_row = false;
            if bad {
                // header row auto-detected by its non-numeric feature cells
                continue;
            }
        }
        if bad || feats.is_empty() {
            rejected += 1;
            continue;
        }
        match n_features {
            None => n_features = Some(feats.len()),
            Some(n) if n != feats.len() => {
                rejected += 1;
                continue;
            }
            _ => {}
        }
        let bag = opts.bag_col.map(|k| cells[k].to_string());
        rows.push((feats, cells[label_col].to_string(), bag));
    }

    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }
    let n = n_features.unwrap();

    let mut tokens: Vec<String> = Vec::new();
    for (_, tok, _) in &rows {
        if !tokens.contains(tok) {
            tokens.push(tok.clone());
        }
    }
    if tokens.len() > 2 {
        return Err(Error::Data(format!(
            "label column has {} distinct tokens: {:?}",
            tokens.len(),
            tokens
        )));
    }
    if !tokens.iter().any(|t| t == positive_label) {
        return Err(Error::Data(format!(
            "positive label {positive_label:?} never appears (saw {tokens:?})"
        )));
    }
    let negative = tokens
        .iter()
        .find(|t| *t != positive_label)
        .cloned()
        .unwrap_or_else(|| "negative".into());

    let m = rows.len();
    let mut features = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(m);
    let mut bags = opts.bag_col.map(|_| Vec::with_capacity(m));
    for (feats, tok, bag) in rows {
        features.extend_from_slice(&feats);
        labels.push(if tok == positive_label { 1.0 } else { -1.0 });
        if let (Some(b), Some(v)) = (bags.as_mut(), bag) {
            b.push(v);
        }
    }

    let mut ds = Dataset::from_rows(
        features,
        n,
        labels,
        path.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset"),
    )?;
    ds.bags = bags;
    ds.positive_label = positive_label.to_string();
    ds.negative_label = negative;
    Ok(LoadReport {
        dataset: ds,
        rejected_rows: rejected,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NormalizeOptions {
    pub intercept: bool,
    pub per_example: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            intercept: true,
            per_example: false,
        }
    }
}

/// Computes the scaling from this (train) split and builds its constraint
/// matrix; the returned dataset carries the scale record for later reuse.
pub fn normalize(ds: &Dataset, opts: NormalizeOptions) -> Result<(Dataset, ConstraintMatrix)> {
    let n = ds.n_features();
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    for i in 0..ds.n_instances() {
        for (j, &v) in ds.instance(i).iter().enumerate() {
            range[j].0 = range[j].0.min(v);
            range[j].1 = range[j].1.max(v);
        }
    }
    for (j, &(lo, hi)) in range.iter().enumerate() {
        if lo == hi {
            log::warn!("feature {j} is constant on the train split; mapped to 0");
        }
    }
    let record = ScaleRecord {
        feature_range: range,
        divisor: (n + 1) as f64,
        intercept: opts.intercept,
        per_example: opts.per_example,
    };
    let matrix = constraint_matrix(ds, &record)?;
    let mut scaled = ds.clone();
    scaled.scale_record = Some(record);
    Ok((scaled, matrix))
}

/// Builds the constraint matrix `A_ji = y_i * scaled_feature_j(x_i)` for a
/// dataset using an existing (train-derived) scale record.
pub fn constraint_matrix(ds: &Dataset, record: &ScaleRecord) -> Result<ConstraintMatrix> {
    let rows = record.model_dim();
    let m = ds.n_instances();
    let mut entries = vec![0.0; rows * m];
    for i in 0..m {
        let scaled = record.apply(ds.instance(i))?;
        let y = ds.labels()[i];
        for (j, &v) in scaled.iter().enumerate() {
            entries[j * m + i] = y * v;
        }
    }
    let scale = vec![1.0 / record.divisor; rows];
    ConstraintMatrix::with_scale(entries, rows, m, ds.labels().to_vec(), scale)
}

/// Uniform points in [-1,1]^dim labeled by a random hyperplane through the
/// origin, with per-instance coin-flipped Gaussian noise added afterwards.
pub fn synth_hyperplane(
    dim: usize,
    m_train: usize,
    m_test: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dim == 0 {
        return Err(Error::Config("dim must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&noise_sigma) {
        return Err(Error::Config(format!(
            "noise_sigma = {noise_sigma} must lie in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();

    let mut gen_split = |m: usize, name: &str| -> Dataset {
        let mut features = Vec::with_capacity(m * dim);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let dot: f64 = normal.iter().zip(&x).map(|(a, b)| a * b).sum();
            labels.push(if dot >= 0.0 { 1.0 } else { -1.0 });
            if noise_sigma > 0.0 && rng.gen_bool(0.5) {
                for v in &mut x {
                    *v += noise_sigma * gaussian(&mut rng);
                }
            }
            features.extend_from_slice(&x);
        }
        let mut ds = Dataset::from_rows(features, dim, labels, name).expect("valid by construction");
        ds.positive_label = "+1".into();
        ds.negative_label = "-1".into();
        ds
    };

    let train = gen_split(m_train, "synth-train");
    let test = gen_split(m_test, "synth-test");
    Ok((train, test))
}

/// Sparse-signal classification data: labels are fair coins and only
/// `informative` randomly chosen coordinates respond to them, shifted by
/// `y * shift * sign_j` on top of uniform [-1,1] noise; the remaining
/// coordinates are pure noise. Coin-flipped Gaussian noise is added per
/// instance as in [`synth_hyperplane`], so the Bayes classifier is the
/// hyperplane `sum_j sign_j x_j` over the informative block.
pub fn synth_sparse_signal(
    dim: usize,
    informative: usize,
    shift: f64,
    m_train: usize,
    m_test: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dim == 0 || informative == 0 || informative > dim {
        return Err(Error::Config(format!(
            "need 1 <= informative ({informative}) <= dim ({dim})"
        )));
    }
    if !(shift > 0.0) {
        return Err(Error::Config(format!("shift = {shift} must be positive")));
    }
    if !(0.0..1.0).contains(&noise_sigma) {
        return Err(Error::Config(format!(
            "noise_sigma = {noise_sigma} must lie in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = (0..dim).collect();
    shuffle(&mut coords, &mut rng);
    let mut shifts = vec![0.0; dim];
    for &j in &coords[..informative] {
        shifts[j] = if rng.gen_bool(0.5) { shift } else { -shift };
    }

    let mut gen_split = |m: usize, name: &str| -> Dataset {
        let mut features = Vec::with_capacity(m * dim);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            labels.push(y);
            let mut x: Vec<f64> = (0..dim)
                .map(|j| rng.gen_range(-1.0..=1.0) + y * shifts[j])
                .collect();
            if noise_sigma > 0.0 && rng.gen_bool(0.5) {
                for v in &mut x {
                    *v += noise_sigma * gaussian(&mut rng);
                }
            }
            features.extend_from_slice(&x);
        }
        let mut ds = Dataset::from_rows(features, dim, labels, name).expect("valid by construction");
        ds.positive_label = "+1".into();
        ds.negative_label = "-1".into();
        ds
    };

    let train = gen_split(m_train, "synth-train");
    let test = gen_split(m_test, "synth-test");
    Ok((train, test))
}

/// Standard normal via Box-Muller; keeps us on plain `rand` primitives.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Seeded stratified split; test gets `round(fraction * count)` per class.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction = {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &y) in ds.labels().iter().enumerate() {
        if y > 0.0 {
            pos.push(i)
        } else {
            neg.push(i)
        }
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Data(format!(
            "stratified split needs >= 2 instances per class (got {} / {})",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for class in [&mut pos, &mut neg] {
        shuffle(class, &mut rng);
        let k = ((class.len() as f64) * test_fraction).round() as usize;
        let k = k.clamp(1, class.len() - 1);
        test_idx.extend_from_slice(&class[..k]);
        train_idx.extend_from_slice(&class[k..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        ds.take_rows(&train_idx, &format!("{}-train", ds.name)),
        ds.take_rows(&test_idx, &format!("{}-test", ds.name)),
    ))
}

fn shuffle<R: Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}
