//! Linear regression on (optionally kernel-embedded) features.
//!
//! Two numeric paths share the same data: a real-valued reference path used
//! by oracles, and the fixed-point path the protocols run on. The model is
//! `Θ ∈ R^{d×c}` and the global objective is
//! `f(Θ) = (1/2m)·Σ‖x_l Θ − y_l‖² + (λ/2)·‖Θ‖²_F`.

pub mod data;
pub mod embed;
pub mod idx;
pub mod model;

use thiserror::Error;

use crate::fxp::{FxConfig, FxError, FxMatrix};

pub use data::{load_mnist_dir, synthetic, DataSplit};
pub use embed::{rbf_embed, RbfSampler};
pub use idx::load_idx;
pub use model::{LrSchedule, ModelState};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("cannot split {m} samples across {devices} devices")]
    Partition { m: usize, devices: usize },
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error(transparent)]
    Fixed(#[from] FxError),
}

/// Row-major features with integer labels and their one-hot encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub m: usize,
    pub d: usize,
    pub c: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, d: usize, labels: Vec<usize>, c: usize) -> Result<Self, DataError> {
        let m = labels.len();
        if x.len() != m * d {
            return Err(DataError::Malformed(format!(
                "{} feature values for {m} rows of width {d}",
                x.len()
            )));
        }
        let mut y = vec![0.0; m * c];
        for (r, &l) in labels.iter().enumerate() {
            if l >= c {
                return Err(DataError::Label {
                    label: l,
                    classes: c,
                });
            }
            y[r * c + l] = 1.0;
        }
        Ok(Self {
            m,
            d,
            c,
            x,
            y,
            labels,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.d..(r + 1) * self.d]
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            m: range.len(),
            d: self.d,
            c: self.c,
            x: self.x[range.start * self.d..range.end * self.d].to_vec(),
            y: self.y[range.start * self.c..range.end * self.c].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        self.slice(0..n.min(self.m))
    }

    /// Rows reordered by a stable sort on the label.
    pub fn sorted_by_label(&self) -> Dataset {
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by_key(|&r| self.labels[r]);
        let mut x = Vec::with_capacity(self.x.len());
        let mut labels = Vec::with_capacity(self.m);
        for &r in &order {
            x.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Dataset::new(x, self.d, labels, self.c).expect("labels already validated")
    }

    /// Concatenates datasets with matching widths.
    pub fn concat(parts: &[&Dataset]) -> Dataset {
        let d = parts[0].d;
        let c = parts[0].c;
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            assert_eq!((p.d, p.c), (d, c), "width mismatch");
            x.extend_from_slice(&p.x);
            labels.extend_from_slice(&p.labels);
        }
        Dataset::new(x, d, labels, c).expect("labels already validated")
    }

    /// `XᵀX` (d×d).
    pub fn gram(&self) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; d * d];
        for r in 0..self.m {
            let row = self.row(r);
            for i in 0..d {
                let xi = row[i];
                if xi == 0.0 {
                    continue;
                }
                for j in i..d {
                    g[i * d + j] += xi * row[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                g[i * d + j] = g[j * d + i];
            }
        }
        g
    }

    /// `XᵀY` (d×c).
    pub fn xty(&self) -> Vec<f64> {
        let (d, c) = (self.d, self.c);
        let mut out = vec![0.0; d * c];
        for r in 0..self.m {
            let row = self.row(r);
            let yr = &self.y[r * c..(r + 1) * c];
            for i in 0..d {
                for k in 0..c {
                    out[i * c + k] += row[i] * yr[k];
                }
            }
        }
        out
    }
}

/// One device's share of the training data with its precomputed Grams.
#[derive(Clone, Debug, PartialEq)]
pub struct DevicePartition {
    pub id: usize,
    pub data: Dataset,
    pub gram: Vec<f64>,
    pub xty: Vec<f64>,
}

impl DevicePartition {
    pub fn new(id: usize, data: Dataset) -> Self {
        let gram = data.gram();
        let xty = data.xty();
        Self {
            id,
            data,
            gram,
            xty,
        }
    }

    pub fn samples(&self) -> usize {
        self.data.m
    }
}

/// Sorts by label (stably) and cuts the rows into `devices` contiguous
/// batches of `⌊m/D⌋`, the first `m mod D` batches taking one extra row.
pub fn partition_noniid(
    dataset: &Dataset,
    devices: usize,
) -> Result<Vec<DevicePartition>, DataError> {
    if devices == 0 || devices > dataset.m {
        return Err(DataError::Partition {
            m: dataset.m,
            devices,
        });
    }
    let sorted = dataset.sorted_by_label();
    let base = dataset.m / devices;
    let extra = dataset.m % devices;
    let mut start = 0;
    Ok((0..devices)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let p = DevicePartition::new(i, sorted.slice(start..start + len));
            start += len;
            p
        })
        .collect())
}

/// `(a: r×n)·(b: n×p)` for row-major real matrices.
pub fn matmul(a: &[f64], b: &[f64], r: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * p];
    for i in 0..r {
        for l in 0..n {
            let av = a[i * n + l];
            if av == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += av * b[l * p + j];
            }
        }
    }
    out
}

/// Local gradient `XᵀXΘ − XᵀY` on the real path.
pub fn local_gradient(p: &DevicePartition, theta: &[f64]) -> Vec<f64> {
    let (d, c) = (p.data.d, p.data.c);
    let mut g = matmul(&p.gram, theta, d, d, c);
    for (gv, &t) in g.iter_mut().zip(&p.xty) {
        *gv -= t;
    }
    g
}

/// One gradient step `Θ − μ(G/m + λΘ)`.
pub fn aggregate_update(g: &[f64], theta: &[f64], mu: f64, lambda: f64, m: usize) -> Vec<f64> {
    assert!(m > 0, "sample count must be positive");
    theta
        .iter()
        .zip(g)
        .map(|(&t, &gv)| t - mu * (gv / m as f64 + lambda * t))
        .collect()
}

/// `(1/2m)·Σ‖xΘ − y‖² + (λ/2)·‖Θ‖²` evaluated row by row.
pub fn global_loss(data: &Dataset, theta: &[f64], lambda: f64) -> f64 {
    let pred = matmul(&data.x, theta, data.m, data.d, data.c);
    let sq: f64 = pred
        .iter()
        .zip(&data.y)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    let reg: f64 = theta.iter().map(|t| t * t).sum();
    sq / (2.0 * data.m as f64) + 0.5 * lambda * reg
}

/// Fraction of rows whose arg-max prediction equals the label. Ties go to
/// the lowest class index.
pub fn accuracy(data: &Dataset, theta: &[f64]) -> f64 {
    if data.m == 0 {
        return 0.0;
    }
    let pred = matmul(&data.x, theta, data.m, data.d, data.c);
    let hits = pred
        .chunks_exact(data.c)
        .zip(&data.labels)
        .filter(|(row, &l)| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best == l
        })
        .count();
    hits as f64 / data.m as f64
}

/// Loss evaluated from the global Gram matrices, `O(d²c)` per call.
#[derive(Clone, Debug)]
pub struct LossEvaluator {
    d: usize,
    c: usize,
    m: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl LossEvaluator {
    pub fn new(data: &Dataset) -> Self {
        Self {
            d: data.d,
            c: data.c,
            m: data.m,
            gram: data.gram(),
            xty: data.xty(),
            yty: data.y.iter().map(|v| v * v).sum(),
        }
    }

    pub fn from_partitions(parts: &[DevicePartition]) -> Self {
        let d = parts[0].data.d;
        let c = parts[0].data.c;
        let mut gram = vec![0.0; d * d];
        let mut xty = vec![0.0; d * c];
        let mut yty = 0.0;
        let mut m = 0;
        for p in parts {
            gram.iter_mut().zip(&p.gram).for_each(|(a, b)| *a += b);
            xty.iter_mut().zip(&p.xty).for_each(|(a, b)| *a += b);
            yty += p.data.y.iter().map(|v| v * v).sum::<f64>();
            m += p.data.m;
        }
        Self {
            d,
            c,
            m,
            gram,
            xty,
            yty,
        }
    }

    pub fn loss(&self, theta: &[f64], lambda: f64) -> f64 {
        let gt = matmul(&self.gram, theta, self.d, self.d, self.c);
        let quad: f64 = gt.iter().zip(theta).map(|(a, b)| a * b).sum();
        let lin: f64 = self.xty.iter().zip(theta).map(|(a, b)| a * b).sum();
        let reg: f64 = theta.iter().map(|t| t * t).sum();
        (quad - 2.0 * lin + self.yty) / (2.0 * self.m as f64) + 0.5 * lambda * reg
    }
}

/// A device partition on the fixed-point path.
#[derive(Clone, Debug, PartialEq)]
pub struct FxPartition {
    pub id: usize,
    pub samples: usize,
    /// `X̄ᵀX̄` scaled once per entry.
    pub gram: FxMatrix,
    /// `X̄ᵀȲ` scaled once per entry.
    pub xty: FxMatrix,
}

impl FxPartition {
    pub fn new(p: &DevicePartition, cfg: FxConfig) -> Result<Self, DataError> {
        Self::from_dataset(p.id, &p.data, cfg)
    }

    pub fn from_dataset(id: usize, data: &Dataset, cfg: FxConfig) -> Result<Self, DataError> {
        let x = FxMatrix::quantize(data.m, data.d, &data.x, cfg)?;
        let y = FxMatrix::quantize(data.m, data.c, &data.y, cfg)?;
        Ok(Self {
            id,
            samples: data.m,
            gram: x.transpose_matmul(&x)?,
            xty: x.transpose_matmul(&y)?,
        })
    }

    /// `Ḡ^(1) = X̄ᵀX̄·Θ̄^(1) − X̄ᵀȲ` in fixed point.
    pub fn first_gradient(&self, theta1: &FxMatrix) -> Result<FxMatrix, DataError> {
        Ok(self.gram.matmul(theta1)?.sub(&self.xty)?)
    }

    /// `2^f·Ḡ^(1) + X̄ᵀX̄·ε̄` as exact integers at scale `2^2f`.
    pub fn unscaled_gradient(&self, g1: &FxMatrix, eps: &FxMatrix) -> Vec<i128> {
        let f = g1.cfg().f();
        let mut out = self.gram.mul_exact(eps);
        for (o, &g) in out.iter_mut().zip(g1.raw()) {
            *o += (g as i128) << f;
        }
        out
    }
}

/// Uncoded federated gradient on the fixed-point path:
/// `(Σ_i 2^f·Ḡ_i^(1) + X̄_iᵀX̄_i·ε̄) >> f`, wrapped into `Z<k>`.
///
/// Both coded schemes reproduce this value: CodedSecAgg bit for bit, and
/// CodedPaddedFL up to the gradient code's decoding error.
pub fn fx_federated_gradient(parts: &[FxPartition], g1: &[FxMatrix], eps: &FxMatrix) -> FxMatrix {
    let cfg = eps.cfg();
    let (d, c) = (parts[0].gram.rows(), eps.cols());
    let mut acc = vec![0i128; d * c];
    for (p, g) in parts.iter().zip(g1) {
        for (a, v) in acc.iter_mut().zip(p.unscaled_gradient(g, eps)) {
            *a += v;
        }
    }
    let scaled: Vec<i128> = acc.into_iter().map(|v| v >> cfg.f()).collect();
    FxMatrix::from_wide_wrapping(d, c, cfg, &scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(m: usize, d: usize, c: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..m * d).map(|_| rng.random_range(-0.2..0.2)).collect();
        let labels = (0..m).map(|_| rng.random_range(0..c)).collect();
        Dataset::new(x, d, labels, c).unwrap()
    }

    #[test]
    fn one_hot_and_label_check() {
        let ds = Dataset::new(vec![0.0; 4], 2, vec![1, 0], 3).unwrap();
        assert_eq!(ds.y, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(Dataset::new(vec![0.0; 2], 1, vec![0, 3], 3).is_err());
        assert!(Dataset::new(vec![0.0; 3], 2, vec![0, 1], 3).is_err());
    }

    #[test]
    fn partition_examples() {
        let ds = Dataset::new(
            (0..10).map(|v| v as f64).collect(),
            1,
            (0..10).rev().collect(),
            10,
        )
        .unwrap();
        let one = partition_noniid(&ds, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].data, ds.sorted_by_label());
        let two = partition_noniid(&ds, 2).unwrap();
        assert_eq!(two[0].data.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(two[1].data.labels, vec![5, 6, 7, 8, 9]);
        let three = partition_noniid(&ds, 3).unwrap();
        let sizes: Vec<usize> = three.iter().map(|p| p.samples()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(partition_noniid(&ds, 11).is_err());
        assert!(partition_noniid(&ds, 0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let ds = random_dataset(6, 3, 2, 1);
        let p = DevicePartition::new(0, ds.clone());
        let g0 = local_gradient(&p, &[0.0; 6]);
        assert_eq!(g0, p.xty.iter().map(|v| -v).collect::<Vec<_>>());
        // X = I, Y = 0 gives G = Θ
        let eye = Dataset {
            m: 3,
            d: 3,
            c: 2,
            x: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            y: vec![0.0; 6],
            labels: vec![0; 3],
        };
        let theta = vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.75];
        assert_eq!(local_gradient(&DevicePartition::new(0, eye), &theta), theta);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let ds = random_dataset(20, 4, 3, 2);
        let p = DevicePartition::new(0, ds.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = local_gradient(&p, &theta);
        // f_i(Θ) = (1/2)‖XΘ − Y‖², so ∂f_i = G_i
        let h = 1e-5;
        for k in 0..12 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fd =
                (global_loss(&ds, &tp, 0.0) - global_loss(&ds, &tm, 0.0)) / (2.0 * h) * ds.m as f64;
            assert!(
                (fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1e-3),
                "k={k} fd={fd} g={}",
                g[k]
            );
        }
    }

    #[test]
    fn update_examples() {
        let theta = vec![1.0, -2.0];
        assert_eq!(aggregate_update(&[0.0, 0.0], &theta, 3.0, 0.0, 5), theta);
        assert_eq!(aggregate_update(&[7.0, 1.0], &theta, 0.0, 0.1, 5), theta);
    }

    #[test]
    fn ridge_fixed_point() {
        let ds = random_dataset(30, 3, 2, 3);
        let lambda = 0.05;
        let p = DevicePartition::new(0, ds.clone());
        // Θ* = (XᵀX + mλI)^(-1) XᵀY
        let mut a = nalgebra::DMatrix::from_row_slice(3, 3, &p.gram);
        for i in 0..3 {
            a[(i, i)] += ds.m as f64 * lambda;
        }
        let b = nalgebra::DMatrix::from_row_slice(3, 2, &p.xty);
        let sol = a.lu().solve(&b).unwrap();
        let theta: Vec<f64> = (0..3)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| sol[(i, j)])
            .collect();
        let g = local_gradient(&p, &theta);
        let next = aggregate_update(&g, &theta, 2.0, lambda, ds.m);
        for (a, b) in next.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_examples() {
        let ds = Dataset {
            m: 2,
            d: 2,
            c: 2,
            x: vec![1.0, 0.0, 0.0, 1.0],
            y: vec![0.0; 4],
            labels: vec![0, 1],
        };
        assert_eq!(global_loss(&ds, &[0.0; 4], 0.0), 0.0);
        // perfect separable predictor
        let sep = Dataset::new(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0, 1], 2).unwrap();
        assert_eq!(accuracy(&sep, &[1.0, 0.0, 0.0, 1.0]), 1.0);
        assert_eq!(accuracy(&sep, &[0.0, 1.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn loss_decreases_under_small_steps() {
        let ds = random_dataset(40, 5, 3, 4);
        let p = DevicePartition::new(0, ds.clone());
        let mut theta = vec![0.0; 15];
        let mut prev = global_loss(&ds, &theta, 1e-3);
        for _ in 0..50 {
            let g = local_gradient(&p, &theta);
            theta = aggregate_update(&g, &theta, 0.5, 1e-3, ds.m);
            let l = global_loss(&ds, &theta, 1e-3);
            assert!(l <= prev + 1e-15);
            prev = l;
        }
        let ev = LossEvaluator::new(&ds);
        assert!((ev.loss(&theta, 1e-3) - prev).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_federated_gradient_tracks_real() {
        let ds = random_dataset(60, 4, 3, 5);
        let parts = partition_noniid(&ds, 4).unwrap();
        let cfg = FxConfig::PAPER;
        let fx: Vec<FxPartition> = parts
            .iter()
            .map(|p| FxPartition::new(p, cfg).unwrap())
            .collect();
        let theta1 = FxMatrix::zeros(4, 3, cfg);
        let g1: Vec<FxMatrix> = fx
            .iter()
            .map(|p| p.first_gradient(&theta1).unwrap())
            .collect();
        let eps_real: Vec<f64> = (0..12).map(|v| v as f64 * 0.1 - 0.5).collect();
        let eps = FxMatrix::quantize(4, 3, &eps_real, cfg).unwrap();
        let got = fx_federated_gradient(&fx, &g1, &eps);
        let mut expect = vec![0.0; 12];
        for p in &parts {
            for (e, v) in expect.iter_mut().zip(local_gradient(p, &eps.to_f64())) {
                *e += v;
            }
        }
        assert!(got.max_abs_diff(&expect) < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn partitions_concatenate_and_gradients_add(m in 1usize..60, devices in 1usize..8, seed in any::<u64>()) {
            prop_assume!(devices <= m);
            let ds = random_dataset(m, 3, 4, seed);
            let parts = partition_noniid(&ds, devices).unwrap();
            let refs: Vec<&Dataset> = parts.iter().map(|p| &p.data).collect();
            prop_assert_eq!(Dataset::concat(&refs), ds.sorted_by_label());
            let theta: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
            let whole = local_gradient(&DevicePartition::new(0, ds.clone()), &theta);
            let mut sum = [0.0; 12];
            for p in &parts {
                for (s, v) in sum.iter_mut().zip(local_gradient(p, &theta)) { *s += v; }
            }
            for (a, b) in sum.iter().zip(&whole) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
