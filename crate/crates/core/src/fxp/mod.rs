//! Fixed-point numbers `Q<k,f>`: integers from `Z<k> = [-2^(k-1), 2^(k-1) - 1]`
//! scaled by `2^-f`.
//!
//! Addition wraps modulo `2^k`. Multiplication forms the exact double-width
//! product, floors it by `2^-f` and wraps. Matrix products accumulate exact
//! products over the inner dimension and scale once per output entry unless
//! [`ScaleMode::PerProduct`] is requested.
//!
//! [`ring`] holds the wide integer ring used once values are padded, and
//! [`pad`] the uniformly random one-time pads.

pub mod pad;
pub mod ring;

use std::fmt;

use thiserror::Error;

pub use pad::{pad_apply, pad_remove, PadMatrix};
pub use ring::RingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum FxError {
    #[error("invalid format Q<{k},{f}>: need 1 <= f < k <= 63")]
    InvalidConfig { k: u32, f: u32 },
    #[error("value {value} is outside the range of Q<{k},{f}>")]
    Overflow { value: f64, k: u32, f: u32 },
    #[error("raw value {raw} is outside Z<{k}>")]
    RawOutOfRange { raw: i128, k: u32 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("format mismatch: {left} vs {right}")]
    ConfigMismatch { left: FxConfig, right: FxConfig },
    #[error("ring width {0} must be between 2 and 128 bits")]
    RingWidth(u32),
}

/// Sign-extends the low `bits` bits of `v`, i.e. maps `v` into `Z<bits>` by
/// `((v + 2^(bits-1)) mod 2^bits) - 2^(bits-1)`.
#[inline]
pub fn wrap_bits(v: i128, bits: u32) -> i128 {
    debug_assert!((1..=128).contains(&bits));
    let shift = 128 - bits;
    (v << shift) >> shift
}

/// Word format of a fixed-point number: `k` total bits, `f` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FxConfig {
    k: u32,
    f: u32,
}

impl FxConfig {
    /// Format used throughout the reference experiments.
    pub const PAPER: FxConfig = FxConfig { k: 48, f: 24 };
    /// Small format for exhaustive checks.
    pub const DESK: FxConfig = FxConfig { k: 16, f: 8 };

    pub fn new(k: u32, f: u32) -> Result<Self, FxError> {
        if f == 0 || f >= k || k > 63 {
            return Err(FxError::InvalidConfig { k, f });
        }
        Ok(Self { k, f })
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn f(&self) -> u32 {
        self.f
    }

    #[inline]
    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.k - 1))
    }

    #[inline]
    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.k - 1)) - 1
    }

    /// Value of one unit in the last place, `2^-f`.
    #[inline]
    pub fn resolution(&self) -> f64 {
        (-(self.f as f64)).exp2()
    }

    #[inline]
    pub fn contains_raw(&self, raw: i128) -> bool {
        raw >= self.min_raw() as i128 && raw <= self.max_raw() as i128
    }

    #[inline]
    pub fn wrap(&self, v: i128) -> i64 {
        wrap_bits(v, self.k) as i64
    }

    #[inline]
    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.resolution()
    }

    /// Round half away from zero onto the grid; errors outside the range.
    pub fn quantize_raw(&self, r: f64) -> Result<i64, FxError> {
        let scaled = (r * (self.f as f64).exp2()).round();
        if !scaled.is_finite() || scaled < self.min_raw() as f64 || scaled > self.max_raw() as f64 {
            return Err(FxError::Overflow {
                value: r,
                k: self.k,
                f: self.f,
            });
        }
        Ok(scaled as i64)
    }

    #[inline]
    fn mul_raw(&self, a: i64, b: i64) -> i64 {
        self.wrap((a as i128 * b as i128) >> self.f)
    }
}

impl fmt::Display for FxConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q<{},{}>", self.k, self.f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FxValue {
    raw: i64,
    cfg: FxConfig,
}

impl FxValue {
    pub fn from_raw(raw: i64, cfg: FxConfig) -> Result<Self, FxError> {
        if !cfg.contains_raw(raw as i128) {
            return Err(FxError::RawOutOfRange {
                raw: raw as i128,
                k: cfg.k,
            });
        }
        Ok(Self { raw, cfg })
    }

    pub fn zero(cfg: FxConfig) -> Self {
        Self { raw: 0, cfg }
    }

    pub fn quantize(r: f64, cfg: FxConfig) -> Result<Self, FxError> {
        Ok(Self {
            raw: cfg.quantize_raw(r)?,
            cfg,
        })
    }

    #[inline]
    pub fn raw(&self) -> i64 {
        self.raw
    }

    #[inline]
    pub fn cfg(&self) -> FxConfig {
        self.cfg
    }

    pub fn to_f64(&self) -> f64 {
        self.cfg.to_f64(self.raw)
    }

    /// Modular addition in `Z<k>`.
    pub fn add(self, rhs: FxValue) -> FxValue {
        assert_eq!(self.cfg, rhs.cfg, "fixed-point format mismatch");
        FxValue {
            raw: self.cfg.wrap(self.raw as i128 + rhs.raw as i128),
            cfg: self.cfg,
        }
    }

    pub fn sub(self, rhs: FxValue) -> FxValue {
        assert_eq!(self.cfg, rhs.cfg, "fixed-point format mismatch");
        FxValue {
            raw: self.cfg.wrap(self.raw as i128 - rhs.raw as i128),
            cfg: self.cfg,
        }
    }

    pub fn neg(self) -> FxValue {
        FxValue {
            raw: self.cfg.wrap(-(self.raw as i128)),
            cfg: self.cfg,
        }
    }

    /// `floor(a * b * 2^-f)` wrapped into `Z<k>`.
    pub fn mul(self, rhs: FxValue) -> FxValue {
        assert_eq!(self.cfg, rhs.cfg, "fixed-point format mismatch");
        FxValue {
            raw: self.cfg.mul_raw(self.raw, rhs.raw),
            cfg: self.cfg,
        }
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Where the `2^-f` rescale happens in a matrix product.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// Exact accumulation, one floor and one wrap per output entry.
    #[default]
    PerEntry,
    /// Every scalar product is floored and wrapped before accumulation.
    PerProduct,
}

/// Row-major matrix of raw `Z<k>` integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FxMatrix {
    rows: usize,
    cols: usize,
    cfg: FxConfig,
    data: Vec<i64>,
}

impl FxMatrix {
    pub fn zeros(rows: usize, cols: usize, cfg: FxConfig) -> Self {
        Self {
            rows,
            cols,
            cfg,
            data: vec![0; rows * cols],
        }
    }

    /// Diagonal of `2^f`.
    pub fn identity(n: usize, cfg: FxConfig) -> Self {
        let mut m = Self::zeros(n, n, cfg);
        for i in 0..n {
            m.data[i * n + i] = 1i64 << cfg.f;
        }
        m
    }

    pub fn from_raw(
        rows: usize,
        cols: usize,
        cfg: FxConfig,
        data: Vec<i64>,
    ) -> Result<Self, FxError> {
        if data.len() != rows * cols {
            return Err(FxError::Shape {
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| !cfg.contains_raw(v as i128)) {
            return Err(FxError::RawOutOfRange {
                raw: bad as i128,
                k: cfg.k,
            });
        }
        Ok(Self {
            rows,
            cols,
            cfg,
            data,
        })
    }

    /// Wraps arbitrary wide integers into `Z<k>`.
    pub fn from_wide_wrapping(rows: usize, cols: usize, cfg: FxConfig, data: &[i128]) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self {
            rows,
            cols,
            cfg,
            data: data.iter().map(|&v| cfg.wrap(v)).collect(),
        }
    }

    pub fn quantize(
        rows: usize,
        cols: usize,
        values: &[f64],
        cfg: FxConfig,
    ) -> Result<Self, FxError> {
        if values.len() != rows * cols {
            return Err(FxError::Shape {
                left: (rows, cols),
                right: (values.len(), 1),
            });
        }
        let data = values
            .iter()
            .map(|&v| cfg.quantize_raw(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            rows,
            cols,
            cfg,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn cfg(&self) -> FxConfig {
        self.cfg
    }

    #[inline]
    pub fn raw(&self) -> &[i64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> FxValue {
        FxValue {
            raw: self.data[r * self.cols + c],
            cfg: self.cfg,
        }
    }

    #[inline]
    pub fn get_raw(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: FxValue) {
        assert_eq!(v.cfg, self.cfg, "fixed-point format mismatch");
        self.data[r * self.cols + c] = v.raw;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&r| self.cfg.to_f64(r)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows, self.cfg);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..r).all(|c| self.get_raw(r, c) == self.get_raw(c, r)))
    }

    fn check_same(&self, rhs: &Self) -> Result<(), FxError> {
        if self.cfg != rhs.cfg {
            return Err(FxError::ConfigMismatch {
                left: self.cfg,
                right: rhs.cfg,
            });
        }
        if self.shape() != rhs.shape() {
            return Err(FxError::Shape {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, FxError> {
        self.check_same(rhs)?;
        let cfg = self.cfg;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| cfg.wrap(a as i128 + b as i128))
            .collect();
        Ok(Self { data, ..*self })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, FxError> {
        self.check_same(rhs)?;
        let cfg = self.cfg;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| cfg.wrap(a as i128 - b as i128))
            .collect();
        Ok(Self { data, ..*self })
    }

    /// Fixed-point product with the default per-entry scaling.
    pub fn matmul(&self, rhs: &Self) -> Result<Self, FxError> {
        self.matmul_with(rhs, ScaleMode::PerEntry)
    }

    pub fn matmul_with(&self, rhs: &Self, mode: ScaleMode) -> Result<Self, FxError> {
        if self.cfg != rhs.cfg {
            return Err(FxError::ConfigMismatch {
                left: self.cfg,
                right: rhs.cfg,
            });
        }
        if self.cols != rhs.rows {
            return Err(FxError::Shape {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let cfg = self.cfg;
        let data = match mode {
            ScaleMode::PerEntry => self
                .mul_exact(rhs)
                .into_iter()
                .map(|acc| cfg.wrap(acc >> cfg.f))
                .collect(),
            ScaleMode::PerProduct => {
                let mut out = vec![0i128; self.rows * rhs.cols];
                for i in 0..self.rows {
                    let row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
                    for l in 0..self.cols {
                        let a = self.data[i * self.cols + l];
                        if a == 0 {
                            continue;
                        }
                        let b_row = &rhs.data[l * rhs.cols..(l + 1) * rhs.cols];
                        for (acc, &b) in row.iter_mut().zip(b_row) {
                            *acc += cfg.mul_raw(a, b) as i128;
                        }
                    }
                }
                out.into_iter().map(|v| cfg.wrap(v)).collect()
            }
        };
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            cfg,
            data,
        })
    }

    /// Unscaled integer product `Σ_l a_il b_lj`, exact modulo `2^128`.
    ///
    /// Floor-scaling the result by `2^f` and wrapping into `Z<k>` is exact as
    /// long as `k + f <= 128`, which every valid format satisfies.
    pub fn mul_exact(&self, rhs: &Self) -> Vec<i128> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = vec![0i128; self.rows * rhs.cols];
        for i in 0..self.rows {
            let row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for l in 0..self.cols {
                let a = self.data[i * self.cols + l] as i128;
                if a == 0 {
                    continue;
                }
                let b_row = &rhs.data[l * rhs.cols..(l + 1) * rhs.cols];
                for (acc, &b) in row.iter_mut().zip(b_row) {
                    *acc = acc.wrapping_add(a.wrapping_mul(b as i128));
                }
            }
        }
        out
    }

    /// Unscaled `selfᵀ · rhs` without materialising the transpose.
    pub fn transpose_mul_exact(&self, rhs: &Self) -> Vec<i128> {
        assert_eq!(self.rows, rhs.rows, "row counts differ");
        let (n, p) = (self.cols, rhs.cols);
        let mut out = vec![0i128; n * p];
        for r in 0..self.rows {
            let a_row = &self.data[r * self.cols..(r + 1) * self.cols];
            let b_row = &rhs.data[r * p..(r + 1) * p];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let a = a as i128;
                let acc_row = &mut out[i * p..(i + 1) * p];
                for (acc, &b) in acc_row.iter_mut().zip(b_row) {
                    *acc = acc.wrapping_add(a.wrapping_mul(b as i128));
                }
            }
        }
        out
    }

    /// Fixed-point `selfᵀ · rhs` with per-entry scaling.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self, FxError> {
        if self.cfg != rhs.cfg {
            return Err(FxError::ConfigMismatch {
                left: self.cfg,
                right: rhs.cfg,
            });
        }
        if self.rows != rhs.rows {
            return Err(FxError::Shape {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let cfg = self.cfg;
        let data = self
            .transpose_mul_exact(rhs)
            .into_iter()
            .map(|acc| cfg.wrap(acc >> cfg.f))
            .collect();
        Ok(Self {
            rows: self.cols,
            cols: rhs.cols,
            cfg,
            data,
        })
    }

    /// Largest absolute deviation from `other` in real units.
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        assert_eq!(self.data.len(), other.len());
        self.data
            .iter()
            .zip(other)
            .map(|(&r, &o)| (self.cfg.to_f64(r) - o).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q84() -> FxConfig {
        FxConfig::new(8, 4).unwrap()
    }

    fn v(raw: i64) -> FxValue {
        FxValue::from_raw(raw, q84()).unwrap()
    }

    #[test]
    fn config_bounds() {
        assert!(FxConfig::new(8, 0).is_err());
        assert!(FxConfig::new(8, 8).is_err());
        assert!(FxConfig::new(64, 24).is_err());
        let c = FxConfig::new(63, 62).unwrap();
        assert_eq!(c.min_raw(), i64::MIN / 2);
        assert_eq!(q84().min_raw(), -128);
        assert_eq!(q84().max_raw(), 127);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(FxValue::quantize(0.75, q84()).unwrap().raw(), 12);
        assert_eq!(FxValue::quantize(0.0, FxConfig::PAPER).unwrap().raw(), 0);
        // 16/3 = 5.33 rounds to 5, i.e. 0.3125
        let third = FxValue::quantize(1.0 / 3.0, q84()).unwrap();
        assert_eq!(third.raw(), 5);
        assert_eq!(third.to_f64(), 0.3125);
        // halves go away from zero
        assert_eq!(FxValue::quantize(0.03125, q84()).unwrap().raw(), 1);
        assert_eq!(FxValue::quantize(-0.03125, q84()).unwrap().raw(), -1);
    }

    #[test]
    fn quantize_overflow() {
        assert!(matches!(
            FxValue::quantize(8.0, q84()),
            Err(FxError::Overflow { .. })
        ));
        assert!(FxValue::quantize(-8.0, q84()).is_ok());
        assert!(FxValue::quantize(f64::NAN, q84()).is_err());
    }

    #[test]
    fn quantize_error_bound_against_rational() {
        // exact rational oracle: r = n/d, quantization error |raw/16 - n/d| <= 1/32
        for n in -100i64..100 {
            for d in 1i64..20 {
                let r = n as f64 / d as f64;
                if r.abs() >= 7.9 {
                    continue;
                }
                let raw = FxValue::quantize(r, q84()).unwrap().raw();
                // |raw*d - 16n| * 32 <= 16 d  <=>  |raw/16 - n/d| <= 1/32
                assert!((raw * d - 16 * n).abs() * 2 <= d, "n={n} d={d} raw={raw}");
            }
        }
    }

    #[test]
    fn add_examples() {
        assert_eq!(v(24).add(v(8)).raw(), 32);
        assert_eq!(v(100).add(v(50)).raw(), -106);
        assert_eq!(v(100).add(v(50)).to_f64(), -6.625);
        assert_eq!(v(-77).add(v(0)), v(-77));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(v(24).mul(v(8)).raw(), 12);
        assert_eq!(v(-24).mul(v(8)).raw(), -12);
        assert_eq!(v(1).mul(v(1)).raw(), 0);
        // floor, not truncation
        assert_eq!(v(-1).mul(v(1)).raw(), -1);
    }

    #[test]
    fn additive_group_exhaustive_k8() {
        let all: Vec<FxValue> = (-128..128).map(v).collect();
        for &a in &all {
            assert_eq!(a.add(v(0)), a);
            assert_eq!(a.add(a.neg()), v(0));
            for &b in &all {
                assert_eq!(a.add(b), b.add(a));
                assert_eq!(a.add(b).sub(b), a);
            }
        }
        for &a in all.iter().step_by(5) {
            for &b in all.iter().step_by(3) {
                for &c in all.iter().step_by(7) {
                    assert_eq!(a.add(b).add(c), a.add(b.add(c)));
                }
            }
        }
    }

    #[test]
    fn mul_floor_bias_without_wrap() {
        // exhaustive at k=8: when the exact product is representable, the
        // error lies in [-2^-f, 0]
        for a in -128i64..128 {
            for b in -128i64..128 {
                let exact = (a * b) as f64 / 256.0;
                if !(-8.0..8.0).contains(&exact) {
                    continue;
                }
                let err = v(a).mul(v(b)).to_f64() - exact;
                assert!((-1.0 / 16.0..=0.0).contains(&err), "a={a} b={b} err={err}");
            }
        }
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let cfg = q84();
        let b = FxMatrix::from_raw(2, 3, cfg, vec![1, -5, 17, 100, -128, 3]).unwrap();
        assert_eq!(FxMatrix::identity(2, cfg).matmul(&b).unwrap(), b);
        let a1 = FxMatrix::from_raw(1, 1, cfg, vec![24]).unwrap();
        let b1 = FxMatrix::from_raw(1, 1, cfg, vec![-8]).unwrap();
        assert_eq!(a1.matmul(&b1).unwrap().get(0, 0), v(24).mul(v(-8)));
        assert!(a1.matmul(&b).is_err());
    }

    #[test]
    fn matmul_scale_modes_differ_only_by_floor_bias() {
        let cfg = q84();
        let a = FxMatrix::from_raw(1, 3, cfg, vec![3, 5, 7]).unwrap();
        let b = FxMatrix::from_raw(3, 1, cfg, vec![3, 5, 7]).unwrap();
        // exact 83/16 floors to 5; per product 0+1+3 = 4
        assert_eq!(a.matmul(&b).unwrap().raw(), &[5]);
        assert_eq!(
            a.matmul_with(&b, ScaleMode::PerProduct).unwrap().raw(),
            &[4]
        );
    }

    #[test]
    fn matmul_against_rational_oracle_q48_24() {
        use rand::{Rng, SeedableRng};
        let cfg = FxConfig::PAPER;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a: Vec<f64> = (0..9).map(|_| rng.random_range(-100.0..100.0)).collect();
            let b: Vec<f64> = (0..9).map(|_| rng.random_range(-100.0..100.0)).collect();
            let fa = FxMatrix::quantize(3, 3, &a, cfg).unwrap();
            let fb = FxMatrix::quantize(3, 3, &b, cfg).unwrap();
            let prod = fa.matmul(&fb).unwrap();
            // oracle: exact integer product of the raw values, as a rational
            for i in 0..3 {
                for j in 0..3 {
                    let num: i128 = (0..3)
                        .map(|l| fa.get_raw(i, l) as i128 * fb.get_raw(l, j) as i128)
                        .sum();
                    let exact = num as f64 / (2f64).powi(48);
                    let err = prod.get(i, j).to_f64() - exact;
                    assert!(err <= 0.0 && err >= -3.0 * cfg.resolution());
                }
            }
        }
    }

    #[test]
    fn transpose_matmul_matches_explicit_transpose() {
        let cfg = q84();
        let x = FxMatrix::from_raw(3, 2, cfg, vec![16, -3, 7, 9, -20, 4]).unwrap();
        let y = FxMatrix::from_raw(3, 2, cfg, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(
            x.transpose_matmul(&y).unwrap(),
            x.transpose().matmul(&y).unwrap()
        );
        assert!(x.transpose_matmul(&x).unwrap().is_symmetric());
    }

    proptest! {
        #[test]
        fn wrap_matches_definition(v in any::<i64>(), k in 2u32..=63) {
            let m = 1i128 << k;
            let h = 1i128 << (k - 1);
            let expect = (((v as i128 + h) % m) + m) % m - h;
            prop_assert_eq!(wrap_bits(v as i128, k), expect);
        }

        #[test]
        fn matmul_error_bound(
            a in proptest::collection::vec(-1000i64..1000, 6),
            b in proptest::collection::vec(-1000i64..1000, 6),
        ) {
            let cfg = FxConfig::new(40, 10).unwrap();
            let fa = FxMatrix::from_raw(2, 3, cfg, a).unwrap();
            let fb = FxMatrix::from_raw(3, 2, cfg, b).unwrap();
            let p = fa.matmul(&fb).unwrap();
            let exact: Vec<f64> = (0..4).map(|idx| {
                let (i, j) = (idx / 2, idx % 2);
                (0..3).map(|l| fa.get(i, l).to_f64() * fb.get(l, j).to_f64()).sum()
            }).collect();
            prop_assert!(p.max_abs_diff(&exact) <= 3.0 * cfg.resolution());
        }
    }
}
