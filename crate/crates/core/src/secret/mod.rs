//! Prime-field matrices and Shamir secret sharing.
//!
//! Fixed-point integers enter the field through [`field_encode`]
//! (negatives map to `q − |v|`) and leave it through [`field_decode`], which
//! also applies the floor-scale by `2^−f` that every multiplication in the
//! field path has postponed.

pub mod field;
pub mod shamir;

use thiserror::Error;

use crate::fxp::{FxConfig, FxMatrix};

pub use field::{is_prime, PrimeField};
pub use shamir::{reveals_secret, share_add, sss_reconstruct, sss_share, sss_share_with, SssShare};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecretError {
    #[error("{0} is not prime")]
    NotPrime(u128),
    #[error("modulus needs {0} bits; at most 80 are supported")]
    ModulusTooLarge(u32),
    #[error("field q={q} cannot hold Z<{bits}>")]
    FieldTooSmall { bits: u32, q: u128 },
    #[error("zero has no inverse")]
    ZeroInverse,
    #[error("value {value} is outside Z<{bits}>")]
    OutOfRange { value: i128, bits: u32 },
    #[error("need 1 <= k' <= n < q, got k'={threshold}, n={shares}, q={q}")]
    ShareCount {
        threshold: usize,
        shares: usize,
        q: u128,
    },
    #[error("need at least {needed} shares, got {got}")]
    TooFewShares { needed: usize, got: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),
    #[error("share indices differ: {0} vs {1}")]
    IndexMismatch(u32, u32),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("field mismatch: q={0} vs q={1}")]
    FieldMismatch(u128, u128),
    #[error("need {expected} randomizer matrices, got {got}")]
    Randomness { expected: usize, got: usize },
}

/// Row-major matrix of reduced field elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    field: PrimeField,
    data: Vec<u128>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize, field: PrimeField) -> Self {
        Self {
            rows,
            cols,
            field,
            data: vec![0; rows * cols],
        }
    }

    /// Reduces each entry modulo `q`.
    pub fn from_elements(rows: usize, cols: usize, field: PrimeField, data: Vec<u128>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        let q = field.modulus();
        Self {
            rows,
            cols,
            field,
            data: data.into_iter().map(|v| v % q).collect(),
        }
    }

    /// Encodes signed integers, each of which must lie in `Z<bits>`.
    pub fn from_signed(
        rows: usize,
        cols: usize,
        field: PrimeField,
        values: &[i128],
        bits: u32,
    ) -> Result<Self, SecretError> {
        if values.len() != rows * cols {
            return Err(SecretError::Shape((rows, cols), (values.len(), 1)));
        }
        if bits == 0 || bits >= field.element_bits() {
            return Err(SecretError::FieldTooSmall {
                bits,
                q: field.modulus(),
            });
        }
        let half = 1i128 << (bits - 1);
        let data = values
            .iter()
            .map(|&v| {
                if v < -half || v >= half {
                    Err(SecretError::OutOfRange { value: v, bits })
                } else {
                    Ok(field.encode(v))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            rows,
            cols,
            field,
            data,
        })
    }

    /// Uniformly random matrix; mirrored across the diagonal if `symmetric`.
    pub fn random<R: rand::Rng + ?Sized>(
        rows: usize,
        cols: usize,
        field: PrimeField,
        symmetric: bool,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(rows, cols, field);
        if symmetric {
            assert_eq!(rows, cols, "symmetric matrices must be square");
            for r in 0..rows {
                for c in r..cols {
                    let v = field.random(rng);
                    m.data[r * cols + c] = v;
                    m.data[c * cols + r] = v;
                }
            }
        } else {
            for v in m.data.iter_mut() {
                *v = field.random(rng);
            }
        }
        m
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
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn data(&self) -> &[u128] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u128 {
        self.data[r * self.cols + c]
    }

    /// Entries read back as signed integers in `(−q/2, q/2)`.
    pub fn to_signed(&self) -> Vec<i128> {
        self.data.iter().map(|&e| self.field.decode(e)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    fn check(&self, rhs: &Self) -> Result<(), SecretError> {
        if self.field != rhs.field {
            return Err(SecretError::FieldMismatch(
                self.field.modulus(),
                rhs.field.modulus(),
            ));
        }
        if self.shape() != rhs.shape() {
            return Err(SecretError::Shape(self.shape(), rhs.shape()));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, SecretError> {
        let mut out = self.clone();
        out.add_assign(rhs)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, rhs: &Self) -> Result<(), SecretError> {
        self.check(rhs)?;
        let f = self.field;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = f.add(*a, b);
        }
        Ok(())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, SecretError> {
        self.check(rhs)?;
        let f = self.field;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f.sub(a, b))
            .collect();
        Ok(Self { data, ..*self })
    }

    /// Multiplies every entry by the field element `s`.
    pub fn scale(&self, s: u128) -> Self {
        let f = self.field;
        let s = s % f.modulus();
        Self {
            data: self.data.iter().map(|&a| f.mul(a, s)).collect(),
            ..*self
        }
    }

    /// Field product with a public matrix of signed integers (no scaling).
    pub fn mul_signed(&self, rhs: &FxMatrix) -> Result<Self, SecretError> {
        if self.cols != rhs.rows() {
            return Err(SecretError::Shape(self.shape(), rhs.shape()));
        }
        let p = rhs.cols();
        let b = rhs.raw();
        let f = self.field;
        let mut data = Vec::with_capacity(self.rows * p);
        let mut col = vec![0i64; self.cols];
        let mut cols_t: Vec<Vec<i64>> = Vec::with_capacity(p);
        for j in 0..p {
            for (l, slot) in col.iter_mut().enumerate() {
                *slot = b[l * p + j];
            }
            cols_t.push(col.clone());
        }
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for cj in &cols_t {
                data.push(f.dot_signed(row.iter().copied(), cj.iter().copied()));
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: p,
            field: f,
            data,
        })
    }
}

/// Maps the raw integers of `m` into the field.
pub fn field_encode(m: &FxMatrix, field: PrimeField) -> Result<FieldMatrix, SecretError> {
    let cfg = m.cfg();
    let wide: Vec<i128> = m.raw().iter().map(|&v| v as i128).collect();
    FieldMatrix::from_signed(m.rows(), m.cols(), field, &wide, cfg.k() + cfg.f())
}

/// Reads field elements as signed integers, floor-scales by `2^−f` and wraps
/// into `Z<k>`.
pub fn field_decode(m: &FieldMatrix, cfg: FxConfig) -> FxMatrix {
    let wide: Vec<i128> = m.to_signed().into_iter().map(|v| v >> cfg.f()).collect();
    FxMatrix::from_wide_wrapping(m.rows(), m.cols(), cfg, &wide)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_field() -> PrimeField {
        PrimeField::above_power_of_two(24).unwrap()
    }

    #[test]
    fn encode_examples() {
        let cfg = FxConfig::DESK;
        let f = desk_field();
        let m = FxMatrix::from_raw(1, 3, cfg, vec![0, -1, -2]).unwrap();
        let e = field_encode(&m, f).unwrap();
        let q = f.modulus();
        assert_eq!(e.data(), &[0, q - 1, q - 2]);
        assert_eq!(field_decode(&FieldMatrix::zeros(1, 1, f), cfg).raw(), &[0]);
    }

    #[test]
    fn decode_floor_scales_exhaustive_desk() {
        // every value of Z<k+f> at k=16,f=8, stepping to keep the test fast
        let cfg = FxConfig::DESK;
        let f = desk_field();
        let vals: Vec<i128> = (-(1i128 << 23)..(1i128 << 23)).step_by(97).collect();
        let m = FieldMatrix::from_signed(1, vals.len(), f, &vals, 24).unwrap();
        let d = field_decode(&m, cfg);
        for (v, &got) in vals.iter().zip(d.raw()) {
            assert_eq!(got, cfg.wrap(v >> 8));
        }
    }

    #[test]
    fn round_trip_of_fx_matrix_is_floor_scaled() {
        let cfg = FxConfig::DESK;
        let f = desk_field();
        let all: Vec<i64> = (cfg.min_raw()..=cfg.max_raw()).collect();
        let m = FxMatrix::from_raw(1, all.len(), cfg, all.clone()).unwrap();
        let back = field_decode(&field_encode(&m, f).unwrap(), cfg);
        for (&v, &got) in all.iter().zip(back.raw()) {
            assert_eq!(got, v >> 8);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let f = desk_field();
        assert!(FieldMatrix::from_signed(1, 1, f, &[1 << 23], 24).is_err());
        assert!(FieldMatrix::from_signed(1, 1, f, &[-(1 << 23)], 24).is_ok());
        assert!(FieldMatrix::from_signed(1, 1, f, &[0], 25).is_err());
    }

    #[test]
    fn mul_signed_matches_integer_product() {
        let cfg = FxConfig::DESK;
        let f = desk_field();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = FieldMatrix::random(3, 4, f, false, &mut rng);
        let e = FxMatrix::from_raw(4, 2, cfg, vec![3, -7, 100, -32768, 0, 1, -1, 32767]).unwrap();
        let got = a.mul_signed(&e).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0u128;
                for l in 0..4 {
                    acc = f.add(acc, f.mul(a.get(i, l), f.encode(e.get_raw(l, j) as i128)));
                }
                assert_eq!(got.get(i, j), acc);
            }
        }
    }

    #[test]
    fn symmetric_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(FieldMatrix::random(4, 4, desk_field(), true, &mut rng).is_symmetric());
    }
}
