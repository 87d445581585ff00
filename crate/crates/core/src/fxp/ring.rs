//! Integer matrices over the ring `Z<bits>` (`bits <= 128`) with wrapping
//! arithmetic and no rescaling.
//!
//! Padded values cannot be multiplied by a non-integer public constant and
//! floor-scaled without losing the ability to strip the pad afterwards: once
//! `x + r` has wrapped, `floor(c(x + r)) - floor(cr)` is off by `c * 2^k`.
//! Keeping every padded quantity in an integer ring wide enough for the
//! unscaled result, and multiplying only by integers, makes pad removal exact.
//! The single rescale happens after the pads are gone.

use super::{wrap_bits, FxError, FxMatrix, PadMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    data: Vec<i128>,
}

impl RingMatrix {
    pub fn zeros(rows: usize, cols: usize, bits: u32) -> Result<Self, FxError> {
        if !(2..=128).contains(&bits) {
            return Err(FxError::RingWidth(bits));
        }
        Ok(Self {
            rows,
            cols,
            bits,
            data: vec![0; rows * cols],
        })
    }

    /// Wraps each entry of `data` into `Z<bits>`.
    pub fn from_wide(
        rows: usize,
        cols: usize,
        bits: u32,
        data: Vec<i128>,
    ) -> Result<Self, FxError> {
        if !(2..=128).contains(&bits) {
            return Err(FxError::RingWidth(bits));
        }
        if data.len() != rows * cols {
            return Err(FxError::Shape {
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        let data = data.into_iter().map(|v| wrap_bits(v, bits)).collect();
        Ok(Self {
            rows,
            cols,
            bits,
            data,
        })
    }

    /// Lifts the raw integers of `m`, multiplied by `2^shift`, into the ring.
    pub fn from_fx(m: &FxMatrix, shift: u32, bits: u32) -> Result<Self, FxError> {
        let data = m.raw().iter().map(|&v| (v as i128) << shift).collect();
        Self::from_wide(m.rows(), m.cols(), bits, data)
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
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Entries as signed representatives in `[-2^(bits-1), 2^(bits-1))`.
    #[inline]
    pub fn raw(&self) -> &[i128] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<i128> {
        self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                (0..r).all(|c| self.data[r * self.cols + c] == self.data[c * self.cols + r])
            })
    }

    fn check(&self, shape: (usize, usize), bits: u32) -> Result<(), FxError> {
        if self.shape() != shape {
            return Err(FxError::Shape {
                left: self.shape(),
                right: shape,
            });
        }
        if self.bits != bits {
            return Err(FxError::RingWidth(bits));
        }
        Ok(())
    }

    fn rewrap(&mut self) {
        let bits = self.bits;
        for v in self.data.iter_mut() {
            *v = wrap_bits(*v, bits);
        }
    }

    pub fn add_assign(&mut self, rhs: &RingMatrix) -> Result<(), FxError> {
        self.check(rhs.shape(), rhs.bits)?;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = a.wrapping_add(b);
        }
        self.rewrap();
        Ok(())
    }

    pub fn sub_assign(&mut self, rhs: &RingMatrix) -> Result<(), FxError> {
        self.check(rhs.shape(), rhs.bits)?;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = a.wrapping_sub(b);
        }
        self.rewrap();
        Ok(())
    }

    /// `self += coeff * rhs` in the ring.
    pub fn add_scaled(&mut self, coeff: i128, rhs: &RingMatrix) -> Result<(), FxError> {
        self.check(rhs.shape(), rhs.bits)?;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = a.wrapping_add(coeff.wrapping_mul(b));
        }
        self.rewrap();
        Ok(())
    }

    pub fn apply_pad(&mut self, pad: &PadMatrix) -> Result<(), FxError> {
        self.check(pad.shape(), pad.bits())?;
        for (a, &p) in self.data.iter_mut().zip(pad.raw()) {
            *a = a.wrapping_add(p);
        }
        self.rewrap();
        Ok(())
    }

    pub fn remove_pad(&mut self, pad: &PadMatrix) -> Result<(), FxError> {
        self.check(pad.shape(), pad.bits())?;
        for (a, &p) in self.data.iter_mut().zip(pad.raw()) {
            *a = a.wrapping_sub(p);
        }
        self.rewrap();
        Ok(())
    }

    /// Integer product `self · rhs` with the raw entries of `rhs`, unscaled.
    pub fn mul_fx(&self, rhs: &FxMatrix) -> Result<RingMatrix, FxError> {
        if self.cols != rhs.rows() {
            return Err(FxError::Shape {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let p = rhs.cols();
        let mut out = vec![0i128; self.rows * p];
        let b = rhs.raw();
        for i in 0..self.rows {
            let acc_row = &mut out[i * p..(i + 1) * p];
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (l, &a) in a_row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (acc, &bv) in acc_row.iter_mut().zip(&b[l * p..(l + 1) * p]) {
                    *acc = acc.wrapping_add(a.wrapping_mul(bv as i128));
                }
            }
        }
        let mut m = RingMatrix {
            rows: self.rows,
            cols: p,
            bits: self.bits,
            data: out,
        };
        m.rewrap();
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::{FxConfig, FxValue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_retrieval_after_wrap_is_off_by_c_times_modulus() {
        // c = 0.5, x = r = 6.25 in Q<8,4>: x + r wraps, and stripping c*r from
        // c*(x + r) misses c*x by c * 2^k = 128 raw units.
        let cfg = FxConfig::new(8, 4).unwrap();
        let c = FxValue::from_raw(8, cfg).unwrap();
        let x = FxValue::from_raw(100, cfg).unwrap();
        let r = FxValue::from_raw(100, cfg).unwrap();
        let retrieved = c.mul(x.add(r)).sub(c.mul(r));
        assert_eq!(c.mul(x).raw(), 50);
        assert_eq!(retrieved.raw(), -78);
        assert_eq!((c.mul(x).raw() - retrieved.raw()).rem_euclid(256), 128);
    }

    #[test]
    fn ring_retrieval_is_exact_under_wrap() {
        // same inputs with the scaling postponed: integer multiply in Z<8+4>,
        // pad removed, then one floor-scale
        let bits = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = FxConfig::new(8, 4).unwrap();
        for x in -128i64..128 {
            let xm = FxMatrix::from_raw(1, 1, cfg, vec![x]).unwrap();
            let pad = PadMatrix::random(1, 1, bits, false, &mut rng).unwrap();
            let mut padded = RingMatrix::from_fx(&xm, 0, bits).unwrap();
            padded.apply_pad(&pad).unwrap();
            let c = 8i128;
            let mut cx = RingMatrix::zeros(1, 1, bits).unwrap();
            cx.add_scaled(c, &padded).unwrap();
            let mut cr = RingMatrix::zeros(1, 1, bits).unwrap();
            let pad_ring = RingMatrix::from_wide(1, 1, bits, pad.raw().to_vec()).unwrap();
            cr.add_scaled(c, &pad_ring).unwrap();
            cx.sub_assign(&cr).unwrap();
            let got = cfg.wrap(cx.raw()[0] >> 4);
            assert_eq!(got, cfg.wrap((c * x as i128) >> 4));
        }
    }

    #[test]
    fn mul_fx_matches_exact_product() {
        let cfg = FxConfig::DESK;
        let a = FxMatrix::from_raw(2, 3, cfg, vec![5, -7, 300, 1, 0, -32768]).unwrap();
        let e = FxMatrix::from_raw(3, 2, cfg, vec![2, 3, -4, 5, 6, -7]).unwrap();
        let r = RingMatrix::from_fx(&a, 0, 64).unwrap();
        assert_eq!(r.mul_fx(&e).unwrap().raw(), a.mul_exact(&e).as_slice());
    }

    #[test]
    fn wraps_at_width() {
        let mut m = RingMatrix::from_wide(1, 2, 8, vec![127, -128]).unwrap();
        let one = RingMatrix::from_wide(1, 2, 8, vec![1, -1]).unwrap();
        m.add_assign(&one).unwrap();
        assert_eq!(m.raw(), &[-128, 127]);
        let full = RingMatrix::from_wide(1, 1, 128, vec![i128::MAX]).unwrap();
        let mut f2 = full.clone();
        f2.add_assign(&full).unwrap();
        assert_eq!(f2.raw(), &[-2]);
        assert!(RingMatrix::zeros(1, 1, 1).is_err());
    }
}
