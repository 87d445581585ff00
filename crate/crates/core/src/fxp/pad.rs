//! One-time pads: matrices with entries drawn uniformly from `Z<bits>`.

use rand::Rng;

use super::{wrap_bits, FxError, FxMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PadMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    symmetric: bool,
    data: Vec<i128>,
}

impl PadMatrix {
    /// Draws a pad uniformly over `Z<bits>^(rows x cols)`. A symmetric pad
    /// draws the upper triangle and mirrors it.
    pub fn random<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        bits: u32,
        symmetric: bool,
        rng: &mut R,
    ) -> Result<Self, FxError> {
        if !(2..=128).contains(&bits) {
            return Err(FxError::RingWidth(bits));
        }
        if symmetric && rows != cols {
            return Err(FxError::Shape {
                left: (rows, cols),
                right: (cols, rows),
            });
        }
        let mut data = vec![0i128; rows * cols];
        if symmetric {
            for r in 0..rows {
                for c in r..cols {
                    let v = wrap_bits(rng.random::<u128>() as i128, bits);
                    data[r * cols + c] = v;
                    data[c * cols + r] = v;
                }
            }
        } else {
            for v in data.iter_mut() {
                *v = wrap_bits(rng.random::<u128>() as i128, bits);
            }
        }
        Ok(Self {
            rows,
            cols,
            bits,
            symmetric,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, bits: u32, symmetric: bool) -> Self {
        Self {
            rows,
            cols,
            bits,
            symmetric: symmetric && rows == cols,
            data: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn raw(&self) -> &[i128] {
        &self.data
    }

    fn check(&self, m: &FxMatrix) -> Result<(), FxError> {
        if m.shape() != self.shape() {
            return Err(FxError::Shape {
                left: m.shape(),
                right: self.shape(),
            });
        }
        if self.bits != m.cfg().k() {
            return Err(FxError::RingWidth(self.bits));
        }
        Ok(())
    }
}

/// `M + R` entrywise in `Z<k>`.
pub fn pad_apply(m: &FxMatrix, r: &PadMatrix) -> Result<FxMatrix, FxError> {
    r.check(m)?;
    let wide: Vec<i128> = m
        .raw()
        .iter()
        .zip(&r.data)
        .map(|(&a, &p)| a as i128 + p)
        .collect();
    Ok(FxMatrix::from_wide_wrapping(
        m.rows(),
        m.cols(),
        m.cfg(),
        &wide,
    ))
}

/// `M - R` entrywise in `Z<k>`.
pub fn pad_remove(m: &FxMatrix, r: &PadMatrix) -> Result<FxMatrix, FxError> {
    r.check(m)?;
    let wide: Vec<i128> = m
        .raw()
        .iter()
        .zip(&r.data)
        .map(|(&a, &p)| a as i128 - p)
        .collect();
    Ok(FxMatrix::from_wide_wrapping(
        m.rows(),
        m.cols(),
        m.cfg(),
        &wide,
    ))
}
