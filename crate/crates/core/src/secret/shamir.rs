//! Shamir `(n, k')` sharing of field matrices, one polynomial per entry,
//! evaluated at `t = 1, …, n`.

use rand::Rng;

use super::{FieldMatrix, PrimeField, SecretError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SssShare {
    /// Evaluation point, starting at 1.
    pub index: u32,
    pub payload: FieldMatrix,
}

/// Shares `secret` with fresh uniform randomizers. With `symmetric` set the
/// randomizers are symmetric, so shares of a symmetric secret stay
/// symmetric and can be sent as a triangle.
pub fn sss_share<R: Rng + ?Sized>(
    secret: &FieldMatrix,
    n_shares: usize,
    threshold: usize,
    symmetric: bool,
    rng: &mut R,
) -> Result<Vec<SssShare>, SecretError> {
    check_counts(secret.field(), n_shares, threshold)?;
    let randomizers: Vec<FieldMatrix> = (1..threshold)
        .map(|_| FieldMatrix::random(secret.rows(), secret.cols(), secret.field(), symmetric, rng))
        .collect();
    sss_share_with(secret, n_shares, threshold, &randomizers)
}

/// Evaluates `p(t) = secret + Σ_j R_j t^j` at `t = 1..=n_shares` for the
/// given randomizers `R_1, …, R_{k'−1}`.
pub fn sss_share_with(
    secret: &FieldMatrix,
    n_shares: usize,
    threshold: usize,
    randomizers: &[FieldMatrix],
) -> Result<Vec<SssShare>, SecretError> {
    let field = secret.field();
    check_counts(field, n_shares, threshold)?;
    if randomizers.len() != threshold - 1 {
        return Err(SecretError::Randomness {
            expected: threshold - 1,
            got: randomizers.len(),
        });
    }
    for r in randomizers {
        if r.field() != field {
            return Err(SecretError::FieldMismatch(
                field.modulus(),
                r.field().modulus(),
            ));
        }
        if r.shape() != secret.shape() {
            return Err(SecretError::Shape(secret.shape(), r.shape()));
        }
    }
    let len = secret.data().len();
    Ok((1..=n_shares as u64)
        .map(|t| {
            // Horner from the highest coefficient down
            let mut acc: Vec<u128> = match randomizers.last() {
                Some(top) => top.data().to_vec(),
                None => secret.data().to_vec(),
            };
            if !randomizers.is_empty() {
                let lower = randomizers[..randomizers.len() - 1]
                    .iter()
                    .rev()
                    .chain(std::iter::once(secret));
                for coeff in lower {
                    for (a, &c) in acc.iter_mut().zip(coeff.data()) {
                        *a = field.add(field.mul_small(*a, t), c);
                    }
                }
            }
            debug_assert_eq!(acc.len(), len);
            SssShare {
                index: t as u32,
                payload: FieldMatrix::from_elements(secret.rows(), secret.cols(), field, acc),
            }
        })
        .collect())
}

fn check_counts(field: PrimeField, n_shares: usize, threshold: usize) -> Result<(), SecretError> {
    if threshold == 0 || threshold > n_shares || n_shares as u128 >= field.modulus() {
        return Err(SecretError::ShareCount {
            threshold,
            shares: n_shares,
            q: field.modulus(),
        });
    }
    Ok(())
}

/// Lagrange coefficients for interpolating at zero from the given points.
pub fn lagrange_at_zero(field: PrimeField, points: &[u32]) -> Result<Vec<u128>, SecretError> {
    points
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut num = 1u128;
            let mut den = 1u128;
            for (j, &xj) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                // λ_i = Π x_j / (x_j − x_i)
                num = field.mul(num, xj as u128 % field.modulus());
                den = field.mul(
                    den,
                    field.sub(xj as u128 % field.modulus(), xi as u128 % field.modulus()),
                );
            }
            Ok(field.mul(num, field.inv(den)?))
        })
        .collect()
}

/// Reconstructs the secret from the first `threshold` shares.
pub fn sss_reconstruct(shares: &[SssShare], threshold: usize) -> Result<FieldMatrix, SecretError> {
    if threshold == 0 || shares.len() < threshold {
        return Err(SecretError::TooFewShares {
            needed: threshold.max(1),
            got: shares.len(),
        });
    }
    let used = &shares[..threshold];
    for (i, a) in used.iter().enumerate() {
        if used[..i].iter().any(|b| b.index == a.index) {
            return Err(SecretError::DuplicateIndex(a.index));
        }
        if a.payload.field() != used[0].payload.field() {
            return Err(SecretError::FieldMismatch(
                used[0].payload.field().modulus(),
                a.payload.field().modulus(),
            ));
        }
        if a.payload.shape() != used[0].payload.shape() {
            return Err(SecretError::Shape(
                used[0].payload.shape(),
                a.payload.shape(),
            ));
        }
    }
    let field = used[0].payload.field();
    let points: Vec<u32> = used.iter().map(|s| s.index).collect();
    let lambda = lagrange_at_zero(field, &points)?;
    let (rows, cols) = used[0].payload.shape();
    let mut out = vec![0u128; rows * cols];
    for (share, &l) in used.iter().zip(&lambda) {
        for (o, &v) in out.iter_mut().zip(share.payload.data()) {
            *o = field.add(*o, field.mul(v, l));
        }
    }
    Ok(FieldMatrix::from_elements(rows, cols, field, out))
}

/// Entrywise sum of two shares held at the same evaluation point.
pub fn share_add(a: &SssShare, b: &SssShare) -> Result<SssShare, SecretError> {
    if a.index != b.index {
        return Err(SecretError::IndexMismatch(a.index, b.index));
    }
    Ok(SssShare {
        index: a.index,
        payload: a.payload.add(&b.payload)?,
    })
}

/// Whether the shares held at `points` determine the secret of a
/// threshold-`k'` sharing: the secret is the constant coefficient, so this
/// asks whether `e_0` lies in the row space of the Vandermonde rows
/// `(1, x, …, x^(k'−1))`.
pub fn reveals_secret(field: PrimeField, points: &[u32], threshold: usize) -> bool {
    let n = threshold;
    let mut rows: Vec<Vec<u128>> = points
        .iter()
        .map(|&x| {
            let x = x as u128 % field.modulus();
            let mut row = Vec::with_capacity(n);
            let mut p = 1u128;
            for _ in 0..n {
                row.push(p);
                p = field.mul(p, x);
            }
            row
        })
        .collect();
    let base = rank(field, rows.clone());
    let mut e0 = vec![0u128; n];
    if n > 0 {
        e0[0] = 1;
    }
    rows.push(e0);
    rank(field, rows) == base
}

fn rank(field: PrimeField, mut rows: Vec<Vec<u128>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(pivot) = (r..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(r, pivot);
        let inv = field.inv(rows[r][c]).expect("nonzero pivot");
        for v in rows[r].iter_mut() {
            *v = field.mul(*v, inv);
        }
        for i in 0..rows.len() {
            if i != r && rows[i][c] != 0 {
                let factor = rows[i][c];
                for j in 0..cols {
                    let sub = field.mul(factor, rows[r][j]);
                    rows[i][j] = field.sub(rows[i][j], sub);
                }
            }
        }
        r += 1;
    }
    r
}
