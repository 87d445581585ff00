//! Cyclic `(β, γ)` gradient codes.
//!
//! Codeword `i` is a linear combination of partitions `i, i+1, …, i+β−1`
//! (cyclically), with coefficients given by row `i` of the encoding matrix
//! `B`. Any `γ − β + 1` codewords can be combined into the plain sum of all
//! partitions; the weights for a given survivor set are solved on demand by
//! [`EncodingMatrix::decode_vector`].
//!
//! `B` is built the way cyclic repetition codes usually are: draw a random
//! `(β−1)×γ` matrix `H` whose rows sum to zero, then fill each row of `B`
//! with a vector of the prescribed support from the null space of `H`. Any
//! `γ − β + 1` rows then span that null space, which contains the all-ones
//! vector.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fxp::{FxConfig, FxError};

/// Default number of redraws before construction gives up.
pub const DEFAULT_RETRIES: u32 = 16;

/// Redraw when a coefficient exceeds this magnitude; such draws come from
/// near-singular local systems and decode poorly after quantization.
const MAX_COEFF: f64 = 256.0;

/// Exhaustive verification up to this many survivor sets, sampling beyond.
const EXHAUSTIVE_LIMIT: u64 = 4096;
const SAMPLED_PATTERNS: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum CodingError {
    #[error("need 1 <= alpha <= D, got alpha={alpha}, D={d}")]
    Assignment { alpha: usize, d: usize },
    #[error("need 1 <= beta <= gamma, got beta={beta}, gamma={gamma}")]
    Params { beta: usize, gamma: usize },
    #[error("no decodable encoding matrix after {0} attempts")]
    Construction(u32),
    #[error("survivor set must hold {expected} distinct indices below {gamma}, got {got:?}")]
    Survivors {
        expected: usize,
        gamma: usize,
        got: Vec<usize>,
    },
    #[error("survivor set {0:?} gives a singular decoding system")]
    Singular(Vec<usize>),
    #[error(transparent)]
    Fixed(#[from] FxError),
}

/// The `α×D` table `Ω` with `ω_ij = ((j−1) + (i−1)) mod D + 1`. Column `j`
/// lists the devices whose padded data device `j` encodes. Entries are
/// stored zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignmentMatrix {
    alpha: usize,
    d: usize,
}

impl AssignmentMatrix {
    pub fn new(alpha: usize, d: usize) -> Result<Self, CodingError> {
        if alpha == 0 || alpha > d {
            return Err(CodingError::Assignment { alpha, d });
        }
        Ok(Self { alpha, d })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn devices(&self) -> usize {
        self.d
    }

    /// Zero-based `ω_ij` for zero-based `i < α`, `j < D`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> usize {
        (i + j) % self.d
    }

    /// Devices whose data device `j` combines, in row order.
    pub fn column(&self, j: usize) -> Vec<usize> {
        (0..self.alpha).map(|i| self.entry(i, j)).collect()
    }

    /// Devices that receive the data of device `j`, excluding `j` itself.
    pub fn recipients(&self, j: usize) -> Vec<usize> {
        (1..self.alpha).map(|i| (j + self.d - i) % self.d).collect()
    }

    /// The table in the one-based form used in write-ups.
    pub fn rows_one_based(&self) -> Vec<Vec<usize>> {
        (0..self.alpha)
            .map(|i| (0..self.d).map(|j| self.entry(i, j) + 1).collect())
            .collect()
    }
}

/// Quantized `γ×γ` encoding matrix with cyclic support of width `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingMatrix {
    beta: usize,
    gamma: usize,
    cfg: FxConfig,
    seed: u64,
    tolerance_factor: f64,
    coeffs: Vec<i64>,
}

/// Construction knobs for [`EncodingMatrix::build_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    /// Number of random draws before giving up.
    pub retries: u32,
    /// Multiplier on the default residual bound used during verification.
    /// Random cyclic codes grow ill-conditioned with `γ`; values above one
    /// trade decode accuracy for constructibility at large `γ`.
    pub tolerance_factor: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            retries: DEFAULT_RETRIES,
            tolerance_factor: 1.0,
        }
    }
}

/// Weights `a_i` for a survivor set, such that `Σ a_i B_i ≈ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeVector {
    survivors: Vec<usize>,
    weights: Vec<i64>,
    cfg: FxConfig,
}

impl DecodeVector {
    pub fn survivors(&self) -> &[usize] {
        &self.survivors
    }

    /// Raw weights in the code's fixed-point format, aligned with
    /// [`survivors`](Self::survivors).
    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| self.cfg.to_f64(w)).collect()
    }
}

impl EncodingMatrix {
    /// Builds a code with the default options.
    pub fn build(beta: usize, gamma: usize, seed: u64, cfg: FxConfig) -> Result<Self, CodingError> {
        Self::build_with(beta, gamma, seed, cfg, BuildOptions::default())
    }

    pub fn build_with(
        beta: usize,
        gamma: usize,
        seed: u64,
        cfg: FxConfig,
        opts: BuildOptions,
    ) -> Result<Self, CodingError> {
        if beta == 0 || beta > gamma {
            return Err(CodingError::Params { beta, gamma });
        }
        let one = 1i64 << cfg.f();
        let tolerance_factor = opts.tolerance_factor.max(1.0);
        if beta == 1 || beta == gamma {
            let mut coeffs = vec![0i64; gamma * gamma];
            for i in 0..gamma {
                if beta == 1 {
                    coeffs[i * gamma + i] = one;
                } else {
                    coeffs[i * gamma..(i + 1) * gamma].fill(one);
                }
            }
            return Ok(Self {
                beta,
                gamma,
                cfg,
                seed,
                tolerance_factor,
                coeffs,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attempts = opts.retries.max(1);
        for _ in 0..attempts {
            let Some(real) = draw_real(beta, gamma, &mut rng) else {
                continue;
            };
            let Ok(coeffs) = real
                .iter()
                .map(|&v| cfg.quantize_raw(v))
                .collect::<Result<Vec<_>, _>>()
            else {
                continue;
            };
            let candidate = Self {
                beta,
                gamma,
                cfg,
                seed,
                tolerance_factor,
                coeffs,
            };
            if candidate.verify(&mut rng) {
                return Ok(candidate);
            }
        }
        Err(CodingError::Construction(attempts))
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cfg(&self) -> FxConfig {
        self.cfg
    }

    /// Number of survivors needed to decode, `γ − β + 1`.
    pub fn needed(&self) -> usize {
        self.gamma - self.beta + 1
    }

    /// Residual bound `2^(−f+4)·γ`, times the construction's tolerance
    /// factor.
    pub fn tolerance(&self) -> f64 {
        (4.0 - self.cfg.f() as f64).exp2() * self.gamma as f64 * self.tolerance_factor
    }

    /// Largest absolute row sum `max_i Σ_j |b_ij|` in real units.
    pub fn max_row_l1(&self) -> f64 {
        (0..self.gamma)
            .map(|i| {
                (0..self.gamma)
                    .map(|j| self.cfg.to_f64(self.coeff(i, j)).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Raw coefficient `b_ij`.
    #[inline]
    pub fn coeff(&self, i: usize, j: usize) -> i64 {
        self.coeffs[i * self.gamma + j]
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    /// Support of row `i`: `i, i+1, …, i+β−1` modulo `γ`.
    pub fn row_support(&self, i: usize) -> Vec<usize> {
        (0..self.beta).map(|t| (i + t) % self.gamma).collect()
    }

    /// Solves `a · B_A = 1` in least squares over the survivor rows and
    /// quantizes `a`. Survivors are reported in ascending order.
    pub fn decode_vector(&self, survivors: &[usize]) -> Result<DecodeVector, CodingError> {
        let mut sorted = survivors.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.needed()
            || survivors.len() != sorted.len()
            || sorted.last().is_some_and(|&s| s >= self.gamma)
        {
            return Err(CodingError::Survivors {
                expected: self.needed(),
                gamma: self.gamma,
                got: survivors.to_vec(),
            });
        }
        let n = sorted.len();
        let g = self.gamma;
        // columns of M are the survivor rows of B: M a = 1
        let m = DMatrix::from_fn(g, n, |j, s| self.cfg.to_f64(self.coeff(sorted[s], j)));
        let svd = m.svd(true, true);
        let max_sv = svd.singular_values.max();
        let min_sv = svd.singular_values.min();
        if !(min_sv > max_sv * 1e-10) {
            return Err(CodingError::Singular(sorted));
        }
        let ones = DVector::from_element(g, 1.0);
        let a = svd
            .solve(&ones, max_sv * 1e-12)
            .map_err(|_| CodingError::Singular(sorted.clone()))?;
        let weights = a
            .iter()
            .map(|&w| self.cfg.quantize_raw(w))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CodingError::Singular(sorted.clone()))?;
        Ok(DecodeVector {
            survivors: sorted,
            weights,
            cfg: self.cfg,
        })
    }

    /// `‖a·B_A − 1‖_∞`, evaluated exactly on the raw integers.
    pub fn residual(&self, dv: &DecodeVector) -> f64 {
        let f = self.cfg.f();
        let one = 1i128 << (2 * f);
        (0..self.gamma)
            .map(|j| {
                let acc: i128 = dv
                    .survivors
                    .iter()
                    .zip(&dv.weights)
                    .map(|(&i, &w)| w as i128 * self.coeff(i, j) as i128)
                    .sum();
                ((acc - one) as f64 * (-2.0 * f as f64).exp2()).abs()
            })
            .fold(0.0, f64::max)
    }

    fn decodes(&self, survivors: &[usize]) -> bool {
        self.decode_vector(survivors)
            .is_ok_and(|dv| self.residual(&dv) <= self.tolerance())
    }

    fn verify<R: Rng>(&self, rng: &mut R) -> bool {
        let needed = self.needed();
        if binomial(self.gamma as u64, needed as u64) <= EXHAUSTIVE_LIMIT {
            all_subsets(self.gamma, needed)
                .iter()
                .all(|s| self.decodes(s))
        } else {
            (0..SAMPLED_PATTERNS).all(|_| {
                let s = rand::seq::index::sample(rng, self.gamma, needed).into_vec();
                self.decodes(&s)
            })
        }
    }
}

/// One real-valued draw of the cyclic construction, or `None` if a local
/// system was singular or produced outsized coefficients.
fn draw_real<R: Rng>(beta: usize, gamma: usize, rng: &mut R) -> Option<Vec<f64>> {
    let s = beta - 1;
    let mut h = DMatrix::<f64>::zeros(s, gamma);
    for r in 0..s {
        let mut sum = 0.0;
        for c in 0..gamma - 1 {
            let v: f64 = rng.random_range(-1.0..1.0);
            h[(r, c)] = v;
            sum += v;
        }
        h[(r, gamma - 1)] = -sum;
    }
    let mut out = vec![0.0; gamma * gamma];
    for i in 0..gamma {
        out[i * gamma + i] = 1.0;
        let rest: Vec<usize> = (1..beta).map(|t| (i + t) % gamma).collect();
        let sub = DMatrix::from_fn(s, s, |r, c| h[(r, rest[c])]);
        let rhs = DVector::from_fn(s, |r, _| -h[(r, i)]);
        let x = sub.lu().solve(&rhs)?;
        for (c, &col) in rest.iter().enumerate() {
            if !x[c].is_finite() || x[c].abs() > MAX_COEFF {
                return None;
            }
            out[i * gamma + col] = x[c];
        }
    }
    Some(out)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for t in i..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assignment_examples() {
        assert_eq!(
            AssignmentMatrix::new(2, 3).unwrap().rows_one_based(),
            vec![vec![1, 2, 3], vec![2, 3, 1]]
        );
        assert_eq!(
            AssignmentMatrix::new(3, 4).unwrap().rows_one_based(),
            vec![vec![1, 2, 3, 4], vec![2, 3, 4, 1], vec![3, 4, 1, 2]]
        );
        assert_eq!(
            AssignmentMatrix::new(1, 5).unwrap().rows_one_based(),
            vec![vec![1, 2, 3, 4, 5]]
        );
        assert!(AssignmentMatrix::new(4, 3).is_err());
        assert!(AssignmentMatrix::new(0, 3).is_err());
    }

    #[test]
    fn recipients_are_inverse_of_columns() {
        let om = AssignmentMatrix::new(3, 7).unwrap();
        for j in 0..7 {
            for r in om.recipients(j) {
                assert!(om.column(r).contains(&j));
                assert_ne!(r, j);
            }
        }
    }

    #[test]
    fn beta_one_is_identity() {
        let cfg = FxConfig::PAPER;
        let b = EncodingMatrix::build(1, 4, 9, cfg).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b.coeff(i, j), if i == j { 1 << 24 } else { 0 });
            }
        }
        let dv = b.decode_vector(&[0, 1, 2, 3]).unwrap();
        assert!(dv.weights().iter().all(|&w| w == 1 << 24));
        assert_eq!(b.residual(&dv), 0.0);
    }

    #[test]
    fn replication_single_survivor() {
        let b = EncodingMatrix::build(5, 5, 1, FxConfig::PAPER).unwrap();
        for i in 0..5 {
            let dv = b.decode_vector(&[i]).unwrap();
            assert_eq!(dv.weights(), &[1 << 24]);
            assert_eq!(b.residual(&dv), 0.0);
        }
    }

    #[test]
    fn beta2_gamma3_all_pairs() {
        let b = EncodingMatrix::build(2, 3, 42, FxConfig::PAPER).unwrap();
        for s in all_subsets(3, 2) {
            let dv = b.decode_vector(&s).unwrap();
            assert!(b.residual(&dv) <= b.tolerance());
        }
        // survivors {1,3} in one-based terms
        let dv = b.decode_vector(&[2, 0]).unwrap();
        assert_eq!(dv.survivors(), &[0, 2]);
    }

    #[test]
    fn support_is_cyclic() {
        let b = EncodingMatrix::build(3, 6, 5, FxConfig::PAPER).unwrap();
        for i in 0..6 {
            let supp = b.row_support(i);
            for j in 0..6 {
                assert_eq!(b.coeff(i, j) != 0, supp.contains(&j), "row {i} col {j}");
            }
        }
        for j in 0..6 {
            assert_eq!((0..6).filter(|&i| b.coeff(i, j) != 0).count(), 3);
        }
    }

    #[test]
    fn bad_survivor_sets_rejected() {
        let b = EncodingMatrix::build(2, 4, 5, FxConfig::PAPER).unwrap();
        assert!(b.decode_vector(&[0, 1]).is_err());
        assert!(b.decode_vector(&[0, 1, 1]).is_err());
        assert!(b.decode_vector(&[0, 1, 4]).is_err());
    }

    #[test]
    fn build_rejects_bad_params() {
        assert!(EncodingMatrix::build(0, 3, 0, FxConfig::PAPER).is_err());
        assert!(EncodingMatrix::build(4, 3, 0, FxConfig::PAPER).is_err());
    }

    #[test]
    fn deterministic() {
        let a = EncodingMatrix::build(3, 7, 77, FxConfig::PAPER).unwrap();
        let b = EncodingMatrix::build(3, 7, 77, FxConfig::PAPER).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.decode_vector(&[0, 2, 4, 6, 1]),
            b.decode_vector(&[1, 0, 2, 4, 6])
        );
    }

    #[test]
    fn large_codes_build_with_relaxed_tolerance() {
        let opts = BuildOptions {
            tolerance_factor: 64.0,
            ..BuildOptions::default()
        };
        for beta in [6, 16, 23] {
            let b = EncodingMatrix::build_with(beta, 25, 3, FxConfig::PAPER, opts).unwrap();
            let survivors: Vec<usize> = (0..b.needed()).map(|i| (7 * i) % 25).collect();
            let dv = b.decode_vector(&survivors).unwrap();
            assert!(b.residual(&dv) <= b.tolerance());
            assert!(b.max_row_l1() <= beta as f64 * MAX_COEFF);
        }
    }

    #[test]
    fn subsets_enumeration() {
        assert_eq!(all_subsets(4, 2).len(), 6);
        assert_eq!(all_subsets(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(all_subsets(5, 1).len(), 5);
        assert_eq!(binomial(25, 12), 5_200_300);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_codes_decode_every_pattern(gamma in 2usize..=7, seed in any::<u64>()) {
            for beta in 1..=gamma {
                let b = EncodingMatrix::build(beta, gamma, seed, FxConfig::PAPER).unwrap();
                for s in all_subsets(gamma, b.needed()) {
                    let dv = b.decode_vector(&s).unwrap();
                    prop_assert!(b.residual(&dv) <= b.tolerance());
                }
            }
        }
    }
}
