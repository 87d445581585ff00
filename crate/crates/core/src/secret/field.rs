//! Prime fields with moduli below `2^80`, elements stored as `u128`.

use rand::Rng;

use super::SecretError;

/// Largest supported modulus bit length.
pub const MAX_MODULUS_BITS: u32 = 80;

const LIMB_BITS: u32 = 40;
const LIMB_MASK: u128 = (1u128 << LIMB_BITS) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u128,
}

impl PrimeField {
    pub fn new(q: u128) -> Result<Self, SecretError> {
        if q >= 1u128 << MAX_MODULUS_BITS {
            return Err(SecretError::ModulusTooLarge(128 - q.leading_zeros()));
        }
        if !is_prime(q) {
            return Err(SecretError::NotPrime(q));
        }
        Ok(Self { q })
    }

    /// Smallest prime strictly above `2^bits`.
    pub fn above_power_of_two(bits: u32) -> Result<Self, SecretError> {
        if bits >= MAX_MODULUS_BITS {
            return Err(SecretError::ModulusTooLarge(bits + 1));
        }
        let mut c = (1u128 << bits) + 1;
        while !is_prime(c) {
            c += 1;
        }
        Ok(Self { q: c })
    }

    #[inline]
    pub fn modulus(&self) -> u128 {
        self.q
    }

    /// Bits needed to transmit one element, `⌈log2 q⌉`.
    pub fn element_bits(&self) -> u32 {
        128 - (self.q - 1).leading_zeros()
    }

    #[inline]
    pub fn add(&self, a: u128, b: u128) -> u128 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u128) -> u128 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// `a·b mod q` for reduced operands, splitting `b` into 40-bit limbs so
    /// no intermediate exceeds 121 bits.
    #[inline]
    pub fn mul(&self, a: u128, b: u128) -> u128 {
        let hi = (a * (b >> LIMB_BITS)) % self.q;
        ((hi << LIMB_BITS) % self.q + a * (b & LIMB_MASK)) % self.q
    }

    /// `a·b mod q` when `b < 2^48`.
    #[inline]
    pub fn mul_small(&self, a: u128, b: u64) -> u128 {
        debug_assert!(b < 1 << 48);
        (a * b as u128) % self.q
    }

    pub fn pow(&self, mut base: u128, mut exp: u128) -> u128 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: u128) -> Result<u128, SecretError> {
        if a.is_multiple_of(self.q) {
            return Err(SecretError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// Maps a signed integer into the field: `v ≥ 0 ↦ v`, `v < 0 ↦ q − |v|`.
    #[inline]
    pub fn encode(&self, v: i128) -> u128 {
        let r = v.rem_euclid(self.q as i128);
        r as u128
    }

    /// Inverse of [`encode`](Self::encode) on `(−q/2, q/2)`: elements at or
    /// above `(q+1)/2` are read as negative.
    #[inline]
    pub fn decode(&self, e: u128) -> i128 {
        if e >= self.q.div_ceil(2) {
            e as i128 - self.q as i128
        } else {
            e as i128
        }
    }

    /// Uniform element by rejection sampling.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        let bits = self.element_bits();
        let mask = if bits >= 128 {
            u128::MAX
        } else {
            (1u128 << bits) - 1
        };
        loop {
            let v = rng.random::<u128>() & mask;
            if v < self.q {
                return v;
            }
        }
    }

    /// `Σ_l a_l · s_l mod q` for reduced `a_l` and signed `s_l`.
    ///
    /// Splits each `a_l` into two 40-bit limbs and accumulates the limb
    /// products exactly in `i128`, reducing only once at the end.
    pub fn dot_signed(&self, a: impl Iterator<Item = u128>, s: impl Iterator<Item = i64>) -> u128 {
        let mut hi: i128 = 0;
        let mut lo: i128 = 0;
        for (x, y) in a.zip(s) {
            let y = y as i128;
            hi += ((x >> LIMB_BITS) as i128) * y;
            lo += ((x & LIMB_MASK) as i128) * y;
        }
        let hi = self.encode(hi);
        self.add(self.mul(hi, 1u128 << LIMB_BITS), self.encode(lo))
    }
}

/// Deterministic Miller–Rabin with the first twelve prime bases, exact for
/// every `n < 2^80`.
pub fn is_prime(n: u128) -> bool {
    assert!(
        n < 1u128 << MAX_MODULUS_BITS,
        "primality test limited to 80 bits"
    );
    if n < 2 {
        return false;
    }
    const BASES: [u128; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let f = PrimeField { q: n };
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for a in BASES {
        let mut x = f.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = f.mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
