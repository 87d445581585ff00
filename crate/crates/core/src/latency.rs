//! Stochastic computation and communication latency.
//!
//! Computation is a shifted exponential `ρ/τ + Exp(η)`. Every transmission
//! of `b` payload bits costs `N·b(1+h)/γ` seconds, where the number of
//! attempts `N` is geometric on `{1, 2, …}` with success probability `1−p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("invalid device profile {index}: {reason}")]
    Profile { index: usize, reason: String },
    #[error("invalid link parameters: {0}")]
    Link(String),
    #[error("server MAC rate must be positive, got {0}")]
    Server(f64),
}

/// Link parameters shared by all devices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    /// Uplink rate `γ^u` in bit/s.
    pub up_rate: f64,
    /// Downlink rate `γ^d` in bit/s.
    pub down_rate: f64,
    /// Per-transmission failure probability.
    pub p: f64,
    /// Header overhead as a fraction of the payload.
    pub header: f64,
}

impl LinkParams {
    /// LTE Cat 1: 5 Mbit/s up, 10 Mbit/s down, 10% failures, 10% header.
    pub const LTE_CAT1: LinkParams = LinkParams {
        up_rate: 5e6,
        down_rate: 10e6,
        p: 0.1,
        header: 0.1,
    };

    pub fn validate(&self) -> Result<(), LatencyError> {
        let ok = self.up_rate > 0.0
            && self.down_rate > 0.0
            && (0.0..1.0).contains(&self.p)
            && self.header >= 0.0
            && self.up_rate.is_finite()
            && self.down_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(LatencyError::Link(format!("{self:?}")))
        }
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::LTE_CAT1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// MAC operations per second.
    pub tau: f64,
    /// Rate of the exponential setup time (mean `1/η` seconds).
    pub eta: f64,
    pub link: LinkParams,
}

impl DeviceProfile {
    /// Profile whose mean setup time is half the deterministic time of
    /// `epoch_macs` operations, i.e. `η = 2τ/ρ`.
    pub fn with_half_setup(tau: f64, epoch_macs: f64, link: LinkParams) -> Self {
        Self {
            tau,
            eta: 2.0 * tau / epoch_macs.max(1.0),
            link,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), LatencyError> {
        let bad = |reason: &str| LatencyError::Profile {
            index,
            reason: reason.into(),
        };
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(bad("tau must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(bad("eta must be positive"));
        }
        self.link.validate().map_err(|e| bad(&e.to_string()))
    }
}

/// Seconds for `rho` MACs at rate `tau` plus an `Exp(eta)` setup time.
/// An infinite `eta` removes the setup time.
pub fn sample_compute<R: Rng + ?Sized>(rho: f64, dp: &DeviceProfile, rng: &mut R) -> f64 {
    assert!(rho >= 0.0, "MAC count must be nonnegative");
    let setup = if dp.eta.is_infinite() {
        0.0
    } else {
        Exp::new(dp.eta).expect("positive rate").sample(rng)
    };
    rho / dp.tau + setup
}

/// Number of attempts until the first success.
pub fn sample_attempts<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p == 0.0 {
        return 1;
    }
    1 + Geometric::new(1.0 - p)
        .expect("valid probability")
        .sample(rng)
}

/// Seconds to deliver `bits` payload bits over one leg.
pub fn sample_link<R: Rng + ?Sized>(bits: f64, rate: f64, p: f64, header: f64, rng: &mut R) -> f64 {
    assert!(bits >= 0.0, "bit count must be nonnegative");
    if bits == 0.0 {
        return 0.0;
    }
    sample_attempts(p, rng) as f64 * bits * (1.0 + header) / rate
}

/// Mean of [`sample_link`].
pub fn expected_link(bits: f64, rate: f64, p: f64, header: f64) -> f64 {
    bits * (1.0 + header) / (rate * (1.0 - p))
}

/// Workloads with closed-form MAC counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workload {
    /// `X̄ᵀX̄·ε̄` per epoch: `d²c`.
    EpochGradient { d: u64, c: u64 },
    /// Combining `α` shares of `(Φ, Ψ)`: `(α−1)·d((d+1)/2 + c)`.
    Encoding { alpha: u64, d: u64, c: u64 },
    /// Summing `n` secret shares of `(Φ, Ψ)`: `(n−1)·d((d+1)/2 + c)`.
    SssSharing { shares: u64, d: u64, c: u64 },
    /// Server: pad removal `d²c` per received device plus a linear
    /// combination of `used` results, `used·d·c`.
    PaddedDecode {
        received: u64,
        used: u64,
        d: u64,
        c: u64,
    },
    /// Server: Lagrange interpolation of `threshold` shares, `k'·d·c`,
    /// plus one scaling per entry.
    SecAggDecode { threshold: u64, d: u64, c: u64 },
    /// Minibatch gradient `Xᵀ(XΘ − Y)` on `batch` rows: `2·b·d·c`.
    MinibatchGradient { batch: u64, d: u64, c: u64 },
    /// Server sum of `n` `d×c` gradients.
    Aggregate { n: u64, d: u64, c: u64 },
}

/// Entries of one `(Φ, Ψ)` share: the symmetric Gram's upper triangle plus
/// the `d×c` first gradient, `d(d+1)/2 + dc`.
pub fn payload_entries(d: u64, c: u64) -> u64 {
    d * (d + 1) / 2 + d * c
}

pub fn mac_count(w: Workload) -> u64 {
    match w {
        Workload::EpochGradient { d, c } => d * d * c,
        Workload::Encoding { alpha, d, c } => alpha.saturating_sub(1) * payload_entries(d, c),
        Workload::SssSharing { shares, d, c } => shares.saturating_sub(1) * payload_entries(d, c),
        Workload::PaddedDecode {
            received,
            used,
            d,
            c,
        } => received * d * d * c + used * d * c,
        Workload::SecAggDecode { threshold, d, c } => threshold * d * c + d * c,
        Workload::MinibatchGradient { batch, d, c } => 2 * batch * d * c,
        Workload::Aggregate { n, d, c } => n * d * c,
    }
}

/// The desk-scale rate mix: 40% of devices at 25·10^6 MAC/s and 20% each
/// at 5, 2.5 and 1.25·10^6 MAC/s, assigned by device index.
pub fn tiered_rates(devices: usize) -> Vec<f64> {
    (0..devices)
        .map(|i| match i * 25 / devices.max(1) {
            0..=9 => 25e6,
            10..=14 => 5e6,
            15..=19 => 2.5e6,
            _ => 1.25e6,
        })
        .collect()
}

/// Rates drawn uniformly from the four tiers.
pub fn random_tier_rates<R: Rng + ?Sized>(devices: usize, rng: &mut R) -> Vec<f64> {
    const TIERS: [f64; 4] = [25e6, 5e6, 2.5e6, 1.25e6];
    (0..devices)
        .map(|_| TIERS[rng.random_range(0..4)])
        .collect()
}

pub const DEFAULT_SERVER_RATE: f64 = 8.24e12;

/// Seeded latency source with one independent stream per device.
#[derive(Clone, Debug)]
pub struct LatencySampler {
    profiles: Vec<DeviceProfile>,
    server_rate: f64,
    streams: Vec<ChaCha8Rng>,
}

impl LatencySampler {
    pub fn new(
        profiles: Vec<DeviceProfile>,
        server_rate: f64,
        seed: u64,
    ) -> Result<Self, LatencyError> {
        for (i, p) in profiles.iter().enumerate() {
            p.validate(i)?;
        }
        if !(server_rate > 0.0) {
            return Err(LatencyError::Server(server_rate));
        }
        let streams = (0..profiles.len())
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        Ok(Self {
            profiles,
            server_rate,
            streams,
        })
    }

    pub fn devices(&self) -> usize {
        self.profiles.len()
    }

    pub fn profile(&self, i: usize) -> &DeviceProfile {
        &self.profiles[i]
    }

    pub fn compute(&mut self, device: usize, macs: u64) -> f64 {
        sample_compute(
            macs as f64,
            &self.profiles[device],
            &mut self.streams[device],
        )
    }

    pub fn upload(&mut self, device: usize, bits: u64) -> f64 {
        let l = self.profiles[device].link;
        sample_link(
            bits as f64,
            l.up_rate,
            l.p,
            l.header,
            &mut self.streams[device],
        )
    }

    pub fn download(&mut self, device: usize, bits: u64) -> f64 {
        let l = self.profiles[device].link;
        sample_link(
            bits as f64,
            l.down_rate,
            l.p,
            l.header,
            &mut self.streams[device],
        )
    }

    /// Deterministic server computation time.
    pub fn server(&self, macs: u64) -> f64 {
        macs as f64 / self.server_rate
    }
}
