//! CodedSecAgg: Shamir-shared data with server-side reconstruction of the
//! aggregate only.
//!
//! Within each group every device shares `Ψ_i = 2^f·Ḡ_i^(1)` and
//! `Φ_i = X̄_iᵀX̄_i` as field elements; device `t` keeps the sums
//! `Ψ^(t)`, `Φ^(t)` of the shares it received. Each epoch it evaluates
//! `Ψ^(t) + Φ^(t)·ε̄` in the field, which is a share of `Σ_i P_i` over its
//! group. Groups relay their shares along [`GroupSchedule`] to the master
//! group, whose `k'` fastest devices upload to the server. The server
//! interpolates and applies the postponed floor-scale once.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assign_groups, fastest, sharing_rounds, EpochOutcome, GroupSchedule, Protocol, ProtocolError,
    Scheme,
};
use crate::fxp::{FxConfig, FxMatrix};
use crate::latency::{mac_count, payload_entries, LatencySampler, Workload};
use crate::learning::{FxPartition, ModelState};
use crate::secret::shamir::lagrange_at_zero;
use crate::secret::{
    field_decode, field_encode, sss_reconstruct, sss_share, FieldMatrix, PrimeField, SecretError,
    SssShare,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecAggParams {
    /// Reconstruction threshold `k'`.
    pub threshold: usize,
    /// Number of equally sized groups `N`.
    pub groups: usize,
    /// Largest number of colluding devices `z` to tolerate; `k' > z`.
    pub collusion: usize,
}

impl Default for SecAggParams {
    fn default() -> Self {
        Self {
            threshold: 2,
            groups: 1,
            collusion: 1,
        }
    }
}

impl SecAggParams {
    pub fn validate(&self, devices: usize) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Params(m));
        if self.groups == 0 || !devices.is_multiple_of(self.groups) {
            return bad(format!("N={} must divide D={devices}", self.groups));
        }
        if self.threshold == 0 || devices / self.groups < self.threshold {
            return bad(format!(
                "group size D/N={} must be at least k'={} >= 1",
                devices / self.groups,
                self.threshold
            ));
        }
        if self.threshold <= self.collusion {
            return bad(format!(
                "k'={} must exceed z={}",
                self.threshold, self.collusion
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SecAgg {
    cfg: FxConfig,
    field: PrimeField,
    threshold: usize,
    d: usize,
    c: usize,
    samples: usize,
    groups: Vec<Vec<usize>>,
    schedule: GroupSchedule,
    /// Summed shares `(Ψ^(t), Φ^(t))` per group and local index.
    sums: Vec<Vec<(SssShare, SssShare)>>,
    /// The same shares summed over groups, by local index.
    totals: Vec<(FieldMatrix, FieldMatrix)>,
    setup_seconds: f64,
}

impl SecAgg {
    pub fn setup(
        parts: &[FxPartition],
        theta1: &FxMatrix,
        params: &SecAggParams,
        seed: u64,
        latency: &mut LatencySampler,
    ) -> Result<Self, ProtocolError> {
        let devices = parts.len();
        if devices == 0 || latency.devices() != devices {
            return Err(ProtocolError::Params(format!(
                "{devices} partitions for {} latency profiles",
                latency.devices()
            )));
        }
        params.validate(devices)?;
        let cfg = theta1.cfg();
        let (k, f) = (cfg.k(), cfg.f());
        let field = PrimeField::above_power_of_two(k + f)?;
        let (d, c) = theta1.shape();
        let groups = assign_groups(devices, params.groups)?;
        let n = devices / params.groups;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut sums = Vec::with_capacity(groups.len());
        for members in &groups {
            let mut acc: Option<Vec<(SssShare, SssShare)>> = None;
            for &i in members {
                let p = &parts[i];
                let g1 = p.first_gradient(theta1)?;
                let lifted: Vec<i128> = g1.raw().iter().map(|&v| (v as i128) << f).collect();
                let psi = FieldMatrix::from_signed(d, c, field, &lifted, k + f)?;
                let phi = field_encode(&p.gram, field)?;
                let sp = sss_share(&psi, n, params.threshold, false, &mut rng)?;
                let sx = sss_share(&phi, n, params.threshold, true, &mut rng)?;
                acc = Some(match acc {
                    None => sp.into_iter().zip(sx).collect(),
                    Some(prev) => prev
                        .into_iter()
                        .zip(sp.into_iter().zip(sx))
                        .map(|((mut a, mut b), (p, x))| {
                            a.payload.add_assign(&p.payload)?;
                            b.payload.add_assign(&x.payload)?;
                            Ok((a, b))
                        })
                        .collect::<Result<Vec<_>, ProtocolError>>()?,
                });
            }
            sums.push(acc.expect("groups are nonempty"));
        }

        let all: Vec<usize> = (0..devices).collect();
        let bits = payload_entries(d as u64, c as u64) * field.element_bits() as u64;
        let mut setup_seconds = sharing_rounds(latency, &all, n - 1, bits);
        let macs = mac_count(Workload::SssSharing {
            shares: n as u64,
            d: d as u64,
            c: c as u64,
        });
        if macs > 0 {
            setup_seconds += all
                .iter()
                .map(|&i| latency.compute(i, macs))
                .fold(0.0, f64::max);
        }

        let totals = (0..n)
            .map(|t| {
                let mut psi = sums[0][t].0.payload.clone();
                let mut phi = sums[0][t].1.payload.clone();
                for g in &sums[1..] {
                    psi.add_assign(&g[t].0.payload)?;
                    phi.add_assign(&g[t].1.payload)?;
                }
                Ok((psi, phi))
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;

        Ok(Self {
            cfg,
            field,
            threshold: params.threshold,
            d,
            c,
            samples: parts.iter().map(|p| p.samples).sum(),
            schedule: GroupSchedule::new(groups.len()),
            groups,
            sums,
            totals,
            setup_seconds,
        })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn group_members(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// `(Ψ^(t), Φ^(t))` held by local device `t` of `group`.
    pub fn summed_shares(&self, group: usize, t: usize) -> (&SssShare, &SssShare) {
        let (a, b) = &self.sums[group][t];
        (a, b)
    }

    /// Share of the group aggregate computed by local device `t`.
    pub fn device_result(
        &self,
        group: usize,
        t: usize,
        eps: &FxMatrix,
    ) -> Result<SssShare, ProtocolError> {
        let (psi, phi) = &self.sums[group][t];
        let mut payload = phi.payload.mul_signed(eps)?;
        payload.add_assign(&psi.payload)?;
        Ok(SssShare {
            index: psi.index,
            payload,
        })
    }

    /// Relays all group results to the master group and returns its shares
    /// of the global aggregate, by local index.
    pub fn master_shares(&self, eps: &FxMatrix) -> Result<Vec<SssShare>, ProtocolError> {
        let n = self.groups[0].len();
        let mut held: Vec<Vec<SssShare>> = (0..self.groups.len())
            .map(|g| (0..n).map(|t| self.device_result(g, t, eps)).collect())
            .collect::<Result<_, _>>()?;
        for step in self.schedule.steps() {
            for &(from, to) in step {
                for t in 0..n {
                    let add = held[from - 1][t].payload.clone();
                    held[to - 1][t].payload.add_assign(&add)?;
                }
            }
        }
        Ok(held.swap_remove(0))
    }

    /// Reconstructs the aggregate from the master shares at the given local
    /// indices (the first `k'` are used) and floor-scales it.
    ///
    /// Interpolation is linear, so the simulation interpolates the summed
    /// `(Ψ, Φ)` shares first and multiplies by `ε̄` once. The field result is
    /// identical to relaying and interpolating the device results
    /// ([`decode_relayed`](Self::decode_relayed)).
    pub fn decode(&self, eps: &FxMatrix, order: &[usize]) -> Result<FxMatrix, ProtocolError> {
        let used = self.pick(order)?;
        let points: Vec<u32> = used.iter().map(|&t| self.sums[0][t].0.index).collect();
        let lambda = lagrange_at_zero(self.field, &points)?;
        let (d, c) = (self.d, self.c);
        let mut psi = FieldMatrix::zeros(d, c, self.field);
        let mut phi = FieldMatrix::zeros(d, d, self.field);
        for (&t, &l) in used.iter().zip(&lambda) {
            psi.add_assign(&self.totals[t].0.scale(l))?;
            phi.add_assign(&self.totals[t].1.scale(l))?;
        }
        let mut secret = phi.mul_signed(eps)?;
        secret.add_assign(&psi)?;
        Ok(field_decode(&secret, self.cfg))
    }

    /// Reference decoder: every device evaluates its share, shares are
    /// relayed to the master group and the server interpolates.
    pub fn decode_relayed(
        &self,
        eps: &FxMatrix,
        order: &[usize],
    ) -> Result<FxMatrix, ProtocolError> {
        let used = self.pick(order)?;
        let shares = self.master_shares(eps)?;
        let picked: Vec<SssShare> = used.iter().map(|&t| shares[t].clone()).collect();
        let secret = sss_reconstruct(&picked, self.threshold)?;
        Ok(field_decode(&secret, self.cfg))
    }

    fn pick(&self, order: &[usize]) -> Result<Vec<usize>, ProtocolError> {
        let n = self.groups[0].len();
        if order.len() < self.threshold {
            return Err(SecretError::TooFewShares {
                needed: self.threshold,
                got: order.len(),
            }
            .into());
        }
        let used = order[..self.threshold].to_vec();
        if let Some(&bad) = used.iter().find(|&&t| t >= n) {
            return Err(ProtocolError::Params(format!(
                "share index {bad} outside group of {n}"
            )));
        }
        for (i, t) in used.iter().enumerate() {
            if used[..i].contains(t) {
                return Err(SecretError::DuplicateIndex(*t as u32 + 1).into());
            }
        }
        Ok(used)
    }
}

impl Protocol for SecAgg {
    fn scheme(&self) -> Scheme {
        Scheme::SecAgg
    }

    fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }

    fn epoch(
        &mut self,
        model: &ModelState,
        latency: &mut LatencySampler,
    ) -> Result<EpochOutcome, ProtocolError> {
        let (d, c) = (self.d as u64, self.c as u64);
        let entry_bits = self.field.element_bits() as u64;
        let share_bits = d * c * entry_bits;
        let down = d * c * self.cfg.k() as u64;
        let macs = mac_count(Workload::EpochGradient { d, c });
        let add = mac_count(Workload::Aggregate { n: 1, d, c });
        let n = self.groups[0].len();
        // time at which each (group, index) holds its current partial share
        let mut ready: Vec<Vec<f64>> = self
            .groups
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&i| latency.download(i, down) + latency.compute(i, macs))
                    .collect()
            })
            .collect();
        for step in self.schedule.steps() {
            for &(from, to) in step {
                for t in 0..n {
                    let (s, r) = (self.groups[from - 1][t], self.groups[to - 1][t]);
                    let arrive = ready[from - 1][t]
                        + latency.upload(s, share_bits)
                        + latency.download(r, share_bits);
                    ready[to - 1][t] = ready[to - 1][t].max(arrive) + latency.compute(r, add);
                }
            }
        }
        let master = &self.groups[0];
        let delivered: Vec<f64> = (0..n)
            .map(|t| ready[0][t] + latency.upload(master[t], share_bits))
            .collect();
        let order = fastest(&delivered, self.threshold);
        let wait = order.iter().map(|&t| delivered[t]).fold(0.0, f64::max);
        let decode = latency.server(mac_count(Workload::SecAggDecode {
            threshold: self.threshold as u64,
            d,
            c,
        }));
        let gradient = self.decode(model.eps(), &order)?;
        let mut contributors: Vec<usize> = order
            .iter()
            .flat_map(|&t| self.groups.iter().map(move |g| g[t]))
            .collect();
        contributors.sort_unstable();
        Ok(EpochOutcome {
            gradient: gradient.to_f64(),
            samples: self.samples,
            contributors,
            seconds: wait + decode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::all_subsets;
    use crate::latency::{DeviceProfile, LinkParams, DEFAULT_SERVER_RATE};
    use crate::learning::{fx_federated_gradient, partition_noniid, Dataset, LrSchedule};
    use crate::secret::reveals_secret;
    use rand::Rng;

    fn toy(m: usize, d: usize, c: usize, devices: usize, seed: u64) -> Vec<FxPartition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..m * d).map(|_| rng.random_range(-0.3..0.3)).collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        let ds = Dataset::new(x, d, labels, c).unwrap();
        partition_noniid(&ds, devices)
            .unwrap()
            .iter()
            .map(|p| FxPartition::new(p, FxConfig::PAPER).unwrap())
            .collect()
    }

    fn sampler(devices: usize, deterministic: bool) -> LatencySampler {
        let link = LinkParams {
            p: if deterministic { 0.0 } else { 0.1 },
            ..LinkParams::LTE_CAT1
        };
        let profiles = (0..devices)
            .map(|i| DeviceProfile {
                tau: 1e6 * (i + 1) as f64,
                eta: if deterministic { f64::INFINITY } else { 5.0 },
                link,
            })
            .collect();
        LatencySampler::new(profiles, DEFAULT_SERVER_RATE, 11).unwrap()
    }

    fn eps_for(d: usize, c: usize, seed: u64) -> FxMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..d * c).map(|_| rng.random_range(-2.0..2.0)).collect();
        FxMatrix::quantize(d, c, &v, FxConfig::PAPER).unwrap()
    }

    fn oracle(parts: &[FxPartition], eps: &FxMatrix) -> FxMatrix {
        let theta1 = FxMatrix::zeros(eps.rows(), eps.cols(), eps.cfg());
        let g1: Vec<FxMatrix> = parts
            .iter()
            .map(|p| p.first_gradient(&theta1).unwrap())
            .collect();
        fx_federated_gradient(parts, &g1, eps)
    }

    fn params(threshold: usize, groups: usize) -> SecAggParams {
        SecAggParams {
            threshold,
            groups,
            collusion: threshold - 1,
        }
    }

    #[test]
    fn validation() {
        let parts = toy(24, 2, 2, 6, 1);
        let theta1 = FxMatrix::zeros(2, 2, FxConfig::PAPER);
        let mut lat = sampler(6, false);
        assert!(SecAgg::setup(&parts, &theta1, &params(2, 4), 1, &mut lat).is_err());
        assert!(SecAgg::setup(&parts, &theta1, &params(3, 3), 1, &mut lat).is_err());
        let z_too_big = SecAggParams {
            threshold: 2,
            groups: 1,
            collusion: 2,
        };
        assert!(SecAgg::setup(&parts, &theta1, &z_too_big, 1, &mut lat).is_err());
        assert!(SecAgg::setup(&parts, &theta1, &params(2, 3), 1, &mut lat).is_ok());
    }

    #[test]
    fn summed_shares_reconstruct_lifted_first_gradient() {
        let parts = toy(40, 3, 2, 4, 2);
        let theta1 = FxMatrix::zeros(3, 2, FxConfig::PAPER);
        let st = SecAgg::setup(&parts, &theta1, &params(2, 1), 4, &mut sampler(4, false)).unwrap();
        let mut expect = vec![0i128; 6];
        for p in &parts {
            let g1 = p.first_gradient(&theta1).unwrap();
            for (e, &v) in expect.iter_mut().zip(g1.raw()) {
                *e += (v as i128) << 24;
            }
        }
        for pair in all_subsets(4, 2) {
            let shares: Vec<SssShare> = pair
                .iter()
                .map(|&t| st.summed_shares(0, t).0.clone())
                .collect();
            assert_eq!(sss_reconstruct(&shares, 2).unwrap().to_signed(), expect);
        }
        for t in 0..4 {
            assert!(st.summed_shares(0, t).1.payload.is_symmetric());
        }
    }

    #[test]
    fn degenerate_threshold_one_per_device_groups() {
        let parts = toy(12, 2, 2, 3, 3);
        let theta1 = FxMatrix::zeros(2, 2, FxConfig::PAPER);
        let p = SecAggParams {
            threshold: 1,
            groups: 3,
            collusion: 0,
        };
        let st = SecAgg::setup(&parts, &theta1, &p, 1, &mut sampler(3, false)).unwrap();
        let eps = eps_for(2, 2, 1);
        assert_eq!(st.decode(&eps, &[0]).unwrap(), oracle(&parts, &eps));
    }

    #[test]
    fn bit_exact_for_every_subset_and_grouping() {
        let parts = toy(96, 4, 3, 8, 4);
        let theta1 = FxMatrix::zeros(4, 3, FxConfig::PAPER);
        let eps = eps_for(4, 3, 9);
        let expect = oracle(&parts, &eps);
        for (k, n) in [(2, 1), (3, 1), (2, 2), (3, 2), (2, 4), (1, 8)] {
            let st =
                SecAgg::setup(&parts, &theta1, &params(k, n), 3, &mut sampler(8, false)).unwrap();
            for order in all_subsets(8 / n, k) {
                assert_eq!(
                    st.decode(&eps, &order).unwrap(),
                    expect,
                    "k'={k} N={n} {order:?}"
                );
                assert_eq!(st.decode_relayed(&eps, &order).unwrap(), expect);
            }
        }
    }

    #[test]
    fn deterministic_latency_without_groups() {
        let parts = toy(40, 3, 2, 4, 5);
        let theta1 = FxMatrix::zeros(3, 2, FxConfig::PAPER);
        let mut lat = sampler(4, true);
        let mut st = SecAgg::setup(&parts, &theta1, &params(2, 1), 1, &mut lat).unwrap();
        let model = ModelState::new(3, 2, FxConfig::PAPER, LrSchedule::default(), 0.0);
        let out = st.epoch(&model, &mut lat).unwrap();
        let bits = st.field().element_bits() as f64;
        // the 2nd fastest device is index 2
        let rt = 6.0 * 48.0 * 1.1 / 10e6 + 18.0 / 3e6 + 6.0 * bits * 1.1 / 5e6;
        let decode = lat.server(mac_count(Workload::SecAggDecode {
            threshold: 2,
            d: 3,
            c: 2,
        }));
        assert!((out.seconds - rt - decode).abs() < 1e-12);
        assert_eq!(out.contributors, vec![2, 3]);
    }

    #[test]
    fn grouped_latency_adds_relay_steps() {
        // identical devices: k'-th smallest master round trip plus one relay per step
        let parts = toy(64, 2, 2, 8, 6);
        let theta1 = FxMatrix::zeros(2, 2, FxConfig::PAPER);
        let link = LinkParams {
            p: 0.0,
            ..LinkParams::LTE_CAT1
        };
        let profiles = vec![
            DeviceProfile {
                tau: 1e6,
                eta: f64::INFINITY,
                link
            };
            8
        ];
        let mut lat = LatencySampler::new(profiles, DEFAULT_SERVER_RATE, 0).unwrap();
        let mut st = SecAgg::setup(&parts, &theta1, &params(2, 4), 1, &mut lat).unwrap();
        let model = ModelState::new(2, 2, FxConfig::PAPER, LrSchedule::default(), 0.0);
        let out = st.epoch(&model, &mut lat).unwrap();
        let share = 4.0 * st.field().element_bits() as f64 * 1.1;
        let base = 4.0 * 48.0 * 1.1 / 10e6 + 8.0 / 1e6 + share / 5e6;
        let relay = share / 5e6 + share / 10e6 + 4.0 / 1e6;
        let decode = lat.server(mac_count(Workload::SecAggDecode {
            threshold: 2,
            d: 2,
            c: 2,
        }));
        assert!((out.seconds - (base + 2.0 * relay + decode)).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_threshold_observed_shares_reveal_nothing() {
        let parts = toy(36, 2, 2, 6, 7);
        let theta1 = FxMatrix::zeros(2, 2, FxConfig::PAPER);
        let st = SecAgg::setup(&parts, &theta1, &params(3, 2), 1, &mut sampler(6, false)).unwrap();
        let field = st.field();
        // the server sees relayed shares of one sharing at a subset of indices
        for z in 0..st.threshold() {
            for pts in all_subsets(3, z) {
                let idx: Vec<u32> = pts
                    .iter()
                    .map(|&t| st.summed_shares(1, t).0.index)
                    .collect();
                assert!(!reveals_secret(field, &idx, st.threshold()));
            }
        }
        let idx: Vec<u32> = (0..3).map(|t| st.summed_shares(0, t).0.index).collect();
        assert!(reveals_secret(field, &idx, st.threshold()));
    }
}
