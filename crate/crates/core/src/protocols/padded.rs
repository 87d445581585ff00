//! CodedPaddedFL: one-time padded data sharing plus gradient coding.
//!
//! Device `i` pads `Ψ_i = 2^f·Ḡ_i^(1) + R^G_i` and `Φ_i = X̄_iᵀX̄_i + R^X_i`,
//! both in `Z<W>`, and shares them with `α − 1` peers of its group. Device
//! `t` of a group stores `C_t = Σ_u b_tu Ψ_u` and `C̄_t = Σ_u b_tu Φ_u` over
//! its code row. Each epoch it returns `G̃_t = C_t + C̄_t·ε̄`. The server
//! knows the pads, strips `Σ_u b_tu (R^G_u + R^X_u ε̄)` from each result,
//! combines `γ − α + 1` of them with the decode weights and rescales once.
//!
//! Code coefficients and decode weights are integers at scale `2^fB`, so
//! pad removal is exact in the ring and the only error left is the code's
//! decoding residual plus one final floor.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assign_groups, fastest, round_trip, sharing_rounds, EpochOutcome, Protocol, ProtocolError,
    Scheme,
};
use crate::coding::{
    AssignmentMatrix, BuildOptions, DecodeVector, EncodingMatrix, DEFAULT_RETRIES,
};
use crate::fxp::{FxConfig, FxMatrix, PadMatrix, RingMatrix};
use crate::latency::{mac_count, payload_entries, LatencySampler, Workload};
use crate::learning::{FxPartition, ModelState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaddedParams {
    /// Replication factor: every device's data is held by `α` devices.
    pub alpha: usize,
    /// Number of device groups `N`; groups need not be equal.
    pub groups: usize,
    /// Fractional bits of code coefficients and decode weights; defaults
    /// to the model's `f`.
    pub code_frac_bits: Option<u32>,
    /// Relaxation of the code verification bound, see
    /// [`BuildOptions::tolerance_factor`].
    pub code_tolerance_factor: f64,
    /// Use all-zero pads (a degenerate configuration for testing).
    pub zero_pads: bool,
}

impl Default for PaddedParams {
    fn default() -> Self {
        Self {
            alpha: 1,
            groups: 1,
            code_frac_bits: None,
            code_tolerance_factor: 1.0,
            zero_pads: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Group {
    members: Vec<usize>,
    code: EncodingMatrix,
    /// `C_t` and `C̄_t`, by local index.
    coded: Vec<RingMatrix>,
    coded_gram: Vec<RingMatrix>,
    /// `Σ_u b_tu R^G_u` and `Σ_u b_tu R^X_u`, by local index.
    pad_g: Vec<RingMatrix>,
    pad_x: Vec<RingMatrix>,
    /// `C_t − Σ b R^G` and `C̄_t − Σ b R^X` as signed integers.
    clean_g: Vec<Vec<i128>>,
    clean_x: Vec<Vec<i128>>,
    decoders: HashMap<Vec<usize>, DecodeVector>,
}

#[derive(Clone, Debug)]
pub struct PaddedFl {
    cfg: FxConfig,
    code_frac_bits: u32,
    ring_bits: u32,
    d: usize,
    c: usize,
    devices: usize,
    samples: usize,
    alpha: usize,
    groups: Vec<Group>,
    psi: Vec<RingMatrix>,
    phi: Vec<RingMatrix>,
    setup_seconds: f64,
}

fn ceil_log2(x: f64) -> u32 {
    if x <= 1.0 {
        0
    } else {
        x.log2().ceil() as u32
    }
}

fn ring_pad<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    bits: u32,
    symmetric: bool,
    zero: bool,
    rng: &mut R,
) -> Result<RingMatrix, ProtocolError> {
    let pad = if zero {
        PadMatrix::zeros(rows, cols, bits, symmetric)
    } else {
        PadMatrix::random(rows, cols, bits, symmetric, rng)?
    };
    Ok(RingMatrix::from_wide(rows, cols, bits, pad.raw().to_vec())?)
}

impl PaddedFl {
    /// Runs the sharing phase: builds one code per group, pads and shares
    /// the data, encodes, and samples the phase duration.
    pub fn setup(
        parts: &[FxPartition],
        theta1: &FxMatrix,
        params: &PaddedParams,
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
        let layout = assign_groups(devices, params.groups)?;
        let smallest = layout.iter().map(Vec::len).min().unwrap_or(0);
        if params.alpha == 0 || params.alpha > smallest {
            return Err(ProtocolError::Params(format!(
                "alpha={} must lie in 1..={smallest} (smallest group)",
                params.alpha
            )));
        }
        let cfg = theta1.cfg();
        let (k, f) = (cfg.k(), cfg.f());
        let fb = params.code_frac_bits.unwrap_or(f);
        let code_cfg = FxConfig::new((fb + 32).min(63), fb)
            .map_err(|e| ProtocolError::Params(format!("code fractional bits {fb}: {e}")))?;
        if k + f + 2 * fb > 127 {
            return Err(ProtocolError::Params(format!(
                "k + f + 2·fB = {} exceeds the 127-bit decode accumulator",
                k + f + 2 * fb
            )));
        }
        let (d, c) = theta1.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = BuildOptions {
            retries: DEFAULT_RETRIES,
            tolerance_factor: params.code_tolerance_factor,
        };
        let codes = layout
            .iter()
            .map(|m| {
                EncodingMatrix::build_with(params.alpha, m.len(), rng.random(), code_cfg, opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let l1 = codes
            .iter()
            .map(EncodingMatrix::max_row_l1)
            .fold(1.0, f64::max);
        let ring_bits = k + f + fb + ceil_log2(l1) + 1;
        if ring_bits > 128 {
            return Err(ProtocolError::Params(format!(
                "ring width {ring_bits} exceeds 128 bits"
            )));
        }

        let mut psi = Vec::with_capacity(devices);
        let mut phi = Vec::with_capacity(devices);
        let mut rg = Vec::with_capacity(devices);
        let mut rx = Vec::with_capacity(devices);
        for p in parts {
            if p.gram.shape() != (d, d) || p.xty.shape() != (d, c) {
                return Err(ProtocolError::Params(format!(
                    "device {} has mismatched shapes",
                    p.id
                )));
            }
            let g1 = p.first_gradient(theta1)?;
            let pad_g = ring_pad(d, c, ring_bits, false, params.zero_pads, &mut rng)?;
            let pad_x = ring_pad(d, d, ring_bits, true, params.zero_pads, &mut rng)?;
            let mut s = RingMatrix::from_fx(&g1, f, ring_bits)?;
            s.add_assign(&pad_g)?;
            let mut x = RingMatrix::from_fx(&p.gram, 0, ring_bits)?;
            x.add_assign(&pad_x)?;
            psi.push(s);
            phi.push(x);
            rg.push(pad_g);
            rx.push(pad_x);
        }

        let mut groups = Vec::with_capacity(layout.len());
        for (members, code) in layout.into_iter().zip(codes) {
            let n = members.len();
            let mut coded = Vec::with_capacity(n);
            let mut coded_gram = Vec::with_capacity(n);
            let mut pad_g = Vec::with_capacity(n);
            let mut pad_x = Vec::with_capacity(n);
            let mut clean_g = Vec::with_capacity(n);
            let mut clean_x = Vec::with_capacity(n);
            for t in 0..n {
                let mut cg = RingMatrix::zeros(d, c, ring_bits)?;
                let mut cx = RingMatrix::zeros(d, d, ring_bits)?;
                let mut pg = RingMatrix::zeros(d, c, ring_bits)?;
                let mut px = RingMatrix::zeros(d, d, ring_bits)?;
                for u in code.row_support(t) {
                    let b = code.coeff(t, u) as i128;
                    let dev = members[u];
                    cg.add_scaled(b, &psi[dev])?;
                    cx.add_scaled(b, &phi[dev])?;
                    pg.add_scaled(b, &rg[dev])?;
                    px.add_scaled(b, &rx[dev])?;
                }
                let mut kg = cg.clone();
                kg.sub_assign(&pg)?;
                let mut kx = cx.clone();
                kx.sub_assign(&px)?;
                clean_g.push(kg.into_raw());
                clean_x.push(kx.into_raw());
                coded.push(cg);
                coded_gram.push(cx);
                pad_g.push(pg);
                pad_x.push(px);
            }
            groups.push(Group {
                members,
                code,
                coded,
                coded_gram,
                pad_g,
                pad_x,
                clean_g,
                clean_x,
                decoders: HashMap::new(),
            });
        }

        let mut setup_seconds = 0.0;
        if params.alpha > 1 {
            let all: Vec<usize> = (0..devices).collect();
            let bits = payload_entries(d as u64, c as u64) * ring_bits as u64;
            setup_seconds += sharing_rounds(latency, &all, params.alpha - 1, bits);
            let macs = mac_count(Workload::Encoding {
                alpha: params.alpha as u64,
                d: d as u64,
                c: c as u64,
            });
            setup_seconds += all
                .iter()
                .map(|&i| latency.compute(i, macs))
                .fold(0.0, f64::max);
        }

        Ok(Self {
            cfg,
            code_frac_bits: fb,
            ring_bits,
            d,
            c,
            devices,
            samples: parts.iter().map(|p| p.samples).sum(),
            alpha: params.alpha,
            groups,
            psi,
            phi,
            setup_seconds,
        })
    }

    /// Width `W` of the ring all padded quantities live in.
    pub fn ring_bits(&self) -> u32 {
        self.ring_bits
    }

    pub fn code_frac_bits(&self) -> u32 {
        self.code_frac_bits
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn group_members(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.members.clone()).collect()
    }

    pub fn code(&self, group: usize) -> &EncodingMatrix {
        &self.groups[group].code
    }

    /// Sharing pattern of a group, in local indices.
    pub fn assignment(&self, group: usize) -> AssignmentMatrix {
        AssignmentMatrix::new(self.alpha, self.groups[group].members.len())
            .expect("alpha validated at setup")
    }

    pub fn psi(&self, device: usize) -> &RingMatrix {
        &self.psi[device]
    }

    pub fn phi(&self, device: usize) -> &RingMatrix {
        &self.phi[device]
    }

    /// `(C_t, C̄_t)` held by local device `t` of `group`.
    pub fn encoded(&self, group: usize, t: usize) -> (&RingMatrix, &RingMatrix) {
        let g = &self.groups[group];
        (&g.coded[t], &g.coded_gram[t])
    }

    /// The server's pre-combined pads `(Σ b R^G, Σ b R^X)` for local device
    /// `t` of `group`.
    pub fn combined_pads(&self, group: usize, t: usize) -> (&RingMatrix, &RingMatrix) {
        let g = &self.groups[group];
        (&g.pad_g[t], &g.pad_x[t])
    }

    /// Device-side result `G̃_t = C_t + C̄_t·ε̄`.
    pub fn device_result(
        &self,
        group: usize,
        t: usize,
        eps: &FxMatrix,
    ) -> Result<RingMatrix, ProtocolError> {
        let g = &self.groups[group];
        let mut out = g.coded_gram[t].mul_fx(eps)?;
        out.add_assign(&g.coded[t])?;
        Ok(out)
    }

    /// Server-side pad removal for one received result.
    pub fn strip_pads(
        &self,
        group: usize,
        t: usize,
        eps: &FxMatrix,
        result: &RingMatrix,
    ) -> Result<RingMatrix, ProtocolError> {
        let g = &self.groups[group];
        let mut pad = g.pad_x[t].mul_fx(eps)?;
        pad.add_assign(&g.pad_g[t])?;
        let mut out = result.clone();
        out.sub_assign(&pad)?;
        Ok(out)
    }

    fn check_decode_args(
        &self,
        eps: &FxMatrix,
        survivors: &[Vec<usize>],
    ) -> Result<(), ProtocolError> {
        if survivors.len() != self.groups.len() {
            return Err(ProtocolError::Params(format!(
                "survivor sets for {} groups, expected {}",
                survivors.len(),
                self.groups.len()
            )));
        }
        if eps.shape() != (self.d, self.c) || eps.cfg() != self.cfg {
            return Err(ProtocolError::Params(
                "update matrix does not match the model".into(),
            ));
        }
        Ok(())
    }

    fn decoder(
        &mut self,
        group: usize,
        survivors: &[usize],
    ) -> Result<DecodeVector, ProtocolError> {
        let mut key = survivors.to_vec();
        key.sort_unstable();
        if let Some(dv) = self.groups[group].decoders.get(&key) {
            return Ok(dv.clone());
        }
        let dv = self.groups[group].code.decode_vector(&key)?;
        self.groups[group].decoders.insert(key, dv.clone());
        Ok(dv)
    }

    fn rescale(&self, acc: Vec<i128>) -> FxMatrix {
        let shift = self.cfg.f() + 2 * self.code_frac_bits;
        let scaled: Vec<i128> = acc.into_iter().map(|v| v >> shift).collect();
        FxMatrix::from_wide_wrapping(self.d, self.c, self.cfg, &scaled)
    }

    /// Decodes the global gradient from the given survivors, listed per
    /// group in local indices.
    ///
    /// Evaluates `Σ_t a_t(C_t − pads) + (Σ_t a_t(C̄_t − pads))·ε̄` with
    /// wrapping `i128` arithmetic, which yields the same integers as
    /// stripping and combining each device result
    /// ([`decode_per_device`](Self::decode_per_device)) at a fraction of the
    /// cost.
    pub fn decode(
        &mut self,
        eps: &FxMatrix,
        survivors: &[Vec<usize>],
    ) -> Result<FxMatrix, ProtocolError> {
        self.check_decode_args(eps, survivors)?;
        let (d, c) = (self.d, self.c);
        let mut acc = vec![0i128; d * c];
        let mut gram = vec![0i128; d * d];
        for (gi, surv) in survivors.iter().enumerate() {
            let dv = self.decoder(gi, surv)?;
            let g = &self.groups[gi];
            for (&t, &w) in dv.survivors().iter().zip(dv.weights()) {
                let w = w as i128;
                for (a, &v) in acc.iter_mut().zip(&g.clean_g[t]) {
                    *a = a.wrapping_add(w.wrapping_mul(v));
                }
                for (a, &v) in gram.iter_mut().zip(&g.clean_x[t]) {
                    *a = a.wrapping_add(w.wrapping_mul(v));
                }
            }
        }
        let e = eps.raw();
        for i in 0..d {
            let row = &mut acc[i * c..(i + 1) * c];
            for (l, &a) in gram[i * d..(i + 1) * d].iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (o, &ev) in row.iter_mut().zip(&e[l * c..(l + 1) * c]) {
                    *o = o.wrapping_add(a.wrapping_mul(ev as i128));
                }
            }
        }
        Ok(self.rescale(acc))
    }

    /// Reference decoder: computes every survivor's padded result, strips
    /// its pads and combines the results one device at a time.
    pub fn decode_per_device(
        &mut self,
        eps: &FxMatrix,
        survivors: &[Vec<usize>],
    ) -> Result<FxMatrix, ProtocolError> {
        self.check_decode_args(eps, survivors)?;
        let mut acc = vec![0i128; self.d * self.c];
        for (gi, surv) in survivors.iter().enumerate() {
            let dv = self.decoder(gi, surv)?;
            for (&t, &w) in dv.survivors().iter().zip(dv.weights()) {
                let received = self.device_result(gi, t, eps)?;
                let clean = self.strip_pads(gi, t, eps, &received)?;
                let w = w as i128;
                for (a, &v) in acc.iter_mut().zip(clean.raw()) {
                    *a = a.wrapping_add(w.wrapping_mul(v));
                }
            }
        }
        Ok(self.rescale(acc))
    }
}

impl Protocol for PaddedFl {
    fn scheme(&self) -> Scheme {
        Scheme::Padded
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
        let down = d * c * self.cfg.k() as u64;
        let up = d * c * self.ring_bits as u64;
        let macs = mac_count(Workload::EpochGradient { d, c });
        let times: Vec<f64> = (0..self.devices)
            .map(|i| round_trip(latency, i, down, macs, up))
            .collect();
        let mut survivors = Vec::with_capacity(self.groups.len());
        let mut contributors = Vec::new();
        let mut wait = 0.0f64;
        for g in &self.groups {
            let local_times: Vec<f64> = g.members.iter().map(|&i| times[i]).collect();
            let fast = fastest(&local_times, g.code.needed());
            wait = wait.max(fast.iter().map(|&t| local_times[t]).fold(0.0, f64::max));
            contributors.extend(fast.iter().map(|&t| g.members[t]));
            survivors.push(fast);
        }
        contributors.sort_unstable();
        let used = contributors.len() as u64;
        let decode = latency.server(mac_count(Workload::PaddedDecode {
            received: used,
            used,
            d,
            c,
        }));
        let gradient = self.decode(model.eps(), &survivors)?;
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
    use crate::latency::{DeviceProfile, LinkParams, DEFAULT_SERVER_RATE};
    use crate::learning::{fx_federated_gradient, partition_noniid, Dataset, LrSchedule};

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
        let link = if deterministic {
            LinkParams {
                p: 0.0,
                ..LinkParams::LTE_CAT1
            }
        } else {
            LinkParams::LTE_CAT1
        };
        let profiles = (0..devices)
            .map(|i| DeviceProfile {
                tau: 1e6 * (i + 1) as f64,
                eta: if deterministic { f64::INFINITY } else { 5.0 },
                link,
            })
            .collect();
        LatencySampler::new(profiles, DEFAULT_SERVER_RATE, 3).unwrap()
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

    #[test]
    fn padded_matrices_and_symmetry() {
        let parts = toy(30, 4, 2, 3, 1);
        let theta1 = FxMatrix::zeros(4, 2, FxConfig::PAPER);
        let params = PaddedParams {
            alpha: 2,
            ..Default::default()
        };
        let st = PaddedFl::setup(&parts, &theta1, &params, 7, &mut sampler(3, false)).unwrap();
        assert!(st.setup_seconds() > 0.0);
        for i in 0..3 {
            assert!(st.phi(i).is_symmetric());
            let (_, cbar) = st.encoded(0, i);
            assert!(cbar.is_symmetric());
        }
        // Example sharing pattern for D=3, α=2
        assert_eq!(
            st.assignment(0).rows_one_based(),
            vec![vec![1, 2, 3], vec![2, 3, 1]]
        );
    }

    #[test]
    fn alpha_one_is_identity_encoding() {
        let parts = toy(30, 4, 2, 3, 2);
        let theta1 = FxMatrix::zeros(4, 2, FxConfig::PAPER);
        let st = PaddedFl::setup(
            &parts,
            &theta1,
            &PaddedParams::default(),
            1,
            &mut sampler(3, false),
        )
        .unwrap();
        assert_eq!(st.setup_seconds(), 0.0);
        let one = 1i128 << st.code_frac_bits();
        for t in 0..3 {
            let (cg, cx) = st.encoded(0, t);
            let mut psi = RingMatrix::zeros(4, 2, st.ring_bits()).unwrap();
            psi.add_scaled(one, st.psi(t)).unwrap();
            let mut phi = RingMatrix::zeros(4, 4, st.ring_bits()).unwrap();
            phi.add_scaled(one, st.phi(t)).unwrap();
            assert_eq!(cg, &psi);
            assert_eq!(cx, &phi);
        }
    }

    #[test]
    fn pad_registry_recovers_coded_grams() {
        let parts = toy(40, 3, 2, 4, 3);
        let theta1 = FxMatrix::zeros(3, 2, FxConfig::PAPER);
        let params = PaddedParams {
            alpha: 3,
            ..Default::default()
        };
        let st = PaddedFl::setup(&parts, &theta1, &params, 5, &mut sampler(4, false)).unwrap();
        let code = st.code(0);
        for t in 0..4 {
            let (_, cbar) = st.encoded(0, t);
            let (_, px) = st.combined_pads(0, t);
            let mut clean = cbar.clone();
            clean.sub_assign(px).unwrap();
            let mut expect = vec![0i128; 9];
            for u in code.row_support(t) {
                for (e, &g) in expect.iter_mut().zip(parts[u].gram.raw()) {
                    *e += code.coeff(t, u) as i128 * g as i128;
                }
            }
            assert_eq!(clean.raw(), expect.as_slice());
        }
    }

    #[test]
    fn psi_is_gradient_plus_pad() {
        let parts = toy(20, 3, 2, 2, 4);
        let theta1 = FxMatrix::zeros(3, 2, FxConfig::PAPER);
        let zero = PaddedParams {
            zero_pads: true,
            ..Default::default()
        };
        let st = PaddedFl::setup(&parts, &theta1, &zero, 5, &mut sampler(2, false)).unwrap();
        let padded = PaddedFl::setup(
            &parts,
            &theta1,
            &PaddedParams::default(),
            5,
            &mut sampler(2, false),
        )
        .unwrap();
        for i in 0..2 {
            let g1 = parts[i].first_gradient(&theta1).unwrap();
            let expect: Vec<i128> = g1.raw().iter().map(|&v| (v as i128) << 24).collect();
            assert_eq!(st.psi(i).raw(), expect.as_slice());
            assert_ne!(padded.psi(i).raw(), expect.as_slice());
            let (pg, _) = padded.combined_pads(0, i);
            // α=1: the combined pad is 2^fB·R^G
            let mut scaled = RingMatrix::zeros(3, 2, padded.ring_bits()).unwrap();
            scaled
                .add_scaled(1i128 << padded.code_frac_bits(), padded.psi(i))
                .unwrap();
            scaled.sub_assign(pg).unwrap();
            let lifted: Vec<i128> = expect.iter().map(|&v| v << 24).collect();
            assert_eq!(scaled.raw(), lifted.as_slice());
        }
    }

    #[test]
    fn beta_one_zero_pads_is_bit_identical_to_uncoded() {
        let parts = toy(50, 4, 3, 5, 5);
        let theta1 = FxMatrix::zeros(4, 3, FxConfig::PAPER);
        for zero_pads in [true, false] {
            let params = PaddedParams {
                zero_pads,
                ..Default::default()
            };
            let mut st =
                PaddedFl::setup(&parts, &theta1, &params, 9, &mut sampler(5, false)).unwrap();
            for s in 0..5 {
                let eps = eps_for(4, 3, s);
                let got = st.decode(&eps, &[vec![0, 1, 2, 3, 4]]).unwrap();
                assert_eq!(got, oracle(&parts, &eps));
            }
        }
    }

    #[test]
    fn every_survivor_pattern_decodes_within_tolerance() {
        let parts = toy(60, 5, 3, 6, 6);
        let theta1 = FxMatrix::zeros(5, 3, FxConfig::PAPER);
        for alpha in 1..=6 {
            for groups in [1, 2] {
                if alpha > 6 / groups {
                    continue;
                }
                let params = PaddedParams {
                    alpha,
                    groups,
                    ..Default::default()
                };
                let mut st = PaddedFl::setup(
                    &parts,
                    &theta1,
                    &params,
                    alpha as u64,
                    &mut sampler(6, false),
                )
                .unwrap();
                let eps = eps_for(5, 3, alpha as u64);
                let expect = oracle(&parts, &eps).to_f64();
                let sets: Vec<Vec<Vec<usize>>> = {
                    let per: Vec<Vec<Vec<usize>>> = st
                        .group_members()
                        .iter()
                        .enumerate()
                        .map(|(g, m)| crate::coding::all_subsets(m.len(), st.code(g).needed()))
                        .collect();
                    if groups == 1 {
                        per[0].iter().map(|s| vec![s.clone()]).collect()
                    } else {
                        per[0]
                            .iter()
                            .flat_map(|a| per[1].iter().map(move |b| vec![a.clone(), b.clone()]))
                            .collect()
                    }
                };
                for surv in sets {
                    let got = st.decode(&eps, &surv).unwrap();
                    assert_eq!(got, st.decode_per_device(&eps, &surv).unwrap());
                    assert!(
                        got.max_abs_diff(&expect) < 1e-4,
                        "alpha={alpha} groups={groups} {surv:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_latency_is_order_statistic() {
        let parts = toy(40, 3, 2, 4, 7);
        let theta1 = FxMatrix::zeros(3, 2, FxConfig::PAPER);
        for alpha in 1..=4 {
            let params = PaddedParams {
                alpha,
                ..Default::default()
            };
            let mut lat = sampler(4, true);
            let mut st = PaddedFl::setup(&parts, &theta1, &params, 1, &mut lat).unwrap();
            let model = ModelState::new(3, 2, FxConfig::PAPER, LrSchedule::default(), 0.0);
            let out = st.epoch(&model, &mut lat).unwrap();
            let w = st.ring_bits() as f64;
            let rt = |i: usize| {
                6.0 * 48.0 * 1.1 / 10e6 + 18.0 / (1e6 * (i + 1) as f64) + 6.0 * w * 1.1 / 5e6
            };
            // device speeds grow with index; the (4−α+1)-th smallest is device α−1 counted from the top
            let kth = rt(alpha - 1);
            let decode = lat.server(mac_count(Workload::PaddedDecode {
                received: (5 - alpha) as u64,
                used: (5 - alpha) as u64,
                d: 3,
                c: 2,
            }));
            assert!((out.seconds - kth - decode).abs() < 1e-12, "alpha={alpha}");
            assert_eq!(out.contributors.len(), 5 - alpha);
        }
    }

    #[test]
    fn rejects_alpha_above_group_size() {
        let parts = toy(20, 2, 2, 4, 8);
        let theta1 = FxMatrix::zeros(2, 2, FxConfig::PAPER);
        let params = PaddedParams {
            alpha: 3,
            groups: 2,
            ..Default::default()
        };
        assert!(PaddedFl::setup(&parts, &theta1, &params, 1, &mut sampler(4, false)).is_err());
    }
}
