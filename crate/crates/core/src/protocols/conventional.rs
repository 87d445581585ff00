//! Conventional federated mini-batch gradient descent. Devices send
//! `X_bᵀ(X_bΘ − Y_b)` on a rotating slice of their data; the server keeps
//! the fastest `D − drop_count` results.

use serde::{Deserialize, Serialize};

use super::{fastest, round_trip, EpochOutcome, Protocol, ProtocolError, Scheme};
use crate::latency::{mac_count, LatencySampler, Workload};
use crate::learning::{matmul, Dataset, DevicePartition, ModelState};

/// Entries are sent as 32-bit floats.
pub const ENTRY_BITS: u64 = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConventionalParams {
    /// Fraction of each device's data used per epoch; the data is cut into
    /// `round(1/fraction)` slices visited in turn.
    pub minibatch_fraction: f64,
    /// Number of slowest devices ignored every epoch.
    pub drop_count: usize,
}

impl Default for ConventionalParams {
    fn default() -> Self {
        Self {
            minibatch_fraction: 0.2,
            drop_count: 0,
        }
    }
}

impl ConventionalParams {
    pub fn validate(&self, devices: usize) -> Result<(), ProtocolError> {
        if !(self.minibatch_fraction > 0.0 && self.minibatch_fraction <= 1.0) {
            return Err(ProtocolError::Params(format!(
                "minibatch fraction {} must lie in (0, 1]",
                self.minibatch_fraction
            )));
        }
        if self.drop_count >= devices {
            return Err(ProtocolError::Params(format!(
                "drop_count={} must be below D={devices}",
                self.drop_count
            )));
        }
        Ok(())
    }

    pub fn slices(&self) -> usize {
        ((1.0 / self.minibatch_fraction).round() as usize).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct ConventionalFl {
    data: Vec<Dataset>,
    slices: usize,
    drop_count: usize,
    epoch: usize,
}

impl ConventionalFl {
    pub fn new(
        parts: &[DevicePartition],
        params: &ConventionalParams,
    ) -> Result<Self, ProtocolError> {
        params.validate(parts.len())?;
        Ok(Self {
            data: parts.iter().map(|p| p.data.clone()).collect(),
            slices: params.slices(),
            drop_count: params.drop_count,
            epoch: 0,
        })
    }

    /// Rows of `device` used in the zero-based epoch `epoch`.
    pub fn batch_range(&self, device: usize, epoch: usize) -> std::ops::Range<usize> {
        let n = self.data[device].m;
        let s = epoch % self.slices;
        (s * n / self.slices)..((s + 1) * n / self.slices)
    }

    fn batch_gradient(
        &self,
        device: usize,
        range: std::ops::Range<usize>,
        theta: &[f64],
    ) -> Vec<f64> {
        let ds = self.data[device].slice(range);
        let mut resid = matmul(&ds.x, theta, ds.m, ds.d, ds.c);
        for (r, y) in resid.iter_mut().zip(&ds.y) {
            *r -= y;
        }
        // Xᵀ·resid
        let (d, c) = (ds.d, ds.c);
        let mut g = vec![0.0; d * c];
        for row in 0..ds.m {
            let x = ds.row(row);
            let e = &resid[row * c..(row + 1) * c];
            for i in 0..d {
                for k in 0..c {
                    g[i * c + k] += x[i] * e[k];
                }
            }
        }
        g
    }
}

impl Protocol for ConventionalFl {
    fn scheme(&self) -> Scheme {
        Scheme::Conventional
    }

    fn setup_seconds(&self) -> f64 {
        0.0
    }

    fn epoch(
        &mut self,
        model: &ModelState,
        latency: &mut LatencySampler,
    ) -> Result<EpochOutcome, ProtocolError> {
        let (d, c) = model.shape();
        let (d64, c64) = (d as u64, c as u64);
        let bits = d64 * c64 * ENTRY_BITS;
        let devices = self.data.len();
        let ranges: Vec<_> = (0..devices)
            .map(|i| self.batch_range(i, self.epoch))
            .collect();
        let times: Vec<f64> = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let macs = mac_count(Workload::MinibatchGradient {
                    batch: r.len() as u64,
                    d: d64,
                    c: c64,
                });
                round_trip(latency, i, bits, macs, bits)
            })
            .collect();
        let keep = devices - self.drop_count;
        let mut contributors = fastest(&times, keep);
        let wait = contributors.iter().map(|&i| times[i]).fold(0.0, f64::max);
        contributors.sort_unstable();
        let theta = model.theta();
        let mut gradient = vec![0.0; d * c];
        let mut samples = 0;
        for &i in &contributors {
            samples += ranges[i].len();
            for (g, v) in gradient
                .iter_mut()
                .zip(self.batch_gradient(i, ranges[i].clone(), &theta))
            {
                *g += v;
            }
        }
        if samples == 0 {
            return Err(ProtocolError::Params(
                "contributing devices hold no samples this epoch".into(),
            ));
        }
        let server = latency.server(mac_count(Workload::Aggregate {
            n: keep as u64,
            d: d64,
            c: c64,
        }));
        self.epoch += 1;
        Ok(EpochOutcome {
            gradient,
            samples,
            contributors,
            seconds: wait + server,
        })
    }
}
