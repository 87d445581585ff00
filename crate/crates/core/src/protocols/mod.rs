//! Executable training protocols and their shared plumbing: device
//! grouping, the inter-group relay schedule, order statistics and per-epoch
//! outcomes.

pub mod conventional;
pub mod padded;
pub mod secagg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::CodingError;
use crate::fxp::FxError;
use crate::latency::LatencySampler;
use crate::learning::{DataError, ModelState};
use crate::secret::SecretError;

pub use conventional::{ConventionalFl, ConventionalParams};
pub use padded::{PaddedFl, PaddedParams};
pub use secagg::{SecAgg, SecAggParams};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Secret(#[from] SecretError),
    #[error(transparent)]
    Fixed(#[from] FxError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Padded,
    SecAgg,
    Conventional,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Padded => "padded",
            Scheme::SecAgg => "secagg",
            Scheme::Conventional => "conventional",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "padded" => Ok(Scheme::Padded),
            "secagg" => Ok(Scheme::SecAgg),
            "conventional" => Ok(Scheme::Conventional),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

/// What one epoch produced: the aggregated gradient `G` over `samples`
/// rows, the devices whose results the server used and the simulated time.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochOutcome {
    pub gradient: Vec<f64>,
    pub samples: usize,
    pub contributors: Vec<usize>,
    pub seconds: f64,
}

/// One row of a training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub cumulative_seconds: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub contributors: Vec<usize>,
    pub scheme: Scheme,
    pub config_hash: String,
}

/// Common driver interface.
pub trait Protocol {
    fn scheme(&self) -> Scheme;

    /// Simulated duration of the one-off sharing phase.
    fn setup_seconds(&self) -> f64;

    /// Runs one epoch against the current model. The caller applies
    /// [`EpochOutcome::gradient`] to the model.
    fn epoch(
        &mut self,
        model: &ModelState,
        latency: &mut LatencySampler,
    ) -> Result<EpochOutcome, ProtocolError>;
}

/// Assigns devices to `groups` groups round-robin by index; group `g`
/// (zero-based) holds devices `g, g+N, g+2N, …`.
pub fn assign_groups(devices: usize, groups: usize) -> Result<Vec<Vec<usize>>, ProtocolError> {
    if groups == 0 || groups > devices {
        return Err(ProtocolError::Params(format!(
            "need 1 <= N <= D, got N={groups}, D={devices}"
        )));
    }
    let mut out = vec![Vec::new(); groups];
    for i in 0..devices {
        out[i % groups].push(i);
    }
    Ok(out)
}

/// Number of relay steps `⌈log2 N⌉`.
pub fn relay_steps(groups: usize) -> usize {
    if groups <= 1 {
        0
    } else {
        (usize::BITS - (groups - 1).leading_zeros()) as usize
    }
}

/// One-based groups `j ≤ N` that transmit in step `s`:
/// `j mod 2^s = (2^(s−1) + 1) mod 2^s`. Each sends to `j − 2^(s−1)`.
pub fn group_transmitters(step: usize, groups: usize) -> Vec<usize> {
    assert!(step >= 1, "steps start at 1");
    let m = 1usize << step;
    let r = ((1usize << (step - 1)) + 1) % m;
    (1..=groups).filter(|j| j % m == r).collect()
}

/// Relay schedule: per step, one-based `(sender, receiver)` group pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSchedule {
    groups: usize,
    steps: Vec<Vec<(usize, usize)>>,
}

impl GroupSchedule {
    pub fn new(groups: usize) -> Self {
        let steps = (1..=relay_steps(groups))
            .map(|s| {
                let half = 1usize << (s - 1);
                group_transmitters(s, groups)
                    .into_iter()
                    .map(|j| (j, j - half))
                    .collect()
            })
            .collect();
        Self { groups, steps }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn steps(&self) -> &[Vec<(usize, usize)>] {
        &self.steps
    }

    /// Groups whose data has reached each group after all steps, by
    /// replaying the schedule. Indices are one-based.
    pub fn coverage(&self) -> Vec<Vec<usize>> {
        let mut held: Vec<Vec<usize>> = (1..=self.groups).map(|g| vec![g]).collect();
        for step in &self.steps {
            let snapshot = held.clone();
            for &(from, to) in step {
                held[to - 1].extend_from_slice(&snapshot[from - 1]);
            }
        }
        for h in held.iter_mut() {
            h.sort_unstable();
        }
        held
    }
}

/// Indices of the `k` smallest `times`, ordered by time and then index.
pub fn fastest(times: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Per-device round trip `download + compute + upload`, sampled in that
/// order from each device's own stream.
pub(crate) fn round_trip(
    latency: &mut LatencySampler,
    device: usize,
    down_bits: u64,
    macs: u64,
    up_bits: u64,
) -> f64 {
    let down = latency.download(device, down_bits);
    let comp = latency.compute(device, macs);
    let up = latency.upload(device, up_bits);
    down + comp + up
}

/// `rounds` barrier rounds in which every listed device uploads and
/// downloads `bits`; each round lasts as long as its slowest device.
pub(crate) fn sharing_rounds(
    latency: &mut LatencySampler,
    devices: &[usize],
    rounds: usize,
    bits: u64,
) -> f64 {
    (0..rounds)
        .map(|_| {
            devices
                .iter()
                .map(|&i| latency.upload(i, bits) + latency.download(i, bits))
                .fold(0.0, f64::max)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmitters_match_example() {
        assert_eq!(group_transmitters(1, 8), vec![2, 4, 6, 8]);
        assert_eq!(group_transmitters(2, 8), vec![3, 7]);
        assert_eq!(group_transmitters(3, 8), vec![5]);
        assert_eq!(group_transmitters(1, 5), vec![2, 4]);
        assert_eq!(group_transmitters(2, 5), vec![3]);
        assert_eq!(group_transmitters(3, 5), vec![5]);
        for s in 1..4 {
            assert!(group_transmitters(s, 1).is_empty());
        }
        assert_eq!(relay_steps(1), 0);
        assert_eq!(relay_steps(2), 1);
        assert_eq!(relay_steps(5), 3);
        assert_eq!(relay_steps(8), 3);
        assert_eq!(relay_steps(9), 4);
    }

    #[test]
    fn schedule_reaches_master_with_single_edges() {
        for n in 1..=32 {
            let sched = GroupSchedule::new(n);
            assert_eq!(sched.steps().len(), relay_steps(n));
            for step in sched.steps() {
                let mut senders: Vec<usize> = step.iter().map(|p| p.0).collect();
                let mut receivers: Vec<usize> = step.iter().map(|p| p.1).collect();
                senders.sort_unstable();
                receivers.sort_unstable();
                senders.dedup();
                receivers.dedup();
                assert_eq!(senders.len(), step.len());
                assert_eq!(receivers.len(), step.len());
                assert!(step.iter().all(|&(a, b)| b >= 1 && a > b));
            }
            assert_eq!(sched.coverage()[0], (1..=n).collect::<Vec<_>>(), "N={n}");
        }
        assert_eq!(
            GroupSchedule::new(8).steps()[0],
            vec![(2, 1), (4, 3), (6, 5), (8, 7)]
        );
    }

    #[test]
    fn groups_round_robin() {
        assert_eq!(
            assign_groups(5, 2).unwrap(),
            vec![vec![0, 2, 4], vec![1, 3]]
        );
        assert_eq!(assign_groups(3, 1).unwrap(), vec![vec![0, 1, 2]]);
        assert!(assign_groups(3, 4).is_err());
        assert!(assign_groups(3, 0).is_err());
    }

    #[test]
    fn fastest_breaks_ties_by_index() {
        assert_eq!(fastest(&[3.0, 1.0, 1.0, 0.5], 3), vec![3, 1, 2]);
        assert_eq!(fastest(&[1.0], 0), Vec::<usize>::new());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::Padded, Scheme::SecAgg, Scheme::Conventional] {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("x".parse::<Scheme>().is_err());
    }
}
