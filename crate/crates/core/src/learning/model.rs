//! Model state and learning-rate schedule shared by all protocols.

use serde::{Deserialize, Serialize};

use super::{matmul, DataError, Dataset};
use crate::fxp::{FxConfig, FxMatrix};

/// Step size `μ_e`: `base`, multiplied by `factor` once for every milestone
/// `e` has reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub milestones: Vec<usize>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 6.0,
            factor: 0.8,
            milestones: vec![200, 350],
        }
    }
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            factor: 1.0,
            milestones: Vec::new(),
        }
    }

    /// Rate for the one-based epoch `e`.
    pub fn rate(&self, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.factor.powi(hits as i32)
    }
}

/// Current model `Θ = Θ^(1) + ε`, where `Θ^(1)` is the public initial model
/// and `ε` is the fixed-point update that protocols transmit.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    d: usize,
    c: usize,
    theta1: FxMatrix,
    eps: FxMatrix,
    epoch: usize,
    schedule: LrSchedule,
    lambda: f64,
}

impl ModelState {
    /// Starts from `Θ^(1) = 0`.
    pub fn new(d: usize, c: usize, cfg: FxConfig, schedule: LrSchedule, lambda: f64) -> Self {
        Self {
            d,
            c,
            theta1: FxMatrix::zeros(d, c, cfg),
            eps: FxMatrix::zeros(d, c, cfg),
            epoch: 1,
            schedule,
            lambda,
        }
    }

    pub fn with_initial(theta1: FxMatrix, schedule: LrSchedule, lambda: f64) -> Self {
        let (d, c) = theta1.shape();
        let cfg = theta1.cfg();
        Self {
            d,
            c,
            theta1,
            eps: FxMatrix::zeros(d, c, cfg),
            epoch: 1,
            schedule,
            lambda,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d, self.c)
    }

    pub fn cfg(&self) -> FxConfig {
        self.eps.cfg()
    }

    /// One-based index of the next epoch.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    pub fn theta1(&self) -> &FxMatrix {
        &self.theta1
    }

    pub fn eps(&self) -> &FxMatrix {
        &self.eps
    }

    /// `Θ = Θ^(1) + ε` in reals.
    pub fn theta(&self) -> Vec<f64> {
        self.theta1
            .to_f64()
            .into_iter()
            .zip(self.eps.to_f64())
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Applies `Θ ← Θ − μ_e(G/m + λΘ)` with `G` the aggregated gradient over
    /// `m` samples, and re-quantizes `ε`.
    pub fn apply_gradient(&mut self, gradient: &[f64], m: usize) -> Result<(), DataError> {
        assert_eq!(gradient.len(), self.d * self.c, "gradient shape mismatch");
        let mu = self.schedule.rate(self.epoch);
        let theta = self.theta();
        let next = super::aggregate_update(gradient, &theta, mu, self.lambda, m);
        let t1 = self.theta1.to_f64();
        let eps: Vec<f64> = next.iter().zip(&t1).map(|(a, b)| a - b).collect();
        self.eps = FxMatrix::quantize(self.d, self.c, &eps, self.cfg())?;
        self.epoch += 1;
        Ok(())
    }

    pub fn loss(&self, data: &Dataset) -> f64 {
        super::global_loss(data, &self.theta(), self.lambda)
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        super::accuracy(data, &self.theta())
    }

    /// Predicted scores `XΘ`.
    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        matmul(&data.x, &self.theta(), data.m, data.d, data.c)
    }
}
