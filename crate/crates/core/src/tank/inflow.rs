use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stochastic inflow description, loadable from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InflowConfig {
    /// Mean of F_Σ(t), one entry per step.
    pub mean: Vec<f64>,
    /// Standard deviation σ_t, shared by all steps.
    pub sigma: f64,
    /// r_ij = 1 − corr_decay·|i − j|
    pub corr_decay: f64,
    /// μ(t): overall mean of the substance-1 inflow concentration.
    pub conc_mean: Vec<f64>,
    /// Mode means are μ(t) ± conc_offset.
    pub conc_offset: f64,
    pub conc_variance: f64,
}

impl Default for InflowConfig {
    fn default() -> Self {
        Self {
            mean: vec![
                1.8, 1.8, 1.5, 1.5, 0.7, 0.7, 0.5, 0.3, 0.2, 0.2, 0.2, 0.2, 0.2, 0.6, 1.2, 1.2,
            ],
            sigma: 0.05,
            corr_decay: 0.05,
            conc_mean: vec![0.25; 16],
            conc_offset: 0.04,
            conc_variance: 0.0025,
        }
    }
}

impl InflowConfig {
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        1.0 - self.corr_decay * i.abs_diff(j) as f64
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        DMatrix::from_fn(n, n, |i, j| self.sigma * self.sigma * self.correlation(i, j))
    }
}

#[derive(Clone, Debug)]
pub struct InflowModel {
    config: InflowConfig,
    chol: DMatrix<f64>,
}

impl InflowModel {
    pub fn new(config: InflowConfig) -> Result<Self> {
        if config.mean.is_empty() {
            return Err(Error::config("inflow.mean", "empty mean vector"));
        }
        if config.conc_mean.len() != config.mean.len() {
            return Err(Error::config(
                "inflow.conc_mean",
                format!(
                    "needs {} entries, has {}",
                    config.mean.len(),
                    config.conc_mean.len()
                ),
            ));
        }
        if !(config.sigma >= 0.0) || !(config.conc_variance >= 0.0) {
            return Err(Error::config("inflow.sigma", "must be nonnegative"));
        }
        let chol = config
            .covariance()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self { config, chol })
    }

    pub fn config(&self) -> &InflowConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.config.mean.len()
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// One episode's inflows: F_Σ = μ_F + L·z, and a shared mode k for the
    /// per-inflow concentrations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> InflowDraw {
        let n = self.horizon();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = &self.chol * z;
        let flows = (0..n).map(|t| self.config.mean[t] + f[t]).collect();
        let mode = u8::from(rng.random::<bool>());
        let sign = if mode == 0 { 1.0 } else { -1.0 };
        let sd = self.config.conc_variance.sqrt();
        let conc1 = (0..n)
            .map(|t| {
                let m = self.config.conc_mean[t] + sign * self.config.conc_offset;
                let a = m + sd * rng.sample::<f64, _>(StandardNormal);
                let b = m + sd * rng.sample::<f64, _>(StandardNormal);
                [a, b]
            })
            .collect();
        InflowDraw { flows, mode, conc1 }
    }
}

/// Realized inflows of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflowDraw {
    /// F_Σ(t)
    pub flows: Vec<f64>,
    pub mode: u8,
    /// c_{j,1}(t) for inflows j = 0, 1.
    pub conc1: Vec<[f64; 2]>,
}

impl InflowDraw {
    pub fn deterministic(flows: Vec<f64>, conc1: Vec<[f64; 2]>) -> Self {
        Self {
            flows,
            mode: 0,
            conc1,
        }
    }

    /// c_{j,i}(t), with the substance-2 concentration defined as 1 − c_{j,1}.
    pub fn inflow_concentration(&self, t: usize, j: usize, i: usize) -> f64 {
        let c = self.conc1[t][j];
        if i == 0 {
            c
        } else {
            1.0 - c
        }
    }
}
