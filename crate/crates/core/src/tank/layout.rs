use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{StateEncoding, TankEnv};
use crate::approx::{grid_centers, place_rbf_centers, RbfNet};
use crate::error::{Error, Result};
use crate::mdp::{Environment, StateClass};

/// Where the RBF centers of a tank net go and how wide they are.
///
/// The time input is kept sharp so that values at different steps barely mix.
/// `(t, y)` inputs get a regular grid; richer encodings get k-means centers over
/// states visited by a random policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfLayout {
    /// Kernel width along t, in time steps.
    pub time_width: f64,
    /// Level centers per time step on the `(t, y)` grid.
    pub level_centers: usize,
    /// Kernel width along y, in level grid spacings.
    pub level_width: f64,
    /// Number of k-means centers for the other encodings.
    pub centers: usize,
    pub warmup_episodes: usize,
    /// k-means runs on at most this many warm-up states.
    pub max_samples: usize,
    pub normalized: bool,
}

impl Default for RbfLayout {
    fn default() -> Self {
        Self {
            time_width: 0.35,
            level_centers: 25,
            level_width: 1.0,
            centers: 400,
            warmup_episodes: 1000,
            max_samples: 6000,
            normalized: true,
        }
    }
}

impl RbfLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_width > 0.0 && self.level_width > 0.0) {
            return Err(Error::config("rbf.time_width", "kernel widths must be positive"));
        }
        if self.level_centers < 2 {
            return Err(Error::config("rbf.level_centers", "need at least two"));
        }
        if self.centers == 0 || self.warmup_episodes == 0 || self.max_samples == 0 {
            return Err(Error::config(
                "rbf.centers",
                "center and sample counts must be positive",
            ));
        }
        Ok(())
    }

    /// An untrained net with bias fixed at 0 for `encoding`.
    pub fn build<R: Rng + ?Sized>(
        &self,
        env: &TankEnv,
        encoding: StateEncoding,
        rng: &mut R,
    ) -> Result<RbfNet> {
        self.validate()?;
        let params = env.params();
        let n = params.horizon as f64;
        let num_actions = params.num_actions;
        let time_scale = n / self.time_width;
        let net = if encoding == StateEncoding::ClcY {
            let steps = params.horizon;
            let (lo, hi) = (-0.1, 1.1);
            let grid = grid_centers(
                &[0.0, lo],
                &[(steps - 1) as f64 / n, hi],
                &[steps, self.level_centers],
            )?;
            let dy = (hi - lo) / (self.level_centers - 1) as f64;
            let count = grid.centers.len();
            RbfNet::new(grid.centers, vec![1.0; count], num_actions)?
                .with_input_scale(vec![time_scale, 1.0 / (self.level_width * dy)])?
        } else {
            let dim = encoding.dim(params);
            let mut scale = vec![1.0; dim];
            scale[0] = time_scale;
            let states = self.warmup(env, encoding, rng);
            let scaled: Vec<Vec<f64>> = states
                .iter()
                .map(|x| x.iter().zip(&scale).map(|(v, s)| v * s).collect())
                .collect();
            let placed = place_rbf_centers(&scaled, self.centers.min(scaled.len()), rng)?;
            let centers = placed
                .centers
                .into_iter()
                .map(|c| c.iter().zip(&scale).map(|(v, s)| v / s).collect())
                .collect();
            RbfNet::new(centers, placed.widths, num_actions)?.with_input_scale(scale)?
        };
        Ok(net.normalized(self.normalized).train_bias(false))
    }

    fn warmup<R: Rng + ?Sized>(&self, env: &TankEnv, encoding: StateEncoding, rng: &mut R) -> Vec<Vec<f64>> {
        let params = env.params();
        let mut states = Vec::new();
        for _ in 0..self.warmup_episodes {
            let mut s = env.reset(rng);
            while env.class(&s) == StateClass::Ordinary {
                states.push(encoding.features(&s, params));
                let a = rng.random_range(0..params.num_actions);
                s = env.step(&s, a, rng).next;
            }
        }
        if states.len() > self.max_samples {
            let keep = sample(rng, states.len(), self.max_samples);
            let mut idx: Vec<usize> = keep.into_iter().collect();
            idx.sort_unstable();
            states = idx.into_iter().map(|i| states[i].clone()).collect();
        }
        states
    }
}
