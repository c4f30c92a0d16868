use serde::{Deserialize, Serialize};

use super::{ActionEstimates, DualEstimator, Targets};
use crate::approx::Regressor;
use crate::tank::{StateEncoding, TankEpisode, TankParams};

/// `Q` and `Q̄` networks over an encoded tank state, trained by the direct method.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetDualQ<N> {
    pub q: N,
    pub q_bar: N,
    pub encoding: StateEncoding,
    pub params: TankParams,
    /// Gradient step size for the `Q` net.
    pub rate: f64,
    /// Gradient step size for the `Q̄` net.
    pub rate_bar: f64,
}

impl<N: Regressor> NetDualQ<N> {
    pub fn features(&self, state: &TankEpisode) -> Vec<f64> {
        self.encoding.features(state, &self.params)
    }

    /// Risk estimates of all actions, clamped to [0, 1] for reporting.
    pub fn reported_risk(&self, state: &TankEpisode) -> Vec<f64> {
        self.q_bar
            .predict_all(&self.features(state))
            .expect("encoding matches the net input")
            .into_iter()
            .map(|r| r.clamp(0.0, 1.0))
            .collect()
    }
}

impl<N: Regressor> DualEstimator<TankEpisode> for NetDualQ<N> {
    fn num_actions(&self) -> usize {
        self.q.num_actions()
    }

    fn estimates(&self, state: &TankEpisode) -> ActionEstimates {
        let x = self.features(state);
        ActionEstimates {
            q: self.q.predict_all(&x).expect("encoding matches the net input"),
            q_bar: self
                .q_bar
                .predict_all(&x)
                .expect("encoding matches the net input"),
            q_bar_tracked: None,
        }
    }

    fn update(&mut self, state: &TankEpisode, action: usize, targets: Targets, alpha: f64) {
        let x = self.features(state);
        self.q
            .train_step(&x, action, targets.q, alpha * self.rate)
            .expect("encoding matches the net input");
        self.q_bar
            .train_step(&x, action, targets.q_bar, alpha * self.rate_bar)
            .expect("encoding matches the net input");
    }

    fn visit_slot(&self, state: &TankEpisode, action: usize) -> Option<usize> {
        self.q
            .region(&self.features(state))
            .map(|r| r * self.q.num_actions() + action)
    }

    fn num_visit_slots(&self) -> usize {
        self.q.num_regions() * self.q.num_actions()
    }
}
