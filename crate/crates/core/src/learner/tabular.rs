use serde::{Deserialize, Serialize};

use super::{greedy_action, ActionEstimates, DualEstimator, Targets};
use crate::mdp::ExplicitPolicy;

/// Dense state × action table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
    clamp: Option<(f64, f64)>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            values: vec![0.0; num_states * num_actions],
            clamp: None,
        }
    }

    /// Entries are clamped into `[lo, hi]` after every update.
    pub fn clamped(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `(1 − α)·v + α·target`, then clamp.
    pub fn blend(&mut self, state: usize, action: usize, target: f64, alpha: f64) {
        let v = &mut self.values[state * self.num_actions + action];
        let mut x = (1.0 - alpha) * *v + alpha * target;
        if let Some((lo, hi)) = self.clamp {
            x = x.clamp(lo, hi);
        }
        *v = x;
    }
}

/// Tabular `Q` and `Q̄`, with an optional undiscounted risk table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDualQ {
    pub q: QTable,
    pub q_bar: QTable,
    pub q_bar_tracked: Option<QTable>,
}

impl TabularDualQ {
    /// Zero-initialized; risk tables are clamped to [0, 1].
    pub fn new(num_states: usize, num_actions: usize, track_undiscounted: bool) -> Self {
        let risk = || QTable::zeros(num_states, num_actions).clamped(0.0, 1.0);
        Self {
            q: QTable::zeros(num_states, num_actions),
            q_bar: risk(),
            q_bar_tracked: track_undiscounted.then(risk),
        }
    }

    /// Q_ξ(x, u) = ξ·Q(x, u) − Q̄(x, u).
    pub fn weighted(&self, xi: f64, state: usize, action: usize) -> f64 {
        xi * self.q.get(state, action) - self.q_bar.get(state, action)
    }

    pub fn greedy_policy(&self, xi: f64) -> ExplicitPolicy {
        ExplicitPolicy::new(
            (0..self.q.num_states())
                .map(|s| greedy_action(&self.estimates(&s), xi))
                .collect(),
        )
    }

    /// Learned undiscounted risk of the greedy action, per state.
    pub fn tracked_risk(&self, xi: f64) -> Vec<f64> {
        let table = self.q_bar_tracked.as_ref().unwrap_or(&self.q_bar);
        (0..self.q.num_states())
            .map(|s| table.get(s, greedy_action(&self.estimates(&s), xi)))
            .collect()
    }
}

impl DualEstimator<usize> for TabularDualQ {
    fn num_actions(&self) -> usize {
        self.q.num_actions
    }

    fn estimates(&self, state: &usize) -> ActionEstimates {
        ActionEstimates {
            q: self.q.row(*state).to_vec(),
            q_bar: self.q_bar.row(*state).to_vec(),
            q_bar_tracked: self.q_bar_tracked.as_ref().map(|t| t.row(*state).to_vec()),
        }
    }

    fn update(&mut self, state: &usize, action: usize, targets: Targets, alpha: f64) {
        self.q.blend(*state, action, targets.q, alpha);
        self.q_bar.blend(*state, action, targets.q_bar, alpha);
        if let Some(t) = &mut self.q_bar_tracked {
            t.blend(*state, action, targets.q_bar_tracked, alpha);
        }
    }

    fn visit_slot(&self, state: &usize, action: usize) -> Option<usize> {
        Some(state * self.q.num_actions + action)
    }

    fn num_visit_slots(&self) -> usize {
        self.q.values.len()
    }
}
