//! Weighted two-criterion Q-learning.
//!
//! Two estimates are learned side by side: `Q` for the return and `Q̄` for the
//! risk. Actions are ranked by `Q_ξ = ξ·Q − Q̄`, ties broken by `Q` and then by the
//! lowest action index. Both estimates bootstrap from the same greedy successor
//! action.

mod adapt;
mod net;
mod tabular;

pub use adapt::{
    adapt_xi, select_xi, AdaptOutcome, AdaptSettings, FeasibilitySource, SweepRecord, XiSchedule,
};
pub use net::NetDualQ;

pub use tabular::{QTable, TabularDualQ};

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Environment, Policy, StateClass, TransitionSample};

/// Estimates for every action of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionEstimates {
    pub q: Vec<f64>,
    pub q_bar: Vec<f64>,
    /// Undiscounted risk, when tracked separately from a discounted `q_bar`.
    pub q_bar_tracked: Option<Vec<f64>>,
}

/// Bootstrapped targets for one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Targets {
    pub q: f64,
    pub q_bar: f64,
    pub q_bar_tracked: f64,
}

/// A pair of action-value estimators (`Q`, `Q̄`) over states `S`.
pub trait DualEstimator<S> {
    fn num_actions(&self) -> usize;

    fn estimates(&self, state: &S) -> ActionEstimates;

    /// Moves the estimates of `(state, action)` toward `targets`. Tables use
    /// `alpha` as the mixing weight; nets use it to scale their own step size.
    fn update(&mut self, state: &S, action: usize, targets: Targets, alpha: f64);

    /// Index of the visit counter for `(state, action)`, for visit-based learning
    /// rates. `None` means the estimator has no per-pair counter.
    fn visit_slot(&self, state: &S, action: usize) -> Option<usize>;

    fn num_visit_slots(&self) -> usize;
}

/// `a` is preferred to `b` (the ⪰ ordering, strict part).
fn prefer(xi: f64, q: &[f64], q_bar: &[f64], a: usize, b: usize) -> Ordering {
    let wa = xi * q[a] - q_bar[a];
    let wb = xi * q[b] - q_bar[b];
    wa.partial_cmp(&wb)
        .unwrap_or(Ordering::Equal)
        .then(q[a].partial_cmp(&q[b]).unwrap_or(Ordering::Equal))
        .then(b.cmp(&a))
}

/// Greedy action under ⪰ among `actions` (all actions when empty).
pub fn greedy_among(xi: f64, q: &[f64], q_bar: &[f64], actions: &[usize]) -> usize {
    let all: Vec<usize>;
    let candidates = if actions.is_empty() {
        all = (0..q.len()).collect();
        &all
    } else {
        actions
    };
    let mut best = candidates[0];
    for &a in &candidates[1..] {
        if prefer(xi, q, q_bar, a, best) == Ordering::Greater {
            best = a;
        }
    }
    best
}

pub fn greedy_action(est: &ActionEstimates, xi: f64) -> usize {
    greedy_among(xi, &est.q, &est.q_bar, &[])
}

/// Known values of terminal states: `(Q, Q̄)` of Φ is `(0, 1)`, of Γ `(0, 0)`.
pub fn terminal_values(class: StateClass) -> (f64, f64) {
    match class {
        StateClass::Error => (0.0, 1.0),
        _ => (0.0, 0.0),
    }
}

/// What the learning-rate counter n in α = c / (c + n) counts. It restarts at 0
/// with every new ξ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSchedule {
    /// Visits of the (state, action) pair.
    PerVisit,
    /// Episodes of the current phase.
    PerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub gamma: f64,
    pub gamma_bar: f64,
    /// Also learn an undiscounted risk estimate when `gamma_bar < 1`.
    pub track_undiscounted: bool,
    /// Tables use α = c / (c + n).
    pub alpha_c: f64,
    pub alpha_schedule: AlphaSchedule,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub episodes_per_xi: usize,
    /// Episodes to run before the stability test may end a phase.
    pub min_episodes_per_xi: usize,
    pub stability_window: usize,
    pub max_steps: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            gamma_bar: 1.0,
            track_undiscounted: false,
            alpha_c: 10.0,
            alpha_schedule: AlphaSchedule::PerVisit,
            epsilon_start: 0.3,
            epsilon_end: 0.01,
            episodes_per_xi: 20_000,
            min_episodes_per_xi: 0,
            stability_window: 50,
            max_steps: 1000,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("gamma_bar", self.gamma_bar)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("learning.{name}"), "must lie in [0, 1]"));
            }
        }
        if !(self.alpha_c > 0.0) {
            return Err(Error::config("learning.alpha_c", "must be positive"));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("learning.{name}"), "must lie in [0, 1]"));
            }
        }
        if self.episodes_per_xi == 0 || self.max_steps == 0 {
            return Err(Error::config("learning.episodes_per_xi", "must be positive"));
        }
        Ok(())
    }

    /// Exploration rate for episode `k` of a phase: linear decay from
    /// `epsilon_start` to `epsilon_end` over `episodes_per_xi` episodes.
    pub fn epsilon(&self, k: usize) -> f64 {
        if self.episodes_per_xi <= 1 {
            return if k == 0 {
                self.epsilon_start
            } else {
                self.epsilon_end
            };
        }
        let frac = (k as f64 / (self.episodes_per_xi - 1) as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Computes the targets for `sample` with successor action chosen greedily at `xi`.
pub fn td_targets<S, D: DualEstimator<S>>(
    dq: &D,
    sample: &TransitionSample<S>,
    xi: f64,
    cfg: &LearningConfig,
) -> Targets {
    let (q_next, q_bar_next, tracked_next) = match sample.next_class {
        StateClass::Absorbing => (0.0, 0.0, 0.0),
        StateClass::Error | StateClass::Goal => {
            let (q, qb) = terminal_values(sample.next_class);
            (q, qb, qb)
        }
        StateClass::Ordinary => {
            let est = dq.estimates(&sample.next_state);
            let u = greedy_action(&est, xi);
            let tracked = est.q_bar_tracked.as_ref().map_or(est.q_bar[u], |t| t[u]);
            (est.q[u], est.q_bar[u], tracked)
        }
    };
    Targets {
        q: sample.reward + cfg.gamma * q_next,
        q_bar: sample.risk_cost + cfg.gamma_bar * q_bar_next,
        q_bar_tracked: sample.risk_cost + tracked_next,
    }
}

/// One temporal-difference update of both estimates at learning rate `alpha`.
pub fn td_update<S, D: DualEstimator<S>>(
    dq: &mut D,
    sample: &TransitionSample<S>,
    xi: f64,
    alpha: f64,
    cfg: &LearningConfig,
) {
    let targets = td_targets(dq, sample, xi, cfg);
    dq.update(&sample.state, sample.action, targets, alpha);
}

/// Greedy policy of a frozen estimator at fixed ξ.
pub struct GreedyPolicy<'a, D> {
    pub dq: &'a D,
    pub xi: f64,
}

impl<S, D: DualEstimator<S>> Policy<S> for GreedyPolicy<'_, D> {
    fn action(&self, state: &S) -> usize {
        greedy_action(&self.dq.estimates(state), self.xi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseDiagnostics {
    pub episodes: usize,
    pub updates: usize,
    pub stable: bool,
}

/// Learns at fixed ξ, warm-starting from the current estimates.
///
/// Visit counters (and so the table learning rate) start afresh. The phase ends
/// when the greedy policy on `probes` has not changed for `stability_window`
/// consecutive episodes (after `min_episodes_per_xi`), or after
/// `episodes_per_xi` episodes.
pub fn learn_fixed_xi<E, D, R>(
    env: &E,
    dq: &mut D,
    xi: f64,
    cfg: &LearningConfig,
    probes: &[E::State],
    rng: &mut R,
) -> PhaseDiagnostics
where
    E: Environment,
    D: DualEstimator<E::State>,
    R: Rng + ?Sized,
{
    let mut visits = vec![0u32; dq.num_visit_slots()];
    let greedy_on_probes = |dq: &D| -> Vec<usize> {
        probes
            .iter()
            .map(|s| greedy_action(&dq.estimates(s), xi))
            .collect()
    };
    let mut last = greedy_on_probes(dq);
    let mut unchanged = 0usize;
    let mut updates = 0usize;
    let na = dq.num_actions();

    for episode in 0..cfg.episodes_per_xi {
        let eps = cfg.epsilon(episode);
        let mut state = env.reset(rng);
        let mut steps = 0;
        while env.class(&state) == StateClass::Ordinary && steps < cfg.max_steps {
            let action = if rng.random::<f64>() < eps {
                rng.random_range(0..na)
            } else {
                greedy_action(&dq.estimates(&state), xi)
            };
            let out = env.step(&state, action, rng);
            let sample = TransitionSample {
                state,
                action,
                next_state: out.next,
                reward: out.reward,
                risk_cost: out.risk_cost,
                next_class: out.class,
            };
            let alpha = match dq.visit_slot(&sample.state, action) {
                Some(_) if cfg.alpha_schedule == AlphaSchedule::PerEpisode => {
                    cfg.alpha_c / (cfg.alpha_c + episode as f64)
                }
                Some(slot) => {
                    let n = visits[slot];
                    visits[slot] = n.saturating_add(1);
                    cfg.alpha_c / (cfg.alpha_c + n as f64)
                }
                None if cfg.alpha_schedule == AlphaSchedule::PerEpisode => {
                    cfg.alpha_c / (cfg.alpha_c + episode as f64)
                }
                None => 1.0,
            };
            td_update(dq, &sample, xi, alpha, cfg);
            updates += 1;
            steps += 1;
            state = sample.next_state;
        }

        let now = greedy_on_probes(dq);
        if now == last {
            unchanged += 1;
        } else {
            unchanged = 0;
            last = now;
        }
        if cfg.stability_window > 0
            && unchanged >= cfg.stability_window
            && episode + 1 >= cfg.min_episodes_per_xi
        {
            return PhaseDiagnostics {
                episodes: episode + 1,
                updates,
                stable: true,
            };
        }
    }
    PhaseDiagnostics {
        episodes: cfg.episodes_per_xi,
        updates,
        stable: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(q: Vec<f64>, q_bar: Vec<f64>) -> ActionEstimates {
        ActionEstimates {
            q,
            q_bar,
            q_bar_tracked: None,
        }
    }

    #[test]
    fn weighted_ties_go_to_higher_q() {
        // Q_ξ equal at ξ = 1: 0.5 − 0.25 = 0.75 − 0.5
        assert_eq!(greedy_action(&est(vec![0.5, 0.75], vec![0.25, 0.5]), 1.0), 1);
    }

    #[test]
    fn zero_xi_minimizes_risk() {
        assert_eq!(
            greedy_action(&est(vec![9.0, 0.0, 5.0], vec![0.3, 0.2, 0.25]), 0.0),
            1
        );
    }

    #[test]
    fn full_ties_go_to_lowest_index() {
        assert_eq!(greedy_action(&est(vec![1.0; 4], vec![0.5; 4]), 2.0), 0);
    }

    #[test]
    fn restricted_action_set() {
        let e = est(vec![3.0, 2.0, 1.0], vec![0.0; 3]);
        assert_eq!(greedy_among(1.0, &e.q, &e.q_bar, &[1, 2]), 1);
    }

    #[test]
    fn epsilon_decays_linearly() {
        let cfg = LearningConfig {
            episodes_per_xi: 101,
            ..Default::default()
        };
        assert!((cfg.epsilon(0) - 0.3).abs() < 1e-15);
        assert!((cfg.epsilon(100) - 0.01).abs() < 1e-15);
        assert!((cfg.epsilon(50) - 0.155).abs() < 1e-12);
    }
}
