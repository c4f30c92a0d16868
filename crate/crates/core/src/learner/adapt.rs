use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{greedy_action, learn_fixed_xi, DualEstimator, GreedyPolicy, LearningConfig, PhaseDiagnostics};
use crate::error::{Error, Result};
use crate::eval::{estimate_policy, Estimate, EvalSettings};
use crate::mdp::Environment;

/// The ξ grid walked by [`adapt_xi`]: `0, ε, ε + εg, ε + εg + εg², …` up to `xi_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XiSchedule {
    pub xi_start: f64,
    pub xi_step: f64,
    /// Ratio between consecutive steps; 1 gives a uniform grid.
    pub step_growth: f64,
    pub xi_max: f64,
    pub omega: f64,
    /// End the sweep at the first infeasible ξ.
    pub stop_at_violation: bool,
}

impl Default for XiSchedule {
    fn default() -> Self {
        Self {
            xi_start: 0.0,
            xi_step: 0.02,
            step_growth: 1.0,
            xi_max: 10.0,
            omega: 0.13,
            stop_at_violation: true,
        }
    }
}

impl XiSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.xi_start != 0.0 {
            return Err(Error::config("xi.xi_start", "the sweep must start at 0"));
        }
        if !(self.xi_step > 0.0) {
            return Err(Error::config("xi.xi_step", "must be positive"));
        }
        if !(self.step_growth >= 1.0) {
            return Err(Error::config("xi.step_growth", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::config("xi.omega", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = vec![self.xi_start];
        let mut step = self.xi_step;
        let mut k = 1usize;
        loop {
            // Sum from the start each time so that uniform grids stay exact multiples.
            let xi = if self.step_growth == 1.0 {
                self.xi_start + self.xi_step * k as f64
            } else {
                out[out.len() - 1] + step
            };
            if xi > self.xi_max * (1.0 + 1e-12) {
                break;
            }
            out.push(xi);
            step *= self.step_growth;
            k += 1;
        }
        out
    }
}

/// Where the termination test takes its per-state risk from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilitySource {
    /// Monte-Carlo point estimates.
    MonteCarlo,
    /// The learner's own undiscounted risk estimate of the greedy action.
    Tracked,
}

/// `ξ·V − ρ`, with `-0` folded to `0` so that ξ = 0 prints cleanly.
fn weighted_objective(xi: f64, value: f64, risk: f64) -> f64 {
    xi * value - risk + 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub xi: f64,
    pub risk: Estimate,
    pub value: Estimate,
    /// ξ·V̂ − ρ̂
    pub weighted: f64,
    pub feasible: bool,
    /// Largest per-state risk used by the feasibility test.
    pub max_risk: f64,
    pub phase: PhaseDiagnostics,
}

impl SweepRecord {
    pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "xi", "risk", "risk_hw", "value", "value_hw", "weighted", "feasible",
        ])?;
        for r in records {
            w.write_record([
                r.xi.to_string(),
                r.risk.mean.to_string(),
                r.risk.half_width.to_string(),
                r.value.mean.to_string(),
                r.value.half_width.to_string(),
                r.weighted.to_string(),
                r.feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum AdaptOutcome<D> {
    Feasible {
        /// Estimates at the last feasible ξ.
        estimator: D,
        stop_xi: f64,
        sweep: Vec<SweepRecord>,
        /// Estimator after each phase, parallel to `sweep`, when requested.
        snapshots: Vec<D>,
    },
    Infeasible {
        /// Largest per-state risk of the minimum-risk policy.
        min_risk: f64,
        estimator: D,
        sweep: Vec<SweepRecord>,
        snapshots: Vec<D>,
    },
}

impl<D> AdaptOutcome<D> {
    pub fn sweep(&self) -> &[SweepRecord] {
        match self {
            AdaptOutcome::Feasible { sweep, .. } | AdaptOutcome::Infeasible { sweep, .. } => sweep,
        }
    }

    pub fn snapshots(&self) -> &[D] {
        match self {
            AdaptOutcome::Feasible { snapshots, .. } | AdaptOutcome::Infeasible { snapshots, .. } => {
                snapshots
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSettings {
    pub source: FeasibilitySource,
    /// Test episodes per start state after each phase.
    pub eval_episodes: usize,
    pub keep_snapshots: bool,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self {
            source: FeasibilitySource::MonteCarlo,
            eval_episodes: 1000,
            keep_snapshots: false,
        }
    }
}

/// The ξ-adaptation loop: learn the minimum-risk policy at ξ = 0, then raise ξ
/// with warm-started learning while the policy stays feasible on X'.
pub fn adapt_xi<E, D, R>(
    env: &E,
    mut dq: D,
    schedule: &XiSchedule,
    cfg: &LearningConfig,
    settings: &AdaptSettings,
    probes: &[E::State],
    rng: &mut R,
) -> Result<AdaptOutcome<D>>
where
    E: Environment,
    D: DualEstimator<E::State> + Clone,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    cfg.validate()?;
    let eval = EvalSettings {
        episodes: settings.eval_episodes.max(1),
        gamma: cfg.gamma,
        max_steps: cfg.max_steps,
    };
    let start = env.start_distribution().clone();
    let mut sweep = Vec::new();
    let mut snapshots = Vec::new();
    let mut best: Option<(D, f64)> = None;

    for (k, &xi) in schedule.values().iter().enumerate() {
        let phase = learn_fixed_xi(env, &mut dq, xi, cfg, probes, rng);
        let est = estimate_policy(env, &GreedyPolicy { dq: &dq, xi }, &start, eval, rng);
        let max_risk = match settings.source {
            FeasibilitySource::MonteCarlo => est
                .per_state
                .iter()
                .map(|s| s.risk.mean)
                .fold(f64::NEG_INFINITY, f64::max),
            FeasibilitySource::Tracked => start
                .states()
                .map(|s| {
                    let e = dq.estimates(s);
                    let u = greedy_action(&e, xi);
                    e.q_bar_tracked.as_ref().map_or(e.q_bar[u], |t| t[u])
                })
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let feasible = max_risk <= schedule.omega;
        sweep.push(SweepRecord {
            xi,
            risk: est.risk,
            value: est.value,
            weighted: weighted_objective(xi, est.value.mean, est.risk.mean),
            feasible,
            max_risk,
            phase,
        });
        if settings.keep_snapshots {
            snapshots.push(dq.clone());
        }
        if k == 0 && !feasible {
            return Ok(AdaptOutcome::Infeasible {
                min_risk: max_risk,
                estimator: dq,
                sweep,
                snapshots,
            });
        }
        if feasible {
            best = Some((dq.clone(), xi));
        } else if schedule.stop_at_violation {
            break;
        }
    }
    let (estimator, stop_xi) = best.expect("ξ = 0 was feasible");
    Ok(AdaptOutcome::Feasible {
        estimator,
        stop_xi,
        sweep,
        snapshots,
    })
}

/// Among records with risk ≤ ω, the one with the largest value (ties: larger ξ).
pub fn select_xi(sweep: &[SweepRecord], omega: f64) -> Option<(usize, &SweepRecord)> {
    sweep
        .iter()
        .enumerate()
        .filter(|(_, r)| r.risk.mean <= omega)
        .max_by(|(_, a), (_, b)| a.value.mean.total_cmp(&b.value.mean).then(a.xi.total_cmp(&b.xi)))
}
