use statrs::distribution::{ContinuousCDF, Normal};

use super::{InflowModel, TankParams};
use crate::error::{Error, Result};
use crate::mdp::{augment_with_eta, Branch, FiniteMdp, RawMdp};

/// Level-only tank on a binned level grid, for the exact oracle.
///
/// Inflows are treated as independent across steps with their marginal normal
/// laws, so this is an approximation of the correlated plant. State 0 is the
/// initial level; then `bins` level cells for each of the steps `1..N`; then one
/// shared error state and one goal state.
#[derive(Clone, Debug)]
pub struct FiniteTank {
    pub mdp: FiniteMdp,
    pub bins: usize,
    pub params: TankParams,
}

impl FiniteTank {
    pub fn error_state(&self) -> usize {
        1 + (self.params.horizon - 1) * self.bins
    }

    pub fn goal_state(&self) -> usize {
        self.error_state() + 1
    }

    pub fn state_of(&self, t: usize, bin: usize) -> usize {
        if t == 0 {
            0
        } else {
            1 + (t - 1) * self.bins + bin
        }
    }

    /// (t, level) of a decision state.
    pub fn describe(&self, state: usize) -> Option<(usize, f64)> {
        if state == 0 {
            return Some((0, self.params.y0));
        }
        if state >= self.error_state() {
            return None;
        }
        let k = state - 1;
        Some((
            1 + k / self.bins,
            bin_center(&self.params, self.bins, k % self.bins),
        ))
    }
}

fn bin_center(p: &TankParams, bins: usize, b: usize) -> f64 {
    p.y_min + (p.y_max - p.y_min) * (b as f64 + 0.5) / bins as f64
}

pub fn finite_approximation(params: &TankParams, inflow: &InflowModel, bins: usize) -> Result<FiniteTank> {
    params.validate()?;
    if bins == 0 {
        return Err(Error::config("tank.bins", "need at least one level bin"));
    }
    let cfg = inflow.config();
    let n = params.horizon;
    let actions = params.actions();
    let error = 1 + (n - 1) * bins;
    let goal = error + 1;
    let width = (params.y_max - params.y_min) / bins as f64;
    let sd = params.gain * cfg.sigma;

    let row = |t: usize, y: f64, f: f64| -> Result<Vec<Branch>> {
        let mean = y + params.gain * (cfg.mean[t] - f);
        let reward = params.reward(f);
        let cdf = |x: f64| -> Result<f64> {
            if sd == 0.0 {
                return Ok(if x >= mean { 1.0 } else { 0.0 });
            }
            let d = Normal::new(mean, sd).map_err(|e| Error::config("inflow.sigma", e.to_string()))?;
            Ok(d.cdf(x))
        };
        let lo = cdf(params.y_min)?;
        let hi = cdf(params.y_max)?;
        let mut out = vec![Branch {
            next: error,
            prob: lo + (1.0 - hi),
            reward,
        }];
        if t + 1 == n {
            out.push(Branch {
                next: goal,
                prob: hi - lo,
                reward,
            });
        } else {
            let mut prev = lo;
            for b in 0..bins {
                let edge = if b + 1 == bins {
                    hi
                } else {
                    cdf(params.y_min + width * (b + 1) as f64)?
                };
                out.push(Branch {
                    next: 1 + t * bins + b,
                    prob: edge - prev,
                    reward,
                });
                prev = edge;
            }
        }
        out.retain(|b| b.prob > 0.0);
        Ok(out)
    };

    let mut transitions = Vec::with_capacity(goal + 1);
    transitions.push(
        actions
            .iter()
            .map(|&f| row(0, params.y0, f))
            .collect::<Result<Vec<_>>>()?,
    );
    for t in 1..n {
        for b in 0..bins {
            let y = bin_center(params, bins, b);
            transitions.push(
                actions
                    .iter()
                    .map(|&f| row(t, y, f))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    transitions.push(Vec::new());
    transitions.push(Vec::new());
    let mdp = augment_with_eta(RawMdp {
        num_actions: actions.len(),
        transitions,
        errors: vec![error],
        goals: vec![goal],
        start: vec![(0, 1.0)],
    })?;
    Ok(FiniteTank {
        mdp,
        bins,
        params: params.clone(),
    })
}
