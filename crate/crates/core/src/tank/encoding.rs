use serde::{Deserialize, Serialize};

use super::{TankEpisode, TankParams};

/// How the learner sees a tank state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateEncoding {
    /// (t, y)
    ClcY,
    /// (t, y(t), y(t−1), …, y(t−k)), missing past values are 0
    ClcYHist(usize),
    /// (t, u_{t−1}, …, u_0), zero-padded to length N
    Olc,
    /// (t, y, c₁, c₂)
    ClcYc,
}

impl StateEncoding {
    pub fn dim(&self, params: &TankParams) -> usize {
        match *self {
            StateEncoding::ClcY => 2,
            StateEncoding::ClcYHist(k) => 2 + k,
            StateEncoding::Olc => params.horizon,
            StateEncoding::ClcYc => 4,
        }
    }

    /// Unscaled vector in problem units.
    pub fn raw(&self, ep: &TankEpisode, params: &TankParams) -> Vec<f64> {
        self.build(ep, params, |_, v| v)
    }

    /// Network input: t/N, levels and concentrations scaled by their admissible
    /// intervals, flows by the action interval. Padding stays 0.
    pub fn features(&self, ep: &TankEpisode, params: &TankParams) -> Vec<f64> {
        self.build(ep, params, |kind, v| match kind {
            Slot::Time => v / params.horizon as f64,
            Slot::Level => (v - params.y_min) / (params.y_max - params.y_min),
            Slot::Flow => (v - params.f_min) / (params.f_max - params.f_min),
            Slot::Conc(i) => (v - params.c_min[i]) / (params.c_max[i] - params.c_min[i]),
        })
    }

    fn build(&self, ep: &TankEpisode, params: &TankParams, scale: impl Fn(Slot, f64) -> f64) -> Vec<f64> {
        let s = &ep.plant;
        let mut out = Vec::with_capacity(self.dim(params));
        out.push(scale(Slot::Time, s.t as f64));
        match *self {
            StateEncoding::ClcY => out.push(scale(Slot::Level, s.y)),
            StateEncoding::ClcYHist(k) => {
                out.push(scale(Slot::Level, s.y));
                for back in 1..=k {
                    match s.t.checked_sub(back) {
                        Some(i) => out.push(scale(Slot::Level, ep.levels[i])),
                        None => out.push(0.0),
                    }
                }
            }
            StateEncoding::Olc => {
                let actions = params.actions();
                for &a in ep.actions.iter().rev().take(params.horizon - 1) {
                    out.push(scale(Slot::Flow, actions[a]));
                }
                out.resize(params.horizon, 0.0);
            }
            StateEncoding::ClcYc => {
                out.push(scale(Slot::Level, s.y));
                out.push(scale(Slot::Conc(0), s.c1));
                out.push(scale(Slot::Conc(1), s.c2));
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Time,
    Level,
    Flow,
    Conc(usize),
}
