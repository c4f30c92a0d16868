//! Feed tank upstream of a distillation column.
//!
//! The level follows `y' = y + g·(F_Σ − F)` with `g = A⁻¹Δt`; in the full problem
//! the outflow concentrations mix with the two inflows. Leaving any admissible
//! interval at steps `1..=N` is an error state.

mod encoding;
mod env;
mod finite;
mod inflow;
mod layout;

pub use encoding::StateEncoding;
pub use env::{TankEnv, TankEpisode, TankLogRow};
pub use finite::{finite_approximation, FiniteTank};
pub use inflow::{InflowConfig, InflowDraw, InflowModel};
pub use layout::RbfLayout;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TankParams {
    pub horizon: usize,
    pub y0: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// A⁻¹Δt
    pub gain: f64,
    pub f_spec: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub num_actions: usize,
    pub c0: [f64; 2],
    pub c_min: [f64; 2],
    pub c_max: [f64; 2],
}

impl Default for TankParams {
    fn default() -> Self {
        Self {
            horizon: 16,
            y0: 0.4,
            y_min: 0.25,
            y_max: 0.75,
            gain: 0.1,
            f_spec: 0.8,
            f_min: 0.55,
            f_max: 1.05,
            num_actions: 21,
            c0: [0.2, 0.8],
            c_min: [0.1, 0.6],
            c_max: [0.4, 0.9],
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::config("tank.horizon", "must be at least 2"));
        }
        if !(0.0 < self.y_min && self.y_min < self.y_max) {
            return Err(Error::config("tank.y_min", "need 0 < y_min < y_max"));
        }
        if !(self.y_min..=self.y_max).contains(&self.y0) {
            return Err(Error::config(
                "tank.y0",
                "initial level outside the admissible interval",
            ));
        }
        if !(self.f_min < self.f_max) || self.num_actions < 2 {
            return Err(Error::config(
                "tank.actions",
                "need f_min < f_max and at least two actions",
            ));
        }
        for i in 0..2 {
            if !(self.c_min[i] < self.c_max[i]) {
                return Err(Error::config("tank.c_min", "concentration bounds out of order"));
            }
        }
        Ok(())
    }

    /// The discrete outflow rates. A value within 1e-12 of F_spec is snapped onto it.
    pub fn actions(&self) -> Vec<f64> {
        let n = self.num_actions - 1;
        (0..=n)
            .map(|i| {
                let f = self.f_min + (self.f_max - self.f_min) * i as f64 / n as f64;
                if (f - self.f_spec).abs() < 1e-12 {
                    self.f_spec
                } else {
                    f
                }
            })
            .collect()
    }

    pub fn action(&self, index: usize) -> f64 {
        self.actions()[index]
    }

    pub fn spec_action(&self) -> Option<usize> {
        self.actions().iter().position(|&f| f == self.f_spec)
    }

    pub fn reward(&self, flow: f64) -> f64 {
        -(flow - self.f_spec) * (flow - self.f_spec)
    }

    pub fn initial_state(&self) -> TankState {
        TankState {
            t: 0,
            y: self.y0,
            c1: self.c0[0],
            c2: self.c0[1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub t: usize,
    pub y: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Which constraints and dynamics are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantMode {
    /// Level only, cumulative inflow.
    Level,
    /// Level and both concentrations, two inflows.
    LevelConcentration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    LevelLow,
    LevelHigh,
    Concentration1,
    Concentration2,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::LevelLow => "y_min",
            Violation::LevelHigh => "y_max",
            Violation::Concentration1 => "c1",
            Violation::Concentration2 => "c2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantStep {
    pub next: TankState,
    pub reward: f64,
    pub violation: Option<Violation>,
}

/// The constraint violated by `state`, if any. Step 0 is never checked.
pub fn check_constraints(params: &TankParams, state: &TankState, mode: PlantMode) -> Option<Violation> {
    if state.t == 0 {
        return None;
    }
    if state.y < params.y_min {
        return Some(Violation::LevelLow);
    }
    if state.y > params.y_max {
        return Some(Violation::LevelHigh);
    }
    if mode == PlantMode::LevelConcentration {
        if !(params.c_min[0]..=params.c_max[0]).contains(&state.c1) {
            return Some(Violation::Concentration1);
        }
        if !(params.c_min[1]..=params.c_max[1]).contains(&state.c2) {
            return Some(Violation::Concentration2);
        }
    }
    None
}

/// One plant transition under outflow `flow` with the inflows of `draw` at `state.t`.
pub fn tank_step(
    params: &TankParams,
    state: &TankState,
    flow: f64,
    draw: &InflowDraw,
    mode: PlantMode,
) -> Result<PlantStep> {
    let t = state.t;
    if t >= params.horizon || t >= draw.flows.len() {
        return Err(Error::config("tank.t", format!("step {t} is past the horizon")));
    }
    let total = draw.flows[t];
    let mut next = TankState {
        t: t + 1,
        y: state.y + params.gain * (total - flow),
        c1: state.c1,
        c2: state.c2,
    };
    if mode == PlantMode::LevelConcentration {
        if state.y <= 0.0 {
            return Err(Error::DomainFault(state.y));
        }
        let k = params.gain / state.y;
        let fj = 0.5 * total;
        let (mut d1, mut d2) = (0.0, 0.0);
        for j in 0..2 {
            d1 += fj * (draw.inflow_concentration(t, j, 0) - state.c1);
            d2 += fj * (draw.inflow_concentration(t, j, 1) - state.c2);
        }
        next.c1 = state.c1 + k * d1;
        next.c2 = state.c2 + k * d2;
    }
    Ok(PlantStep {
        next,
        reward: params.reward(flow),
        violation: check_constraints(params, &next, mode),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_draw(params: &TankParams) -> InflowDraw {
        let model = InflowModel::new(InflowConfig::default()).unwrap();
        InflowDraw::deterministic(model.config().mean.clone(), vec![[0.25, 0.25]; params.horizon])
    }

    #[test]
    fn action_grid_contains_spec() {
        let p = TankParams::default();
        let a = p.actions();
        assert_eq!(a.len(), 21);
        assert_eq!(a[10], 0.8);
        assert_eq!(p.spec_action(), Some(10));
        assert!((a[1] - a[0] - 0.025).abs() < 1e-12);
        assert_eq!(a[0], 0.55);
        assert_eq!(a[20], 1.05);
    }

    #[test]
    fn spec_flow_has_zero_reward() {
        assert_eq!(TankParams::default().reward(0.8), 0.0);
        assert!((TankParams::default().reward(0.9) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn level_arithmetic() {
        let p = TankParams::default();
        let draw = mean_draw(&p);
        let s = tank_step(&p, &p.initial_state(), 0.8, &draw, PlantMode::Level).unwrap();
        assert!((s.next.y - 0.5).abs() < 1e-15);
        assert_eq!(s.next.t, 1);
        assert_eq!(s.violation, None);
    }

    #[test]
    fn minimum_outflow_overflows_early() {
        let p = TankParams::default();
        let draw = mean_draw(&p);
        let mut s = p.initial_state();
        let mut hit = None;
        for _ in 0..p.horizon {
            let out = tank_step(&p, &s, 0.55, &draw, PlantMode::Level).unwrap();
            s = out.next;
            if let Some(v) = out.violation {
                hit = Some((s.t, v));
                break;
            }
        }
        let (t, v) = hit.expect("violation");
        assert_eq!(t, 4);
        assert_eq!(v, Violation::LevelHigh);
    }

    #[test]
    fn concentration_update_matches_formula() {
        let p = TankParams::default();
        let draw = InflowDraw::deterministic(vec![1.0; 16], vec![[0.3, 0.2]; 16]);
        let s = tank_step(&p, &p.initial_state(), 0.8, &draw, PlantMode::LevelConcentration).unwrap();
        let k = 0.1 / 0.4;
        let c1 = 0.2 + k * (0.5 * (0.3 - 0.2) + 0.5 * (0.2 - 0.2));
        let c2 = 0.8 + k * (0.5 * (0.7 - 0.8) + 0.5 * (0.8 - 0.8));
        assert_eq!(s.next.c1, c1);
        assert_eq!(s.next.c2, c2);
    }

    #[test]
    fn nonpositive_level_is_a_domain_fault() {
        let p = TankParams::default();
        let draw = mean_draw(&p);
        let s = TankState {
            t: 1,
            y: 0.0,
            c1: 0.2,
            c2: 0.8,
        };
        assert!(matches!(
            tank_step(&p, &s, 0.8, &draw, PlantMode::LevelConcentration),
            Err(Error::DomainFault(_))
        ));
        assert!(tank_step(&p, &s, 0.8, &draw, PlantMode::Level).is_ok());
    }

    #[test]
    fn step_zero_is_not_checked() {
        let p = TankParams::default();
        let s = TankState {
            t: 0,
            y: 0.1,
            c1: 0.2,
            c2: 0.8,
        };
        assert_eq!(check_constraints(&p, &s, PlantMode::Level), None);
        let s = TankState { t: 1, ..s };
        assert_eq!(
            check_constraints(&p, &s, PlantMode::Level),
            Some(Violation::LevelLow)
        );
    }
}
