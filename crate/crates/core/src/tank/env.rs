use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::{tank_step, InflowDraw, InflowModel, PlantMode, TankParams, TankState, Violation};
use crate::error::{Error, Result};
use crate::mdp::{risk_cost, Environment, EpisodeTrace, Outcome, StartDistribution, StateClass};

/// Everything the simulator knows during an episode.
#[derive(Clone, Debug)]
pub struct TankEpisode {
    pub plant: TankState,
    /// y(0), …, y(t)
    pub levels: Vec<f64>,
    /// Action indices u_0, …, u_{t−1}.
    pub actions: Vec<usize>,
    pub class: StateClass,
    pub violation: Option<Violation>,
    draw: Option<Arc<InflowDraw>>,
}

impl TankEpisode {
    pub fn draw(&self) -> Option<&InflowDraw> {
        self.draw.as_deref()
    }
}

#[derive(Clone, Debug)]
pub struct TankEnv {
    params: TankParams,
    inflow: InflowModel,
    mode: PlantMode,
    flows: Vec<f64>,
    start: StartDistribution<TankEpisode>,
}

impl TankEnv {
    pub fn new(params: TankParams, inflow: InflowModel, mode: PlantMode) -> Result<Self> {
        params.validate()?;
        if inflow.horizon() != params.horizon {
            return Err(Error::config(
                "inflow.mean",
                format!(
                    "has {} entries for a horizon of {}",
                    inflow.horizon(),
                    params.horizon
                ),
            ));
        }
        let initial = params.initial_state();
        let start = StartDistribution::point(TankEpisode {
            plant: initial,
            levels: vec![initial.y],
            actions: Vec::new(),
            class: StateClass::Ordinary,
            violation: None,
            draw: None,
        });
        Ok(Self {
            flows: params.actions(),
            params,
            inflow,
            mode,
            start,
        })
    }

    pub fn params(&self) -> &TankParams {
        &self.params
    }

    pub fn inflow(&self) -> &InflowModel {
        &self.inflow
    }

    pub fn mode(&self) -> PlantMode {
        self.mode
    }

    pub fn flow(&self, action: usize) -> f64 {
        self.flows[action]
    }

    /// The start state with a given inflow realization, for replay.
    pub fn start_with_draw(&self, draw: InflowDraw) -> TankEpisode {
        let mut ep = self.start.support()[0].0.clone();
        ep.draw = Some(Arc::new(draw));
        ep
    }

    /// Per-step rows of an episode: one row per decision, plus a final row with the
    /// terminal level and the violated constraint if any.
    pub fn log_rows(&self, trace: &EpisodeTrace<TankEpisode>) -> Vec<TankLogRow> {
        let mut rows = Vec::new();
        let mut last = &trace.start;
        for s in &trace.steps {
            if s.state.class != StateClass::Ordinary {
                break;
            }
            let p = &s.state.plant;
            rows.push(TankLogRow {
                t: p.t,
                inflow: s.state.draw().map(|d| d.flows[p.t]),
                flow: Some(self.flows[s.action]),
                y: p.y,
                c1: p.c1,
                c2: p.c2,
                reward: Some(s.reward),
                violation: None,
            });
            last = &s.next_state;
        }
        if last.class.is_terminal() {
            let p = &last.plant;
            rows.push(TankLogRow {
                t: p.t,
                inflow: None,
                flow: None,
                y: p.y,
                c1: p.c1,
                c2: p.c2,
                reward: None,
                violation: last.violation.map(Violation::name),
            });
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TankLogRow {
    pub t: usize,
    pub inflow: Option<f64>,
    pub flow: Option<f64>,
    pub y: f64,
    pub c1: f64,
    pub c2: f64,
    pub reward: Option<f64>,
    pub violation: Option<&'static str>,
}

impl TankLogRow {
    pub fn write_csv<W: Write>(rows: &[TankLogRow], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "F_sigma", "F", "y", "c1", "c2", "r", "violation"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in rows {
            w.write_record([
                r.t.to_string(),
                opt(r.inflow),
                opt(r.flow),
                r.y.to_string(),
                r.c1.to_string(),
                r.c2.to_string(),
                opt(r.reward),
                r.violation.unwrap_or("").to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Environment for TankEnv {
    type State = TankEpisode;

    fn num_actions(&self) -> usize {
        self.flows.len()
    }

    fn start_distribution(&self) -> &StartDistribution<TankEpisode> {
        &self.start
    }

    fn begin<R: Rng + ?Sized>(&self, start: &TankEpisode, rng: &mut R) -> TankEpisode {
        let mut ep = start.clone();
        ep.draw = Some(Arc::new(self.inflow.sample(rng)));
        ep
    }

    fn class(&self, state: &TankEpisode) -> StateClass {
        state.class
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &TankEpisode,
        action: usize,
        _rng: &mut R,
    ) -> Outcome<TankEpisode> {
        if state.class != StateClass::Ordinary {
            let mut next = state.clone();
            next.class = StateClass::Absorbing;
            return Outcome {
                next,
                reward: 0.0,
                risk_cost: risk_cost(state.class, StateClass::Absorbing),
                class: StateClass::Absorbing,
            };
        }
        let draw = state
            .draw
            .as_ref()
            .expect("episode started through Environment::begin");
        let flow = self.flows[action];
        let out = tank_step(&self.params, &state.plant, flow, draw, self.mode)
            .expect("ordinary states keep the level inside positive bounds");
        let class = if out.violation.is_some() {
            StateClass::Error
        } else if out.next.t >= self.params.horizon {
            StateClass::Goal
        } else {
            StateClass::Ordinary
        };
        let mut next = state.clone();
        next.plant = out.next;
        next.levels.push(out.next.y);
        next.actions.push(action);
        next.class = class;
        next.violation = out.violation;
        Outcome {
            next,
            reward: out.reward,
            risk_cost: 0.0,
            class,
        }
    }
}
