//! Stochastic grid world with error cells along two edges.
//!
//! Cells are `(x, y)` with `x` horizontal, `y` vertical, both starting at 1 in the
//! bottom-left corner. State indices are row-major from the bottom row; η is the
//! last index.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    augment_with_eta, Branch, Environment, ExplicitPolicy, FiniteMdp, Outcome, RawMdp, StartDistribution,
    StateClass,
};
use crate::oracle::ExactEvaluation;

pub type Cell = (usize, usize);

/// Action order: → ← ↑ ↓.
pub const MOVES: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub const ARROWS: [char; 4] = ['→', '←', '↑', '↓'];

/// How the slip probability mass is spread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlipModel {
    /// The slip mass goes to the three other directions equally.
    ThreeWay,
    /// The slip mass goes to all four directions equally, the intended one included.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub errors: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub slip: f64,
    pub slip_model: SlipModel,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub gamma: f64,
    pub omega: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        let mut errors: Vec<Cell> = (1..=6).map(|y| (1, y)).collect();
        errors.extend((2..=6).map(|x| (x, 1)));
        Self {
            width: 6,
            height: 6,
            errors,
            goals: vec![(2, 2), (6, 6)],
            slip: 0.21,
            slip_model: SlipModel::ThreeWay,
            goal_reward: 1.0,
            step_reward: 0.0,
            gamma: 0.9,
            omega: 0.13,
        }
    }
}

impl GridSpec {
    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, (x, y): Cell) -> usize {
        (y - 1) * self.width + (x - 1)
    }

    pub fn cell(&self, index: usize) -> Option<Cell> {
        (index < self.num_cells()).then(|| (index % self.width + 1, index / self.width + 1))
    }

    pub fn class_of(&self, cell: Cell) -> StateClass {
        if self.errors.contains(&cell) {
            StateClass::Error
        } else if self.goals.contains(&cell) {
            StateClass::Goal
        } else {
            StateClass::Ordinary
        }
    }

    /// Probability of actually moving in direction `dir` when `intended` is chosen.
    pub fn direction_prob(&self, intended: usize, dir: usize) -> f64 {
        match (self.slip_model, intended == dir) {
            (SlipModel::ThreeWay, true) => 1.0 - self.slip,
            (SlipModel::ThreeWay, false) => self.slip / 3.0,
            (SlipModel::Uniform, true) => 1.0 - self.slip + self.slip / 4.0,
            (SlipModel::Uniform, false) => self.slip / 4.0,
        }
    }

    /// Destination of a move; blocked moves stay put.
    pub fn shift(&self, (x, y): Cell, dir: usize) -> Cell {
        let (dx, dy) = MOVES[dir];
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 1 || ny < 1 || nx > self.width as isize || ny > self.height as isize {
            (x, y)
        } else {
            (nx as usize, ny as usize)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("grid", "empty grid"));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::config("grid.slip", "must lie in [0, 1]"));
        }
        for &(x, y) in self.errors.iter().chain(&self.goals) {
            if x < 1 || y < 1 || x > self.width || y > self.height {
                return Err(Error::config("grid", format!("cell ({x},{y}) is off the grid")));
            }
        }
        Ok(())
    }
}

/// One simulator step from a non-terminal cell.
pub fn grid_step<R: Rng + ?Sized>(
    spec: &GridSpec,
    cell: Cell,
    action: usize,
    rng: &mut R,
) -> (Cell, f64, StateClass) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut dir = 3;
    for d in 0..4 {
        acc += spec.direction_prob(action, d);
        if u < acc {
            dir = d;
            break;
        }
    }
    let next = spec.shift(cell, dir);
    let class = spec.class_of(next);
    let reward = if class == StateClass::Goal {
        spec.goal_reward
    } else {
        spec.step_reward
    };
    (next, reward, class)
}

/// The analytic transition kernel, η-augmented, with uniform p_x over X − (Φ ∪ {η}).
pub fn as_finite_mdp(spec: &GridSpec) -> Result<FiniteMdp> {
    spec.validate()?;
    let n = spec.num_cells();
    let mut transitions = Vec::with_capacity(n);
    for s in 0..n {
        let cell = spec.cell(s).expect("index in range");
        if spec.class_of(cell).is_terminal() {
            transitions.push(Vec::new());
            continue;
        }
        let rows = (0..4)
            .map(|a| {
                let mut row: Vec<Branch> = Vec::new();
                for d in 0..4 {
                    let p = spec.direction_prob(a, d);
                    if p == 0.0 {
                        continue;
                    }
                    let next = spec.shift(cell, d);
                    let j = spec.index(next);
                    let reward = if spec.class_of(next) == StateClass::Goal {
                        spec.goal_reward
                    } else {
                        spec.step_reward
                    };
                    match row.iter_mut().find(|b| b.next == j) {
                        Some(b) => b.prob += p,
                        None => row.push(Branch {
                            next: j,
                            prob: p,
                            reward,
                        }),
                    }
                }
                row
            })
            .collect();
        transitions.push(rows);
    }
    augment_with_eta(RawMdp {
        num_actions: 4,
        transitions,
        errors: spec.errors.iter().map(|&c| spec.index(c)).collect(),
        goals: spec.goals.iter().map(|&c| spec.index(c)).collect(),
        start: Vec::new(),
    })
}

/// Grid world simulator. Shares state numbering and start distribution with
/// [`as_finite_mdp`].
#[derive(Clone, Debug)]
pub struct GridWorld {
    spec: GridSpec,
    mdp: FiniteMdp,
}

impl GridWorld {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let mdp = as_finite_mdp(&spec)?;
        Ok(Self { spec, mdp })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn eta(&self) -> usize {
        self.mdp.eta()
    }

    pub fn label(&self, state: usize) -> String {
        match self.spec.cell(state) {
            Some((x, y)) => format!("({x},{y})"),
            None => "eta".to_string(),
        }
    }

    /// Arrow rendering, top row first; `E` marks error cells and `G` goals.
    pub fn render_policy(&self, policy: &ExplicitPolicy) -> String {
        let mut out = String::new();
        for y in (1..=self.spec.height).rev() {
            for x in 1..=self.spec.width {
                let c = match self.spec.class_of((x, y)) {
                    StateClass::Error => 'E',
                    StateClass::Goal => 'G',
                    _ => ARROWS[policy.actions[self.spec.index((x, y))]],
                };
                if x > 1 {
                    out.push(' ');
                }
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    /// `x,y,class,action,V,rho,rho_gamma` for every cell.
    pub fn write_cell_csv<W: Write>(
        &self,
        out: W,
        policy: &ExplicitPolicy,
        eval: &ExactEvaluation,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "class", "action", "V", "rho", "rho_gamma"])?;
        for s in 0..self.spec.num_cells() {
            let (x, y) = self.spec.cell(s).expect("cell index");
            let class = self.spec.class_of((x, y));
            let mut action = String::new();
            if class == StateClass::Ordinary {
                write!(action, "{}", ARROWS[policy.actions[s]]).ok();
            }
            w.write_record([
                x.to_string(),
                y.to_string(),
                format!("{class:?}"),
                action,
                eval.values[s].to_string(),
                eval.risks[s].to_string(),
                eval.discounted_risks[s].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Environment for GridWorld {
    type State = usize;

    fn num_actions(&self) -> usize {
        4
    }

    fn start_distribution(&self) -> &StartDistribution<usize> {
        self.mdp.start()
    }

    fn class(&self, state: &usize) -> StateClass {
        self.mdp.classes()[*state]
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: usize, rng: &mut R) -> Outcome<usize> {
        let class = self.class(state);
        if class.is_terminal() || class == StateClass::Absorbing {
            let eta = self.eta();
            return Outcome {
                next: eta,
                reward: 0.0,
                risk_cost: crate::mdp::risk_cost(class, StateClass::Absorbing),
                class: StateClass::Absorbing,
            };
        }
        let cell = self.spec.cell(*state).expect("non-η state is a cell");
        let (next, reward, next_class) = grid_step(&self.spec, cell, action, rng);
        Outcome {
            next: self.spec.index(next),
            reward,
            risk_cost: 0.0,
            class: next_class,
        }
    }
}
