//! Episodic MDPs with error states.
//!
//! Every environment is viewed through its η-augmented form: error states (Φ) and
//! goal states (Γ) are terminal, and from either of them the next transition moves
//! to a single absorbing state η. The risk cost r̄ is 1 exactly on the Φ → η
//! transition, so the undiscounted sum of r̄ over an episode is a Bernoulli variable
//! whose mean is the probability of ever entering Φ.

use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateClass {
    Ordinary,
    Error,
    Goal,
    Absorbing,
}

impl StateClass {
    /// Error and goal states end control; the next step goes to η.
    pub fn is_terminal(self) -> bool {
        matches!(self, StateClass::Error | StateClass::Goal)
    }
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct Outcome<S> {
    pub next: S,
    pub reward: f64,
    pub risk_cost: f64,
    pub class: StateClass,
}

/// r̄ for a transition out of a state of class `from` into a state of class `to`.
pub fn risk_cost(from: StateClass, to: StateClass) -> f64 {
    if from == StateClass::Error && to == StateClass::Absorbing {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSample<S> {
    pub state: S,
    pub action: usize,
    pub next_state: S,
    pub reward: f64,
    pub risk_cost: f64,
    pub next_class: StateClass,
}

impl<S> TransitionSample<S> {
    /// True when the successor is η, i.e. there is nothing to bootstrap from.
    pub fn terminal(&self) -> bool {
        self.next_class == StateClass::Absorbing
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeTrace<S> {
    pub start: S,
    pub steps: Vec<TransitionSample<S>>,
    /// Σ γᵗ rₜ over the recorded steps.
    pub return_value: f64,
    /// Σ r̄ᵢ (undiscounted); always 0 or 1.
    pub risk_return: f64,
    /// The step budget ran out before η was reached. Counted as risk 0.
    pub truncated: bool,
}

impl<S: fmt::Display> EpisodeTrace<S> {
    /// Debug dump: `step,state,action,next_state,r,r_bar`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "state", "action", "next_state", "r", "r_bar"])?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.state.to_string(),
                s.action.to_string(),
                s.next_state.to_string(),
                s.reward.to_string(),
                s.risk_cost.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distribution p_x over the states of interest X'.
#[derive(Clone, Debug)]
pub struct StartDistribution<S> {
    support: Vec<(S, f64)>,
}

impl<S: Clone> StartDistribution<S> {
    pub fn new(support: Vec<(S, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::BadStartDistribution("empty support".into()));
        }
        if let Some((_, p)) = support.iter().find(|(_, p)| !(*p >= 0.0)) {
            return Err(Error::BadStartDistribution(format!("negative probability {p}")));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadStartDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { support })
    }

    pub fn uniform(states: Vec<S>) -> Result<Self> {
        let p = 1.0 / states.len().max(1) as f64;
        Self::new(states.into_iter().map(|s| (s, p)).collect())
    }

    pub fn point(state: S) -> Self {
        Self {
            support: vec![(state, 1.0)],
        }
    }

    pub fn support(&self) -> &[(S, f64)] {
        &self.support
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.support.iter().map(|(s, _)| s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        if self.support.len() == 1 {
            return self.support[0].0.clone();
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, p) in &self.support {
            acc += p;
            if u < acc {
                return s.clone();
            }
        }
        self.support[self.support.len() - 1].0.clone()
    }
}

/// The environment contract shared by the finite and continuous problems.
pub trait Environment {
    type State: Clone;

    fn num_actions(&self) -> usize;

    fn start_distribution(&self) -> &StartDistribution<Self::State>;

    /// Prepares an episode beginning in `start`. Environments with per-episode
    /// randomness (the tank's inflow draw) resample it here.
    fn begin<R: Rng + ?Sized>(&self, start: &Self::State, _rng: &mut R) -> Self::State {
        start.clone()
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State {
        let start = self.start_distribution().sample(rng);
        self.begin(&start, rng)
    }

    fn class(&self, state: &Self::State) -> StateClass;

    /// One transition. From Φ or Γ this must move to η with r = 0 and r̄ from
    /// [`risk_cost`]; η loops on itself with zero signals.
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: usize, rng: &mut R) -> Outcome<Self::State>;
}

/// Stationary deterministic policy.
pub trait Policy<S> {
    fn action(&self, state: &S) -> usize;
}

impl<S, F: Fn(&S) -> usize> Policy<S> for F {
    fn action(&self, state: &S) -> usize {
        self(state)
    }
}

/// A policy stored as an explicit state → action table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitPolicy {
    pub actions: Vec<usize>,
}

impl ExplicitPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![action; num_states],
        }
    }
}

impl Policy<usize> for ExplicitPolicy {
    fn action(&self, state: &usize) -> usize {
        self.actions[*state]
    }
}

/// Simulates one episode from a freshly reset start state.
pub fn run_episode<E, P, R>(
    env: &E,
    policy: &P,
    rng: &mut R,
    max_steps: usize,
    gamma: f64,
) -> EpisodeTrace<E::State>
where
    E: Environment,
    P: Policy<E::State> + ?Sized,
    R: Rng + ?Sized,
{
    let start = env.reset(rng);
    run_from(env, start, policy, rng, max_steps, gamma)
}

/// Simulates one episode beginning in `start` (after [`Environment::begin`]).
pub fn run_episode_from<E, P, R>(
    env: &E,
    start: &E::State,
    policy: &P,
    rng: &mut R,
    max_steps: usize,
    gamma: f64,
) -> EpisodeTrace<E::State>
where
    E: Environment,
    P: Policy<E::State> + ?Sized,
    R: Rng + ?Sized,
{
    let start = env.begin(start, rng);
    run_from(env, start, policy, rng, max_steps, gamma)
}

fn run_from<E, P, R>(
    env: &E,
    start: E::State,
    policy: &P,
    rng: &mut R,
    max_steps: usize,
    gamma: f64,
) -> EpisodeTrace<E::State>
where
    E: Environment,
    P: Policy<E::State> + ?Sized,
    R: Rng + ?Sized,
{
    let mut steps = Vec::new();
    let mut state = start.clone();
    let mut discount = 1.0;
    let mut return_value = 0.0;
    let mut risk_return = 0.0;
    let mut reached_eta = env.class(&state) == StateClass::Absorbing;
    // The Φ/Γ → η step is always taken so that a truncated run cannot hide an
    // error that was already entered.
    while !reached_eta && (steps.len() < max_steps || env.class(&state).is_terminal()) {
        let action = policy.action(&state);
        let out = env.step(&state, action, rng);
        return_value += discount * out.reward;
        risk_return += out.risk_cost;
        discount *= gamma;
        reached_eta = out.class == StateClass::Absorbing;
        let next = out.next;
        steps.push(TransitionSample {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            next_state: next,
            reward: out.reward,
            risk_cost: out.risk_cost,
            next_class: out.class,
        });
    }
    let hits = steps.iter().filter(|s| s.risk_cost != 0.0).count();
    assert!(
        hits <= 1 && steps.iter().all(|s| s.risk_cost == 0.0 || s.risk_cost == 1.0),
        "risk return of an episode must be 0 or 1"
    );
    EpisodeTrace {
        start,
        steps,
        return_value,
        risk_return,
        truncated: !reached_eta,
    }
}

/// One possible successor of a (state, action) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A finite MDP before the η construction: terminal states are declared by index
/// and need no outgoing transitions.
#[derive(Clone, Debug, Default)]
pub struct RawMdp {
    pub num_actions: usize,
    /// `transitions[s][a]`; ignored for error and goal states.
    pub transitions: Vec<Vec<Vec<Branch>>>,
    pub errors: Vec<usize>,
    pub goals: Vec<usize>,
    /// States of interest with their p_x. Empty means uniform over X − Φ.
    pub start: Vec<(usize, f64)>,
}

/// η-augmented finite MDP.
#[derive(Clone, Debug)]
pub struct FiniteMdp {
    num_actions: usize,
    classes: Vec<StateClass>,
    transitions: Vec<Vec<Vec<Branch>>>,
    eta: usize,
    start: StartDistribution<usize>,
}

/// Appends η, routes every Φ ∪ Γ state into it and makes η self-looping.
pub fn augment_with_eta(raw: RawMdp) -> Result<FiniteMdp> {
    let n = raw.transitions.len();
    if raw.num_actions == 0 {
        return Err(Error::InvalidMdp("no actions".into()));
    }
    let mut classes = vec![StateClass::Ordinary; n];
    for &e in &raw.errors {
        if e >= n {
            return Err(Error::InvalidMdp(format!("error state {e} out of range")));
        }
        classes[e] = StateClass::Error;
    }
    for &g in &raw.goals {
        if g >= n {
            return Err(Error::InvalidMdp(format!("goal state {g} out of range")));
        }
        if classes[g] == StateClass::Error {
            return Err(Error::OverlappingTerminals(g));
        }
        classes[g] = StateClass::Goal;
    }
    let eta = n;
    let to_eta = vec![
        vec![Branch {
            next: eta,
            prob: 1.0,
            reward: 0.0
        }];
        raw.num_actions
    ];
    let mut transitions = Vec::with_capacity(n + 1);
    for (s, rows) in raw.transitions.into_iter().enumerate() {
        if classes[s].is_terminal() {
            transitions.push(to_eta.clone());
            continue;
        }
        if rows.len() != raw.num_actions {
            return Err(Error::InvalidMdp(format!(
                "state {s} has {} action rows, expected {}",
                rows.len(),
                raw.num_actions
            )));
        }
        for (a, row) in rows.iter().enumerate() {
            if let Some(b) = row.iter().find(|b| b.next >= n || b.prob < 0.0) {
                return Err(Error::InvalidMdp(format!(
                    "state {s}, action {a}: bad branch to {} with p={}",
                    b.next, b.prob
                )));
            }
            let sum: f64 = row.iter().map(|b| b.prob).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::BadTransitionRow {
                    state: s,
                    action: a,
                    sum,
                });
            }
        }
        transitions.push(rows);
    }
    classes.push(StateClass::Absorbing);
    transitions.push(to_eta);

    let start = if raw.start.is_empty() {
        StartDistribution::uniform((0..n).filter(|&s| classes[s] != StateClass::Error).collect())?
    } else {
        if let Some(&(s, _)) = raw.start.iter().find(|(s, _)| *s >= n) {
            return Err(Error::BadStartDistribution(format!("state {s} out of range")));
        }
        StartDistribution::new(raw.start)?
    };

    Ok(FiniteMdp {
        num_actions: raw.num_actions,
        classes,
        transitions,
        eta,
        start,
    })
}

impl FiniteMdp {
    pub fn num_states(&self) -> usize {
        self.classes.len()
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn classes(&self) -> &[StateClass] {
        &self.classes
    }

    pub fn branches(&self, state: usize, action: usize) -> &[Branch] {
        &self.transitions[state][action]
    }

    pub fn start(&self) -> &StartDistribution<usize> {
        &self.start
    }

    pub fn with_start(mut self, start: StartDistribution<usize>) -> Self {
        self.start = start;
        self
    }

    pub fn states_of(&self, class: StateClass) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&s| self.classes[s] == class)
            .collect()
    }

    pub fn risk_cost(&self, state: usize, next: usize) -> f64 {
        risk_cost(self.classes[state], self.classes[next])
    }

    /// Number of transitions (over distinct source states) that enter η from Φ ∪ Γ.
    pub fn transitions_into_eta(&self) -> usize {
        (0..self.eta)
            .filter(|&s| self.transitions[s][0].iter().any(|b| b.next == self.eta))
            .count()
    }
}

impl Environment for FiniteMdp {
    type State = usize;

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn start_distribution(&self) -> &StartDistribution<usize> {
        &self.start
    }

    fn class(&self, state: &usize) -> StateClass {
        self.classes[*state]
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: usize, rng: &mut R) -> Outcome<usize> {
        let row = &self.transitions[*state][action];
        let branch = if row.len() == 1 {
            row[0]
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            *row.iter()
                .find(|b| {
                    acc += b.prob;
                    u < acc
                })
                .unwrap_or(&row[row.len() - 1])
        };
        Outcome {
            next: branch.next,
            reward: branch.reward,
            risk_cost: self.risk_cost(*state, branch.next),
            class: self.classes[branch.next],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 0 → Φ(1) w.p. q, Γ(2) otherwise; reward 1 on entering the goal.
    pub(crate) fn chain(q: f64) -> FiniteMdp {
        augment_with_eta(RawMdp {
            num_actions: 1,
            transitions: vec![
                vec![vec![
                    Branch {
                        next: 1,
                        prob: q,
                        reward: 0.0,
                    },
                    Branch {
                        next: 2,
                        prob: 1.0 - q,
                        reward: 1.0,
                    },
                ]],
                vec![],
                vec![],
            ],
            errors: vec![1],
            goals: vec![2],
            start: vec![(0, 1.0)],
        })
        .unwrap()
    }

    #[test]
    fn overlapping_terminals_rejected() {
        let raw = RawMdp {
            num_actions: 1,
            transitions: vec![vec![], vec![]],
            errors: vec![1],
            goals: vec![1],
            start: vec![(0, 1.0)],
        };
        assert!(matches!(
            augment_with_eta(raw),
            Err(Error::OverlappingTerminals(1))
        ));
    }

    #[test]
    fn bad_row_rejected() {
        let raw = RawMdp {
            num_actions: 1,
            transitions: vec![vec![vec![Branch {
                next: 0,
                prob: 0.5,
                reward: 0.0,
            }]]],
            ..Default::default()
        };
        assert!(matches!(
            augment_with_eta(raw),
            Err(Error::BadTransitionRow { .. })
        ));
    }

    #[test]
    fn eta_is_unique_and_self_looping() {
        let mdp = chain(0.3);
        assert_eq!(mdp.states_of(StateClass::Absorbing), vec![3]);
        assert_eq!(
            mdp.branches(3, 0),
            &[Branch {
                next: 3,
                prob: 1.0,
                reward: 0.0
            }]
        );
        assert_eq!(mdp.transitions_into_eta(), 2);
        assert_eq!(mdp.risk_cost(1, 3), 1.0);
        assert_eq!(mdp.risk_cost(2, 3), 0.0);
    }

    #[test]
    fn start_in_error_state() {
        let mdp = chain(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_episode_from(&mdp, &1, &|_: &usize| 0, &mut rng, 10, 0.9);
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.risk_return, 1.0);
        assert_eq!(t.return_value, 0.0);
        assert!(!t.truncated);
    }

    #[test]
    fn start_in_goal_state() {
        let mdp = chain(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_episode_from(&mdp, &2, &|_: &usize| 0, &mut rng, 10, 0.9);
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.risk_return, 0.0);
        assert_eq!(t.return_value, 0.0);
    }

    #[test]
    fn no_error_states_means_no_risk() {
        let mdp = augment_with_eta(RawMdp {
            num_actions: 1,
            transitions: vec![
                vec![vec![
                    Branch {
                        next: 0,
                        prob: 0.5,
                        reward: 0.0,
                    },
                    Branch {
                        next: 1,
                        prob: 0.5,
                        reward: 1.0,
                    },
                ]],
                vec![],
            ],
            errors: vec![],
            goals: vec![1],
            start: vec![],
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = run_episode(&mdp, &|_: &usize| 0, &mut rng, 1000, 1.0);
            assert!(t.steps.iter().all(|s| s.risk_cost == 0.0));
            assert_eq!(t.risk_return, 0.0);
        }
    }

    #[test]
    fn truncation_is_flagged() {
        // a state that only loops on itself
        let mdp = augment_with_eta(RawMdp {
            num_actions: 1,
            transitions: vec![vec![vec![Branch {
                next: 0,
                prob: 1.0,
                reward: 1.0,
            }]]],
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_episode(&mdp, &|_: &usize| 0, &mut rng, 5, 0.5);
        assert!(t.truncated);
        assert_eq!(t.steps.len(), 5);
        assert!((t.return_value - (1.0 + 0.5 + 0.25 + 0.125 + 0.0625)).abs() < 1e-15);
        assert_eq!(t.risk_return, 0.0);
    }

    #[test]
    fn start_distribution_validation() {
        assert!(StartDistribution::new(vec![(0usize, 0.5), (1, 0.4)]).is_err());
        assert!(StartDistribution::new(vec![(0usize, -0.1), (1, 1.1)]).is_err());
        assert!(StartDistribution::<usize>::new(vec![]).is_err());
        assert!(StartDistribution::uniform(vec![1usize, 2, 3]).is_ok());
    }

    #[test]
    fn trace_csv_has_header() {
        let mdp = chain(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_episode(&mdp, &|_: &usize| 0, &mut rng, 10, 1.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,state,action,next_state,r,r_bar\n0,0,0,1,0,0\n1,1,0,3,0,1\n"
        );
    }
}
