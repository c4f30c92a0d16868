//! Exact dynamic programming on η-augmented finite MDPs.
//!
//! Policy risk is evaluated as the expected undiscounted sum of r̄, i.e. the linear
//! system ρ = r̄_π + γ̄ P_π ρ with ρ(η) = 0. Optimal policies are lexicographic: a
//! primary criterion is optimized exactly, and a secondary one breaks its ties.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{ExplicitPolicy, FiniteMdp, StartDistribution, StateClass};

/// Above this many states, policy evaluation iterates instead of factorizing.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct ExactEvaluation {
    /// V^π with discount γ.
    pub values: Vec<f64>,
    /// ρ^π with discount γ̄ (γ̄ = 1 gives the probability of entering Φ).
    pub risks: Vec<f64>,
    /// ρ_γ^π: r̄ discounted with γ.
    pub discounted_risks: Vec<f64>,
}

impl ExactEvaluation {
    /// 𝒱 = Σ p_x V(x).
    pub fn aggregate_value(&self, start: &StartDistribution<usize>) -> f64 {
        start.support().iter().map(|&(s, p)| p * self.values[s]).sum()
    }

    pub fn aggregate_risk(&self, start: &StartDistribution<usize>) -> f64 {
        start.support().iter().map(|&(s, p)| p * self.risks[s]).sum()
    }

    /// `state,V,rho,rho_gamma` rows.
    pub fn write_csv<W: Write>(&self, out: W, label: impl Fn(usize) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "V", "rho", "rho_gamma"])?;
        for s in 0..self.values.len() {
            w.write_record([
                label(s),
                self.values[s].to_string(),
                self.risks[s].to_string(),
                self.discounted_risks[s].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A per-step signal `reward_weight·r + risk_weight·r̄` accumulated with `discount`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criterion {
    pub reward_weight: f64,
    pub risk_weight: f64,
    pub discount: f64,
}

impl Criterion {
    pub fn value(gamma: f64) -> Self {
        Self {
            reward_weight: 1.0,
            risk_weight: 0.0,
            discount: gamma,
        }
    }

    /// Maximizing this minimizes risk.
    pub fn neg_risk(gamma_bar: f64) -> Self {
        Self {
            reward_weight: 0.0,
            risk_weight: -1.0,
            discount: gamma_bar,
        }
    }

    /// ξ·r − r̄.
    pub fn weighted(xi: f64, gamma: f64) -> Self {
        Self {
            reward_weight: xi,
            risk_weight: -1.0,
            discount: gamma,
        }
    }

    fn backup(&self, mdp: &FiniteMdp, s: usize, a: usize, v: &[f64]) -> f64 {
        mdp.branches(s, a)
            .iter()
            .map(|b| {
                let signal = self.reward_weight * b.reward + self.risk_weight * mdp.risk_cost(s, b.next);
                b.prob * (signal + self.discount * v[b.next])
            })
            .sum()
    }
}

/// Expected discounted sum of `signal(s, branch)` under a fixed policy.
fn policy_fixed_point(
    mdp: &FiniteMdp,
    policy: &ExplicitPolicy,
    criterion: Criterion,
    tol: f64,
    what: &'static str,
) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    if n <= DIRECT_SOLVE_LIMIT {
        solve_direct(mdp, policy, criterion)
    } else {
        solve_iterative(mdp, policy, criterion, tol, what)
    }
}

fn solve_direct(mdp: &FiniteMdp, policy: &ExplicitPolicy, c: Criterion) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let eta = mdp.eta();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        if s == eta {
            continue;
        }
        let act = policy.actions[s];
        for b in mdp.branches(s, act) {
            let signal = c.reward_weight * b.reward + c.risk_weight * mdp.risk_cost(s, b.next);
            rhs[s] += b.prob * signal;
            if b.next != eta {
                a[(s, b.next)] -= c.discount * b.prob;
            }
        }
    }
    let x = a.lu().solve(&rhs).ok_or(Error::Singular(
        "policy evaluation system (policy may be improper)",
    ))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("policy evaluation produced non-finite values"));
    }
    Ok(x.iter().copied().collect())
}

fn solve_iterative(
    mdp: &FiniteMdp,
    policy: &ExplicitPolicy,
    c: Criterion,
    tol: f64,
    what: &'static str,
) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut worst = (0.0, 0);
    for _ in 0..MAX_SWEEPS {
        worst = (0.0, 0);
        // Gauss-Seidel sweep
        for s in 0..n {
            if s == mdp.eta() {
                continue;
            }
            let new = c.backup(mdp, s, policy.actions[s], &v);
            let d = (new - v[s]).abs();
            if d > worst.0 {
                worst = (d, s);
            }
            v[s] = new;
        }
        if worst.0 < tol {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: MAX_SWEEPS,
        residual: worst.0,
        state: worst.1,
    })
}

/// Values, risks and discounted risks of a stationary deterministic policy.
///
/// With `gamma == 1` or `gamma_bar == 1` the policy must be proper.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    policy: &ExplicitPolicy,
    gamma: f64,
    gamma_bar: f64,
    tol: f64,
) -> Result<ExactEvaluation> {
    check_discount(gamma)?;
    check_discount(gamma_bar)?;
    if policy.actions.len() != mdp.num_states() {
        return Err(Error::InvalidMdp(format!(
            "policy covers {} states, MDP has {}",
            policy.actions.len(),
            mdp.num_states()
        )));
    }
    let values = policy_fixed_point(mdp, policy, Criterion::value(gamma), tol, "value evaluation")?;
    let risks = neg(policy_fixed_point(
        mdp,
        policy,
        Criterion::neg_risk(gamma_bar),
        tol,
        "risk evaluation",
    )?);
    let discounted_risks = if gamma == gamma_bar {
        risks.clone()
    } else {
        neg(policy_fixed_point(
            mdp,
            policy,
            Criterion::neg_risk(gamma),
            tol,
            "discounted risk evaluation",
        )?)
    };
    Ok(ExactEvaluation {
        values,
        risks,
        discounted_risks,
    })
}

fn neg(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = -*x);
    v
}

fn check_discount(g: f64) -> Result<()> {
    if (0.0..=1.0).contains(&g) {
        Ok(())
    } else {
        Err(Error::config("discount", format!("{g} is outside [0, 1]")))
    }
}

/// Q^π and Q̄^π tables (`[s * num_actions + a]`) implied by an evaluation.
pub fn action_values(
    mdp: &FiniteMdp,
    eval: &ExactEvaluation,
    gamma: f64,
    gamma_bar: f64,
) -> (Vec<f64>, Vec<f64>) {
    let na = crate::mdp::Environment::num_actions(mdp);
    let n = mdp.num_states();
    let mut q = vec![0.0; n * na];
    let mut q_bar = vec![0.0; n * na];
    let neg_risks = neg(eval.risks.clone());
    for s in 0..n {
        if s == mdp.eta() {
            continue;
        }
        for a in 0..na {
            q[s * na + a] = Criterion::value(gamma).backup(mdp, s, a, &eval.values);
            q_bar[s * na + a] = -Criterion::neg_risk(gamma_bar).backup(mdp, s, a, &neg_risks);
        }
    }
    (q, q_bar)
}

/// Optimal state values for `criterion` when only `allowed[s]` actions may be used.
fn value_iteration(
    mdp: &FiniteMdp,
    criterion: Criterion,
    allowed: &[Vec<usize>],
    tol: f64,
    what: &'static str,
) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut worst = (0.0, 0);
    for _ in 0..MAX_SWEEPS {
        worst = (0.0, 0);
        for s in 0..n {
            if s == mdp.eta() {
                continue;
            }
            let best = allowed[s]
                .iter()
                .map(|&a| criterion.backup(mdp, s, a, &v))
                .fold(f64::NEG_INFINITY, f64::max);
            let d = (best - v[s]).abs();
            if d > worst.0 {
                worst = (d, s);
            }
            v[s] = best;
        }
        if worst.0 < tol {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: MAX_SWEEPS,
        residual: worst.0,
        state: worst.1,
    })
}

/// Optimizes `primary` exactly, then `secondary` among the primary-optimal actions.
/// Remaining ties go to the lowest action index.
///
/// Actions count as tied when their backed-up values differ by less than
/// `100 * tol`.
pub fn lexicographic_policy(
    mdp: &FiniteMdp,
    primary: Criterion,
    secondary: Criterion,
    tol: f64,
) -> Result<ExplicitPolicy> {
    if !(tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    check_discount(primary.discount)?;
    check_discount(secondary.discount)?;
    let na = crate::mdp::Environment::num_actions(mdp);
    let n = mdp.num_states();
    let tie = 100.0 * tol;
    let all: Vec<Vec<usize>> = vec![(0..na).collect(); n];
    let v1 = value_iteration(mdp, primary, &all, tol, "primary value iteration")?;
    let allowed = best_actions(mdp, primary, &v1, &all, tie);
    let v2 = value_iteration(mdp, secondary, &allowed, tol, "secondary value iteration")?;
    let chosen = best_actions(mdp, secondary, &v2, &allowed, tie);
    Ok(ExplicitPolicy::new(chosen.into_iter().map(|a| a[0]).collect()))
}

fn best_actions(
    mdp: &FiniteMdp,
    c: Criterion,
    v: &[f64],
    allowed: &[Vec<usize>],
    tie: f64,
) -> Vec<Vec<usize>> {
    (0..mdp.num_states())
        .map(|s| {
            let q: Vec<(usize, f64)> = allowed[s].iter().map(|&a| (a, c.backup(mdp, s, a, v))).collect();
            let best = q.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            q.into_iter()
                .filter(|&(_, x)| x >= best - tie)
                .map(|(a, _)| a)
                .collect()
        })
        .collect()
}

/// Greedy-optimal policy for ξ·V − ρ_γ with equal discounts, ties broken toward
/// higher value, then lower action index.
pub fn optimal_weighted_policy(
    mdp: &FiniteMdp,
    xi: f64,
    gamma: f64,
    tol: f64,
) -> Result<(ExplicitPolicy, ExactEvaluation)> {
    let policy = lexicographic_policy(mdp, Criterion::weighted(xi, gamma), Criterion::value(gamma), tol)?;
    let eval = evaluate_policy(mdp, &policy, gamma, 1.0, tol)?;
    Ok((policy, eval))
}

/// Minimum-risk policy (undiscounted risk) with value-maximizing tie-breaks.
pub fn min_risk_policy(mdp: &FiniteMdp, gamma: f64, tol: f64) -> Result<(ExplicitPolicy, ExactEvaluation)> {
    let policy = lexicographic_policy(mdp, Criterion::neg_risk(1.0), Criterion::value(gamma), tol)?;
    let eval = evaluate_policy(mdp, &policy, gamma, 1.0, tol)?;
    Ok((policy, eval))
}

/// Maximum-value policy with risk-minimizing tie-breaks (the ξ → ∞ limit).
pub fn max_value_policy(mdp: &FiniteMdp, gamma: f64, tol: f64) -> Result<(ExplicitPolicy, ExactEvaluation)> {
    let policy = lexicographic_policy(mdp, Criterion::value(gamma), Criterion::neg_risk(1.0), tol)?;
    let eval = evaluate_policy(mdp, &policy, gamma, 1.0, tol)?;
    Ok((policy, eval))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub worst_state: usize,
    pub worst_risk: f64,
    /// Support states whose risk exceeds ω, in support order.
    pub offenders: Vec<usize>,
}

/// Checks ρ(x) ≤ ω on the support of `start`.
pub fn feasibility(eval: &ExactEvaluation, start: &StartDistribution<usize>, omega: f64) -> Feasibility {
    let mut worst = (usize::MAX, f64::NEG_INFINITY);
    let mut offenders = Vec::new();
    for &s in start.states() {
        let r = eval.risks[s];
        if r > worst.1 {
            worst = (s, r);
        }
        if r > omega {
            offenders.push(s);
        }
    }
    Feasibility {
        feasible: offenders.is_empty(),
        worst_state: worst.0,
        worst_risk: worst.1,
        offenders,
    }
}

/// States of the augmented MDP that are neither Φ nor η.
pub fn non_error_states(mdp: &FiniteMdp) -> Vec<usize> {
    (0..mdp.num_states())
        .filter(|&s| !matches!(mdp.classes()[s], StateClass::Error | StateClass::Absorbing))
        .collect()
}
