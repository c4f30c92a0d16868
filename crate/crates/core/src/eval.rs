//! Monte-Carlo estimation of policy value and risk, and the comparison table.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mdp::{run_episode_from, Environment, Policy, StartDistribution};

const Z95: f64 = 1.959963984540054;

/// Reference squared deviations of the SQP solution (Li et al.) at p = 0.8 and 0.9.
pub const LI_REFERENCE: [(f64, f64); 2] = [(0.8, 0.0123), (0.9, 0.0484)];

/// Sample mean with a 95% confidence interval.
///
/// `half_width` is always the normal-approximation half width; `lower`/`upper`
/// switch to the Wilson interval for Bernoulli samples with fewer than five
/// successes or failures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub episodes: usize,
    pub truncation_rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64], truncated: usize) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::empty();
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let hw = Z95 * (var / n as f64).sqrt();
        Self {
            mean,
            half_width: hw,
            episodes: n,
            truncation_rate: truncated as f64 / n as f64,
            lower: mean - hw,
            upper: mean + hw,
        }
    }

    pub fn bernoulli(hits: usize, n: usize, truncated: usize) -> Self {
        if n == 0 {
            return Self::empty();
        }
        let nf = n as f64;
        let p = hits as f64 / nf;
        let hw = Z95 * (p * (1.0 - p) / nf).sqrt();
        let (lower, upper) = if hits < 5 || n - hits < 5 {
            wilson(hits, n)
        } else {
            ((p - hw).max(0.0), (p + hw).min(1.0))
        };
        Self {
            mean: p,
            half_width: hw,
            episodes: n,
            truncation_rate: truncated as f64 / nf,
            lower,
            upper,
        }
    }

    fn empty() -> Self {
        Self {
            mean: f64::NAN,
            half_width: f64::NAN,
            episodes: 0,
            truncation_rate: 0.0,
            lower: f64::NAN,
            upper: f64::NAN,
        }
    }

    /// Weighted combination of independent estimates.
    pub fn combine(parts: &[(f64, Estimate)]) -> Self {
        let mean: f64 = parts.iter().map(|(w, e)| w * e.mean).sum();
        let var: f64 = parts.iter().map(|(w, e)| (w * e.half_width / Z95).powi(2)).sum();
        let hw = Z95 * var.sqrt();
        let episodes: usize = parts.iter().map(|(_, e)| e.episodes).sum();
        let truncation_rate = parts.iter().map(|(w, e)| w * e.truncation_rate).sum();
        let lower = parts.iter().map(|(w, e)| w * e.lower).sum::<f64>().min(mean - hw);
        let upper = parts.iter().map(|(w, e)| w * e.upper).sum::<f64>().max(mean + hw);
        Self {
            mean,
            half_width: hw,
            episodes,
            truncation_rate,
            lower,
            upper,
        }
    }
}

fn wilson(hits: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lower = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if hits == n { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

#[derive(Clone, Debug)]
pub struct StateEstimate<S> {
    pub state: S,
    pub weight: f64,
    pub value: Estimate,
    pub risk: Estimate,
}

#[derive(Clone, Debug)]
pub struct PolicyEstimate<S> {
    pub per_state: Vec<StateEstimate<S>>,
    /// Weighted by p_x.
    pub value: Estimate,
    pub risk: Estimate,
}

impl<S> PolicyEstimate<S> {
    /// Largest per-state risk estimate, with its state.
    pub fn worst_risk(&self) -> Option<&StateEstimate<S>> {
        self.per_state
            .iter()
            .max_by(|a, b| a.risk.mean.total_cmp(&b.risk.mean))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalSettings {
    pub episodes: usize,
    pub gamma: f64,
    pub max_steps: usize,
}

/// Runs `episodes` episodes from each state of `start`.
///
/// Each start state gets its own RNG stream seeded from `rng`, so results do not
/// depend on the order in which states are processed.
pub fn estimate_policy<E, P, R>(
    env: &E,
    policy: &P,
    start: &StartDistribution<E::State>,
    settings: EvalSettings,
    rng: &mut R,
) -> PolicyEstimate<E::State>
where
    E: Environment,
    P: Policy<E::State> + ?Sized,
    R: Rng + ?Sized,
{
    let seeds: Vec<u64> = start.support().iter().map(|_| rng.random()).collect();
    let per_state: Vec<StateEstimate<E::State>> = start
        .support()
        .iter()
        .zip(seeds)
        .map(|((s, w), seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut returns = Vec::with_capacity(settings.episodes);
            let mut hits = 0;
            let mut truncated = 0;
            for _ in 0..settings.episodes {
                let trace = run_episode_from(env, s, policy, &mut rng, settings.max_steps, settings.gamma);
                returns.push(trace.return_value);
                if trace.risk_return == 1.0 {
                    hits += 1;
                }
                if trace.truncated {
                    truncated += 1;
                }
            }
            StateEstimate {
                state: s.clone(),
                weight: *w,
                value: Estimate::from_samples(&returns, truncated),
                risk: Estimate::bernoulli(hits, settings.episodes, truncated),
            }
        })
        .collect();
    let value = Estimate::combine(&per_state.iter().map(|e| (e.weight, e.value)).collect::<Vec<_>>());
    let risk = Estimate::combine(&per_state.iter().map(|e| (e.weight, e.risk)).collect::<Vec<_>>());
    PolicyEstimate {
        per_state,
        value,
        risk,
    }
}

/// Squared deviation to F_spec (−V) per learning run, for each target p.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    /// `runs[k]` holds one value per learning run for `targets[k]`; empty if absent.
    pub runs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub targets: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((m, sd))
}

pub fn comparison_table(rows: Vec<ComparisonRow>, targets: &[f64]) -> ComparisonTable {
    ComparisonTable {
        targets: targets.to_vec(),
        rows,
    }
}

impl ComparisonTable {
    fn cells(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        if !self.rows.is_empty() {
            let li = self
                .targets
                .iter()
                .map(|p| {
                    LI_REFERENCE
                        .iter()
                        .find(|(q, _)| (q - p).abs() < 1e-9)
                        .map(|(_, v)| format!("{v}"))
                        .unwrap_or_default()
                })
                .collect::<Vec<_>>();
            out.push(
                std::iter::once("Li et al. (2002)".to_string())
                    .chain(li)
                    .collect(),
            );
        }
        for row in &self.rows {
            let mut r = vec![row.label.clone()];
            for k in 0..self.targets.len() {
                let cell = row
                    .runs
                    .get(k)
                    .and_then(|xs| mean_sd(xs))
                    .map(|(m, sd)| format!("{m:.5} ({sd:.5})"))
                    .unwrap_or_default();
                r.push(cell);
            }
            out.push(r);
        }
        out
    }

    fn header(&self) -> Vec<String> {
        std::iter::once("approach".to_string())
            .chain(self.targets.iter().map(|p| format!("p={p}")))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in self.cells() {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut all = vec![self.header()];
        all.extend(self.cells());
        let cols = all[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| all.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for r in &all {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            writeln!(s, "{}", line.join("  ").trim_end()).ok();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_has_zero_half_width() {
        let e = Estimate::bernoulli(100, 100, 0);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.half_width, 0.0);
        assert!(e.lower < 1.0 && e.upper == 1.0);
    }

    #[test]
    fn wilson_for_rare_events() {
        let e = Estimate::bernoulli(0, 1000, 0);
        assert_eq!(e.lower, 0.0);
        assert!(e.upper > 0.0 && e.upper < 0.005);
    }

    #[test]
    fn sample_estimate_matches_hand_computation() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 1);
        assert_eq!(e.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.half_width - Z95 * sd / 2.0).abs() < 1e-12);
        assert_eq!(e.truncation_rate, 0.25);
    }

    #[test]
    fn combine_weights_means() {
        let a = Estimate::from_samples(&[1.0, 1.0], 0);
        let b = Estimate::from_samples(&[3.0, 3.0], 0);
        let c = Estimate::combine(&[(0.25, a), (0.75, b)]);
        assert_eq!(c.mean, 2.5);
        assert_eq!(c.half_width, 0.0);
        assert_eq!(c.episodes, 4);
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = comparison_table(Vec::new(), &[0.8, 0.9]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "approach,p=0.8,p=0.9\n");
        assert_eq!(t.to_text(), "approach  p=0.8  p=0.9\n");
    }

    #[test]
    fn table_includes_reference_row() {
        let t = comparison_table(
            vec![ComparisonRow {
                label: "RL-Y-CLC".into(),
                runs: vec![vec![0.007, 0.009], vec![]],
            }],
            &[0.8, 0.9],
        );
        let text = t.to_text();
        assert!(text.contains("Li et al. (2002)  0.0123"));
        assert!(text.contains("0.00800 (0.00141)"));
    }
}
