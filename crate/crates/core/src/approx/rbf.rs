use serde::{Deserialize, Serialize};

use super::{check_dim, Regressor};
use crate::error::{Error, Result};

/// Gaussian RBF network with fixed centers and a linear output layer per action.
///
/// Feature k is `exp(−‖s ⊙ (x − c_k)‖² / (2σ_k²))` where `s` is an optional
/// per-dimension input scale (all ones by default). In normalized mode the
/// features are divided by their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfNet {
    dim: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
    /// Row-major `[action][center]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    normalized: bool,
    #[serde(default)]
    scale: Vec<f64>,
    /// When false the bias is a constant and not part of the parameter vector.
    #[serde(default = "yes")]
    train_bias: bool,
}

/// Kernels below e^−40 are treated as exactly zero.
const CUTOFF: f64 = 40.0;

fn yes() -> bool {
    true
}

impl RbfNet {
    pub fn new(centers: Vec<Vec<f64>>, widths: Vec<f64>, num_actions: usize) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::config("rbf.centers", "at least one center is required"));
        }
        if centers.len() != widths.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: widths.len(),
            });
        }
        if let Some(w) = widths.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::config("rbf.widths", format!("width {w} is not positive")));
        }
        let dim = centers[0].len();
        for c in &centers {
            check_dim(dim, c)?;
        }
        let k = centers.len();
        Ok(Self {
            dim,
            centers: centers.into_iter().flatten().collect(),
            widths,
            weights: vec![0.0; k * num_actions],
            bias: vec![0.0; num_actions],
            normalized: false,
            scale: Vec::new(),
            train_bias: true,
        })
    }

    pub fn train_bias(mut self, on: bool) -> Self {
        self.train_bias = on;
        self
    }

    /// Per-dimension factors applied to `x − c` before the distance.
    pub fn with_input_scale(mut self, scale: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, &scale)?;
        if let Some(s) = scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::config("rbf.scale", format!("scale {s} is not positive")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalized = on;
        self
    }

    /// Sets every output (weights zero, bias `value`).
    pub fn with_constant_output(mut self, value: f64) -> Self {
        self.bias.iter_mut().for_each(|b| *b = value);
        self
    }

    pub fn num_centers(&self) -> usize {
        self.widths.len()
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// `d²/(2w²)` to every center, in the scaled input space.
    fn exponents(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, input)?;
        Ok((0..self.num_centers())
            .map(|k| {
                let c = self.center(k);
                let d2: f64 = if self.scale.is_empty() {
                    c.iter().zip(input).map(|(c, x)| (x - c) * (x - c)).sum()
                } else {
                    c.iter()
                        .zip(input)
                        .zip(&self.scale)
                        .map(|((c, x), s)| (s * (x - c)) * (s * (x - c)))
                        .sum()
                };
                d2 / (2.0 * self.widths[k] * self.widths[k])
            })
            .collect())
    }

    pub fn features(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut phi: Vec<f64> = self
            .exponents(input)?
            .into_iter()
            .map(|z| if z > CUTOFF { 0.0 } else { (-z).exp() })
            .collect();
        if self.normalized {
            let s: f64 = phi.iter().sum();
            if s > 0.0 {
                phi.iter_mut().for_each(|p| *p /= s);
            }
        }
        Ok(phi)
    }

    fn output(&self, phi: &[f64], action: usize) -> f64 {
        let k = phi.len();
        let w = &self.weights[action * k..(action + 1) * k];
        self.bias[action] + w.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>()
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bias.len(),
                got: action + 1,
            });
        }
        Ok(())
    }
}

impl Regressor for RbfNet {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_actions(&self) -> usize {
        self.bias.len()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + if self.train_bias { self.bias.len() } else { 0 }
    }

    fn predict(&self, input: &[f64], action: usize) -> Result<f64> {
        self.check_action(action)?;
        let phi = self.features(input)?;
        Ok(self.output(&phi, action))
    }

    fn predict_all(&self, input: &[f64]) -> Result<Vec<f64>> {
        let phi = self.features(input)?;
        let active: Vec<(usize, f64)> = phi
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(k, p)| (k, *p))
            .collect();
        let k = phi.len();
        Ok((0..self.num_actions())
            .map(|a| {
                let w = &self.weights[a * k..(a + 1) * k];
                self.bias[a] + active.iter().map(|&(j, p)| w[j] * p).sum::<f64>()
            })
            .collect())
    }

    fn param_gradient(&self, input: &[f64], action: usize) -> Result<Vec<f64>> {
        self.check_action(action)?;
        let phi = self.features(input)?;
        let k = phi.len();
        let mut g = vec![0.0; self.num_params()];
        g[action * k..(action + 1) * k].copy_from_slice(&phi);
        if self.train_bias {
            g[self.weights.len() + action] = 1.0;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<f64> {
        let bias: &[f64] = if self.train_bias { &self.bias } else { &[] };
        self.weights.iter().chain(bias).copied().collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.num_params(), params)?;
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        if self.train_bias {
            self.bias.copy_from_slice(b);
        }
        Ok(())
    }

    fn num_regions(&self) -> usize {
        self.num_centers()
    }

    /// The nearest center, measured in widths.
    // Compared on exponents so that inputs far from every center, where all
    // features underflow, still map to the closest one.
    fn region(&self, input: &[f64]) -> Option<usize> {
        let z = self.exponents(input).ok()?;
        z.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
    }

    // Only the selected head moves, so skip the full parameter copy.
    fn train_step(&mut self, input: &[f64], action: usize, target: f64, rate: f64) -> Result<f64> {
        self.check_action(action)?;
        let phi = self.features(input)?;
        let pred = self.output(&phi, action);
        if rate == 0.0 {
            return Ok(pred);
        }
        let step = rate * (pred - target);
        let k = phi.len();
        for (w, p) in self.weights[action * k..(action + 1) * k].iter_mut().zip(&phi) {
            *w -= step * p;
        }
        if self.train_bias {
            self.bias[action] -= step;
        }
        Ok(pred)
    }
}
