use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, Regressor};
use crate::error::{Error, Result};

/// One hidden tanh layer, linear output per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    input: usize,
    hidden: usize,
    outputs: usize,
    /// `[w1 (hidden×input), b1, w2 (outputs×hidden), b2]`
    params: Vec<f64>,
}

impl MlpNet {
    /// Glorot-uniform weights, zero biases, all outputs offset by `bias`.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        outputs: usize,
        bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || outputs == 0 {
            return Err(Error::config("mlp", "layer sizes must be positive"));
        }
        let mut params = Vec::with_capacity(hidden * input + hidden + outputs * hidden + outputs);
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        params.extend((0..hidden * input).map(|_| rng.random_range(-l1..l1)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        let l2 = (6.0 / (hidden + outputs) as f64).sqrt();
        params.extend((0..outputs * hidden).map(|_| rng.random_range(-l2..l2)));
        params.extend(std::iter::repeat_n(bias, outputs));
        Ok(Self {
            input,
            hidden,
            outputs,
            params,
        })
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        (b1, w2, b2)
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                (z + self.params[b1 + j]).tanh()
            })
            .collect()
    }

    fn head(&self, h: &[f64], action: usize) -> f64 {
        let (_, w2, b2) = self.offsets();
        let row = &self.params[w2 + action * self.hidden..w2 + (action + 1) * self.hidden];
        row.iter().zip(h).map(|(w, hj)| w * hj).sum::<f64>() + self.params[b2 + action]
    }

    fn check(&self, input: &[f64], action: usize) -> Result<()> {
        check_dim(self.input, input)?;
        if action >= self.outputs {
            return Err(Error::DimensionMismatch {
                expected: self.outputs,
                got: action + 1,
            });
        }
        Ok(())
    }

    fn gradient_into(&self, x: &[f64], h: &[f64], action: usize, g: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for j in 0..self.hidden {
            let w = self.params[w2 + action * self.hidden + j];
            let dz = w * (1.0 - h[j] * h[j]);
            for i in 0..self.input {
                g[j * self.input + i] = dz * x[i];
            }
            g[b1 + j] = dz;
            g[w2 + action * self.hidden + j] = h[j];
        }
        g[b2 + action] = 1.0;
    }
}

impl Regressor for MlpNet {
    fn input_dim(&self) -> usize {
        self.input
    }

    fn num_actions(&self) -> usize {
        self.outputs
    }

    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn predict(&self, input: &[f64], action: usize) -> Result<f64> {
        self.check(input, action)?;
        Ok(self.head(&self.hidden_layer(input), action))
    }

    fn predict_all(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input, input)?;
        let h = self.hidden_layer(input);
        Ok((0..self.outputs).map(|a| self.head(&h, a)).collect())
    }

    fn param_gradient(&self, input: &[f64], action: usize) -> Result<Vec<f64>> {
        self.check(input, action)?;
        let h = self.hidden_layer(input);
        let mut g = vec![0.0; self.params.len()];
        self.gradient_into(input, &h, action, &mut g);
        Ok(g)
    }

    fn params(&self) -> Vec<f64> {
        self.params.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.params.len(), params)?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn train_step(&mut self, input: &[f64], action: usize, target: f64, rate: f64) -> Result<f64> {
        self.check(input, action)?;
        let h = self.hidden_layer(input);
        let pred = self.head(&h, action);
        if rate == 0.0 {
            return Ok(pred);
        }
        let step = rate * (pred - target);
        let (b1, w2, b2) = self.offsets();
        for (j, &hj) in h.iter().enumerate() {
            let w = &mut self.params[w2 + action * self.hidden + j];
            let dz = *w * (1.0 - hj * hj);
            *w -= step * hj;
            let row = &mut self.params[j * self.input..(j + 1) * self.input];
            for (p, &x) in row.iter_mut().zip(input) {
                *p -= step * dz * x;
            }
            self.params[b1 + j] -= step * dz;
        }
        self.params[b2 + action] -= step;
        Ok(pred)
    }
}

/// One [`MlpNet`] per decision step for open-loop encodings.
///
/// Input is `(t/N, u_{t−1}, …, u_0, 0, …)`; the net for step `t` sees the first
/// `max(t, 1)` history slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerStepMlp {
    horizon: usize,
    nets: Vec<MlpNet>,
}

impl PerStepMlp {
    pub fn new<R: Rng + ?Sized>(
        horizon: usize,
        hidden: usize,
        outputs: usize,
        bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::config("mlp.horizon", "must be at least 2"));
        }
        let nets = (0..horizon)
            .map(|t| MlpNet::new(t.max(1), hidden, outputs, bias, rng))
            .collect::<Result<_>>()?;
        Ok(Self { horizon, nets })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn net(&self, t: usize) -> &MlpNet {
        &self.nets[t]
    }

    fn route<'a>(&self, input: &'a [f64]) -> Result<(usize, &'a [f64])> {
        check_dim(self.horizon, input)?;
        let t = ((input[0] * self.horizon as f64).round().max(0.0) as usize).min(self.horizon - 1);
        Ok((t, &input[1..1 + t.max(1)]))
    }
}

impl Regressor for PerStepMlp {
    fn input_dim(&self) -> usize {
        self.horizon
    }

    fn num_actions(&self) -> usize {
        self.nets[0].num_actions()
    }

    fn num_params(&self) -> usize {
        self.nets.iter().map(|n| n.num_params()).sum()
    }

    fn predict(&self, input: &[f64], action: usize) -> Result<f64> {
        let (t, x) = self.route(input)?;
        self.nets[t].predict(x, action)
    }

    fn predict_all(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (t, x) = self.route(input)?;
        self.nets[t].predict_all(x)
    }

    fn param_gradient(&self, input: &[f64], action: usize) -> Result<Vec<f64>> {
        let (t, x) = self.route(input)?;
        let mut g = Vec::with_capacity(self.num_params());
        for (k, net) in self.nets.iter().enumerate() {
            if k == t {
                g.extend(net.param_gradient(x, action)?);
            } else {
                g.extend(std::iter::repeat_n(0.0, net.num_params()));
            }
        }
        Ok(g)
    }

    fn params(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params.iter().copied()).collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.num_params(), params)?;
        let mut off = 0;
        for net in &mut self.nets {
            let n = net.params.len();
            net.params.copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn train_step(&mut self, input: &[f64], action: usize, target: f64, rate: f64) -> Result<f64> {
        let (t, x) = self.route(input)?;
        let x = x.to_vec();
        self.nets[t].train_step(&x, action, target, rate)
    }
}
