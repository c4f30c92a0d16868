//! Function approximators for continuous-state action values.
//!
//! Every net has one output per discrete action and is trained with the direct
//! method: a single gradient step on `½(prediction − target)²` per sample.

mod centers;
mod mlp;
mod rbf;

pub use centers::{grid_centers, place_rbf_centers, CenterPlacement};
pub use mlp::{MlpNet, PerStepMlp};
pub use rbf::RbfNet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub trait Regressor {
    fn input_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn num_params(&self) -> usize;

    fn predict(&self, input: &[f64], action: usize) -> Result<f64>;

    /// Predictions for all actions at once.
    fn predict_all(&self, input: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_actions()).map(|a| self.predict(input, a)).collect()
    }

    /// ∂ predict(input, action) / ∂θ, in the order of [`Regressor::params`].
    fn param_gradient(&self, input: &[f64], action: usize) -> Result<Vec<f64>>;

    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// Number of input regions reported by [`Regressor::region`]; 0 if the net
    /// has no notion of locality.
    fn num_regions(&self) -> usize {
        0
    }

    /// Index of the region `input` falls into, for per-region visit counting.
    fn region(&self, _input: &[f64]) -> Option<usize> {
        None
    }

    /// One gradient step toward `target`. Returns the prediction before the step.
    fn train_step(&mut self, input: &[f64], action: usize, target: f64, rate: f64) -> Result<f64> {
        let pred = self.predict(input, action)?;
        if rate == 0.0 {
            return Ok(pred);
        }
        let grad = self.param_gradient(input, action)?;
        let mut p = self.params();
        let err = pred - target;
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi -= rate * err * gi;
        }
        self.set_params(&p)?;
        Ok(pred)
    }
}

pub(crate) fn check_dim(expected: usize, input: &[f64]) -> Result<()> {
    if input.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: input.len(),
        });
    }
    Ok(())
}

/// Relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)` between the analytic parameter
/// gradient `g` and central differences `ĝ` with step `h`, at the current
/// parameters. Zero when both gradients vanish.
pub fn gradient_check<R: Regressor + ?Sized>(
    net: &mut R,
    input: &[f64],
    action: usize,
    h: f64,
) -> Result<f64> {
    let analytic = net.param_gradient(input, action)?;
    let base = net.params();
    let mut p = base.clone();
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for i in 0..base.len() {
        p[i] = base[i] + h;
        net.set_params(&p)?;
        let up = net.predict(input, action)?;
        p[i] = base[i] - h;
        net.set_params(&p)?;
        let down = net.predict(input, action)?;
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * h);
        diff += (analytic[i] - numeric).powi(2);
        norm_a += analytic[i].powi(2);
        norm_n += numeric * numeric;
    }
    net.set_params(&base)?;
    let scale = f64::max(norm_a, norm_n).sqrt();
    Ok(if scale == 0.0 { 0.0 } else { diff.sqrt() / scale })
}

/// Serialized form of any supported net.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedModel {
    Rbf(RbfNet),
    Mlp(MlpNet),
    PerStepMlp(PerStepMlp),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    version: u32,
    model: SavedModel,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope {
            version: FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let env: Envelope = serde_json::from_value(raw)?;
        Ok(env.model)
    }
}
