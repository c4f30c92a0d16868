//! Named experiments: configuration presets, runs and the artifacts they write.
//!
//! A config file only needs the keys it changes; everything else comes from the
//! preset of its `experiment`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::{PerStepMlp, RbfNet, Regressor, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::eval::{
    comparison_table, estimate_policy, ComparisonRow, ComparisonTable, Estimate, EvalSettings,
};
use crate::gridworld::{GridSpec, GridWorld};
use crate::learner::{
    adapt_xi, select_xi, AdaptOutcome, AdaptSettings, AlphaSchedule, GreedyPolicy, LearningConfig, NetDualQ,
    SweepRecord, TabularDualQ, XiSchedule,
};
use crate::mdp::{run_episode, Environment, ExplicitPolicy};
use crate::oracle::{evaluate_policy, feasibility, max_value_policy, min_risk_policy, ExactEvaluation};
use crate::tank::{
    InflowConfig, InflowModel, PlantMode, RbfLayout, StateEncoding, TankEnv, TankLogRow, TankParams,
};

/// Convergence tolerance of every exact solve.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Gridworld,
    TankYClc,
    TankYOlc,
    TankYcClc,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Gridworld => "gridworld",
            ExperimentKind::TankYClc => "tank-y-clc",
            ExperimentKind::TankYOlc => "tank-y-olc",
            ExperimentKind::TankYcClc => "tank-yc-clc",
        }
    }

    /// Row label in the comparison table.
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Gridworld => "grid",
            ExperimentKind::TankYClc => "RL-Y-CLC",
            ExperimentKind::TankYOlc => "RL-Y-OLC",
            ExperimentKind::TankYcClc => "RL-YC-CLC",
        }
    }

    pub fn is_tank(self) -> bool {
        self != ExperimentKind::Gridworld
    }

    pub fn plant_mode(self) -> PlantMode {
        match self {
            ExperimentKind::TankYcClc => PlantMode::LevelConcentration,
            _ => PlantMode::Level,
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::Gridworld,
            ExperimentKind::TankYClc,
            ExperimentKind::TankYOlc,
            ExperimentKind::TankYcClc,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    /// Gradient step size of the `Q` net.
    pub rate: f64,
    /// Gradient step size of the `Q̄` net.
    pub rate_bar: f64,
    /// Hidden tanh units of each per-step MLP.
    pub hidden: usize,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            rate: 1.0,
            rate_bar: 1.0,
            hidden: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Test episodes per start state for the final evaluation.
    pub episodes: usize,
    /// Risk bounds for [`select_xi`] (tank experiments).
    pub omegas: Vec<f64>,
    /// Largest accepted |MC − exact| risk gap in the oracle check.
    pub tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            omegas: Vec::new(),
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Independent learning runs with seeds `seed, seed + 1, …` (tank only).
    pub runs: usize,
    /// Past levels in the tank-y-clc state. Above 0 the plain `(t, y)` learner
    /// is also run with the same seed for comparison.
    pub history: usize,
    pub learning: LearningConfig,
    pub xi: XiSchedule,
    pub adapt: AdaptSettings,
    pub eval: EvalConfig,
    pub grid: GridSpec,
    pub tank: TankParams,
    pub inflow: InflowConfig,
    pub rbf: RbfLayout,
    pub net: NetSettings,
}

impl ExperimentConfig {
    /// Defaults for `kind`.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment: kind,
            seed: 1,
            runs: 1,
            history: 0,
            learning: LearningConfig::default(),
            xi: XiSchedule::default(),
            adapt: AdaptSettings::default(),
            eval: EvalConfig::default(),
            grid: GridSpec::default(),
            tank: TankParams::default(),
            inflow: InflowConfig::default(),
            rbf: RbfLayout::default(),
            net: NetSettings::default(),
        };
        if kind == ExperimentKind::Gridworld {
            cfg.learning.episodes_per_xi = 200_000;
            cfg.learning.min_episodes_per_xi = 200_000;
            cfg.adapt.eval_episodes = 2000;
            cfg.eval.omegas = vec![cfg.grid.omega];
            return cfg;
        }
        cfg.learning.gamma = 1.0;
        cfg.learning.gamma_bar = 1.0;
        cfg.learning.max_steps = 100;
        cfg.learning.alpha_c = 30.0;
        cfg.learning.episodes_per_xi = 10_000;
        cfg.learning.min_episodes_per_xi = 10_000;
        cfg.xi = XiSchedule {
            xi_start: 0.0,
            xi_step: 0.5,
            step_growth: 1.25,
            xi_max: 100.0,
            omega: 0.2,
            stop_at_violation: false,
        };
        cfg.eval.episodes = 1000;
        cfg.eval.omegas = vec![0.2, 0.1];
        if kind == ExperimentKind::TankYOlc {
            cfg.learning.alpha_schedule = AlphaSchedule::PerEpisode;
            cfg.learning.alpha_c = 2000.0;
            cfg.learning.episodes_per_xi = 20_000;
            cfg.learning.min_episodes_per_xi = 20_000;
            cfg.net.rate = 0.05;
            cfg.net.rate_bar = 0.05;
        }
        cfg
    }

    /// Parses a config file over the preset of its experiment. `kind`, when
    /// given, wins over the file's `experiment` key.
    pub fn from_toml_str(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        let kind = match (kind, user.get("experiment")) {
            (Some(k), _) => k,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(_)) => return Err(Error::config("experiment", "must be a string")),
            (None, None) => return Err(Error::config("experiment", "missing")),
        };
        let mut merged =
            toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::config("config", e.to_string()))?;
        merge(&mut merged, user);
        merged.insert("experiment".into(), toml::Value::String(kind.name().into()));
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?, kind)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn validate(&self) -> Result<()> {
        self.learning.validate()?;
        self.xi.validate()?;
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.eval.episodes == 0 {
            return Err(Error::config("eval.episodes", "must be positive"));
        }
        if self.eval.omegas.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::config("eval.omegas", "every ω must lie in [0, 1]"));
        }
        if !(self.eval.tolerance > 0.0) {
            return Err(Error::config("eval.tolerance", "must be positive"));
        }
        if self.history > 0 && self.experiment != ExperimentKind::TankYClc {
            return Err(Error::config("history", "only tank-y-clc has a level history"));
        }
        if self.experiment == ExperimentKind::Gridworld {
            self.grid.validate()?;
        } else {
            self.tank.validate()?;
            self.rbf.validate()?;
            if !(self.net.rate > 0.0 && self.net.rate_bar > 0.0) {
                return Err(Error::config("net.rate", "must be positive"));
            }
            if self.net.hidden == 0 {
                return Err(Error::config("net.hidden", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn encoding(&self) -> Option<StateEncoding> {
        match self.experiment {
            ExperimentKind::Gridworld => None,
            ExperimentKind::TankYClc if self.history > 0 => Some(StateEncoding::ClcYHist(self.history)),
            ExperimentKind::TankYClc => Some(StateEncoding::ClcY),
            ExperimentKind::TankYOlc => Some(StateEncoding::Olc),
            ExperimentKind::TankYcClc => Some(StateEncoding::ClcYc),
        }
    }

    pub fn tank_env(&self) -> Result<TankEnv> {
        TankEnv::new(
            self.tank.clone(),
            InflowModel::new(self.inflow.clone())?,
            self.experiment.plant_mode(),
        )
    }

    fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            episodes: self.eval.episodes,
            gamma: self.learning.gamma,
            max_steps: self.learning.max_steps,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A learned estimator in any backend.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum SavedEstimator {
    Table(TabularDualQ),
    Rbf(NetDualQ<RbfNet>),
    Mlp(NetDualQ<PerStepMlp>),
}

/// A greedy policy on disk: the estimator, its ξ and the run's config.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: u32,
    pub config_hash: String,
    pub xi: f64,
    pub config: ExperimentConfig,
    pub estimator: SavedEstimator,
}

impl PolicyFile {
    pub fn new(config: &ExperimentConfig, xi: f64, estimator: SavedEstimator) -> Result<Self> {
        Ok(Self {
            format: FORMAT_VERSION,
            config_hash: config.hash()?,
            xi,
            config: config.clone(),
            estimator,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let format = v.get("format").and_then(|f| f.as_u64()).unwrap_or(0) as u32;
        if format != FORMAT_VERSION {
            return Err(Error::ModelVersion(format));
        }
        Ok(serde_json::from_value(v)?)
    }
}

/// Monte-Carlo against exact values for one start state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateCheck {
    pub state: String,
    pub oracle_risk: f64,
    pub mc_risk: Estimate,
    pub oracle_value: f64,
    pub mc_value: Estimate,
}

impl StateCheck {
    pub fn risk_gap(&self) -> f64 {
        (self.mc_risk.mean - self.oracle_risk).abs()
    }

    pub fn value_gap(&self) -> f64 {
        (self.mc_value.mean - self.oracle_value).abs()
    }
}

/// Per-state comparison of `episodes` simulated runs with the exact evaluation.
pub fn oracle_check<R: rand::Rng + ?Sized>(
    world: &GridWorld,
    policy: &ExplicitPolicy,
    exact: &ExactEvaluation,
    settings: EvalSettings,
    rng: &mut R,
) -> Vec<StateCheck> {
    let est = estimate_policy(world, policy, world.start_distribution(), settings, rng);
    est.per_state
        .iter()
        .map(|s| StateCheck {
            state: world.label(s.state),
            oracle_risk: exact.risks[s.state],
            mc_risk: s.risk,
            oracle_value: exact.values[s.state],
            mc_value: s.value,
        })
        .collect()
}

pub fn write_checks<W: Write>(checks: &[StateCheck], tolerance: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "state",
        "oracle_rho",
        "mc_rho",
        "mc_rho_hw",
        "rho_gap",
        "oracle_V",
        "mc_V",
        "mc_V_hw",
        "V_gap",
        "pass",
    ])?;
    for c in checks {
        w.write_record([
            c.state.clone(),
            c.oracle_risk.to_string(),
            c.mc_risk.mean.to_string(),
            c.mc_risk.half_width.to_string(),
            c.risk_gap().to_string(),
            c.oracle_value.to_string(),
            c.mc_value.mean.to_string(),
            c.mc_value.half_width.to_string(),
            c.value_gap().to_string(),
            (c.risk_gap() < tolerance).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GridReport {
    pub world: GridWorld,
    pub sweep: Vec<SweepRecord>,
    /// Largest X′ risk at ξ = 0 when no feasible policy was found.
    pub infeasible: Option<f64>,
    /// ξ of the returned policy.
    pub xi: f64,
    pub estimator: TabularDualQ,
    pub policy: ExplicitPolicy,
    /// Exact evaluation of `policy`.
    pub exact: ExactEvaluation,
    pub checks: Vec<StateCheck>,
}

impl GridReport {
    /// Non-error start states whose exact risk exceeds ω.
    pub fn offenders(&self, omega: f64) -> Vec<String> {
        feasibility(&self.exact, self.world.mdp().start(), omega)
            .offenders
            .into_iter()
            .map(|s| self.world.label(s))
            .collect()
    }
}

pub fn run_gridworld(cfg: &ExperimentConfig) -> Result<GridReport> {
    cfg.validate()?;
    let world = GridWorld::new(cfg.grid.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes: Vec<usize> = world.start_distribution().states().copied().collect();
    let dq = TabularDualQ::new(world.num_states(), 4, cfg.learning.track_undiscounted);
    let mut adapt = cfg.adapt.clone();
    adapt.keep_snapshots = false;
    let outcome = adapt_xi(&world, dq, &cfg.xi, &cfg.learning, &adapt, &probes, &mut rng)?;
    let (estimator, xi, infeasible, sweep) = match outcome {
        AdaptOutcome::Feasible {
            estimator,
            stop_xi,
            sweep,
            ..
        } => (estimator, stop_xi, None, sweep),
        AdaptOutcome::Infeasible {
            min_risk,
            estimator,
            sweep,
            ..
        } => (estimator, 0.0, Some(min_risk), sweep),
    };
    let policy = estimator.greedy_policy(xi);
    let exact = evaluate_policy(world.mdp(), &policy, cfg.learning.gamma, 1.0, ORACLE_TOL)?;
    let checks = oracle_check(&world, &policy, &exact, grid_eval(cfg), &mut rng);
    Ok(GridReport {
        world,
        sweep,
        infeasible,
        xi,
        estimator,
        policy,
        exact,
        checks,
    })
}

fn grid_eval(cfg: &ExperimentConfig) -> EvalSettings {
    EvalSettings {
        max_steps: cfg.learning.max_steps.max(10_000),
        ..cfg.eval_settings()
    }
}

/// Which grid policy the oracle check simulates.
#[derive(Clone, Debug)]
pub enum CheckedPolicy {
    MinRisk,
    MaxValue,
    Saved(Box<PolicyFile>),
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub world: GridWorld,
    pub policy: ExplicitPolicy,
    pub exact: ExactEvaluation,
    pub checks: Vec<StateCheck>,
}

impl OracleReport {
    pub fn max_risk_gap(&self) -> f64 {
        self.checks.iter().map(StateCheck::risk_gap).fold(0.0, f64::max)
    }
}

pub fn run_oracle_check(cfg: &ExperimentConfig, which: &CheckedPolicy) -> Result<OracleReport> {
    if cfg.experiment != ExperimentKind::Gridworld {
        return Err(Error::config(
            "experiment",
            "the oracle check needs the finite grid world",
        ));
    }
    cfg.validate()?;
    let world = GridWorld::new(cfg.grid.clone())?;
    let gamma = cfg.learning.gamma;
    let (policy, exact) = match which {
        CheckedPolicy::MinRisk => min_risk_policy(world.mdp(), gamma, ORACLE_TOL)?,
        CheckedPolicy::MaxValue => max_value_policy(world.mdp(), gamma, ORACLE_TOL)?,
        CheckedPolicy::Saved(file) => {
            let SavedEstimator::Table(table) = &file.estimator else {
                return Err(Error::config("model", "the oracle check needs a tabular policy"));
            };
            if table.q.num_states() != world.num_states() {
                return Err(Error::DimensionMismatch {
                    expected: world.num_states(),
                    got: table.q.num_states(),
                });
            }
            let policy = table.greedy_policy(file.xi);
            let exact = evaluate_policy(world.mdp(), &policy, gamma, 1.0, ORACLE_TOL)?;
            (policy, exact)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let checks = oracle_check(&world, &policy, &exact, grid_eval(cfg), &mut rng);
    Ok(OracleReport {
        world,
        policy,
        exact,
        checks,
    })
}

/// The policy chosen by [`select_xi`] for one ω, re-tested on fresh episodes.
#[derive(Clone, Debug)]
pub struct Selection {
    pub omega: f64,
    /// Index into the sweep.
    pub index: usize,
    pub xi: f64,
    pub risk: Estimate,
    pub value: Estimate,
    pub estimator: SavedEstimator,
}

#[derive(Clone, Debug)]
pub struct TankRun {
    pub seed: u64,
    pub sweep: Vec<SweepRecord>,
    /// Risk of the ξ = 0 policy when it already exceeds `xi.omega`.
    pub infeasible: Option<f64>,
    /// One entry per `eval.omegas`; `None` if no sweep point was feasible.
    pub selections: Vec<Option<Selection>>,
    /// One episode under the first available selection.
    pub log: Vec<TankLogRow>,
}

#[derive(Clone, Debug)]
pub struct TankReport {
    pub runs: Vec<TankRun>,
    pub table: ComparisonTable,
    /// Sweep of the plain `(t, y)` learner with the first seed, when a level
    /// history was requested.
    pub baseline: Option<Vec<SweepRecord>>,
}

pub fn run_tank(cfg: &ExperimentConfig) -> Result<TankReport> {
    cfg.validate()?;
    let encoding = cfg
        .encoding()
        .ok_or_else(|| Error::config("experiment", "not a tank experiment"))?;
    let env = cfg.tank_env()?;
    let runs = (0..cfg.runs as u64)
        .map(|r| tank_run(cfg, &env, encoding, cfg.seed + r))
        .collect::<Result<Vec<_>>>()?;
    let baseline = if cfg.history > 0 {
        Some(tank_run(cfg, &env, StateEncoding::ClcY, cfg.seed)?.sweep)
    } else {
        None
    };
    let targets: Vec<f64> = cfg.eval.omegas.iter().map(|w| 1.0 - w).collect();
    let row = ComparisonRow {
        label: cfg.experiment.label().to_string(),
        runs: (0..cfg.eval.omegas.len())
            .map(|k| {
                runs.iter()
                    .filter_map(|r| r.selections[k].as_ref().map(|s| -s.value.mean))
                    .collect()
            })
            .collect(),
    };
    Ok(TankReport {
        runs,
        table: comparison_table(vec![row], &targets),
        baseline,
    })
}

fn tank_run(cfg: &ExperimentConfig, env: &TankEnv, encoding: StateEncoding, seed: u64) -> Result<TankRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = cfg.tank.clone();
    let na = params.num_actions;
    if encoding == StateEncoding::Olc {
        let q = PerStepMlp::new(params.horizon, cfg.net.hidden, na, 0.0, &mut rng)?;
        let q_bar = PerStepMlp::new(params.horizon, cfg.net.hidden, na, 0.0, &mut rng)?;
        let dq = NetDualQ {
            q,
            q_bar,
            encoding,
            params,
            rate: cfg.net.rate,
            rate_bar: cfg.net.rate_bar,
        };
        sweep_tank(cfg, env, dq, seed, &mut rng, SavedEstimator::Mlp)
    } else {
        let net = cfg.rbf.build(env, encoding, &mut rng)?;
        let dq = NetDualQ {
            q: net.clone(),
            q_bar: net,
            encoding,
            params,
            rate: cfg.net.rate,
            rate_bar: cfg.net.rate_bar,
        };
        sweep_tank(cfg, env, dq, seed, &mut rng, SavedEstimator::Rbf)
    }
}

fn sweep_tank<N: Regressor + Clone>(
    cfg: &ExperimentConfig,
    env: &TankEnv,
    dq: NetDualQ<N>,
    seed: u64,
    rng: &mut ChaCha8Rng,
    wrap: fn(NetDualQ<N>) -> SavedEstimator,
) -> Result<TankRun> {
    let adapt = AdaptSettings {
        keep_snapshots: true,
        ..cfg.adapt.clone()
    };
    let probes: Vec<_> = env.start_distribution().states().cloned().collect();
    let outcome = adapt_xi(env, dq, &cfg.xi, &cfg.learning, &adapt, &probes, rng)?;
    let infeasible = match &outcome {
        AdaptOutcome::Infeasible { min_risk, .. } => Some(*min_risk),
        AdaptOutcome::Feasible { .. } => None,
    };
    let sweep = outcome.sweep().to_vec();
    let snapshots = outcome.snapshots();
    let mut selections = Vec::new();
    let mut log = Vec::new();
    for &omega in &cfg.eval.omegas {
        let Some((index, rec)) = select_xi(&sweep, omega) else {
            selections.push(None);
            continue;
        };
        let dq = &snapshots[index];
        let policy = GreedyPolicy { dq, xi: rec.xi };
        let est = estimate_policy(env, &policy, env.start_distribution(), cfg.eval_settings(), rng);
        if log.is_empty() {
            let trace = run_episode(env, &policy, rng, cfg.learning.max_steps, cfg.learning.gamma);
            log = env.log_rows(&trace);
        }
        selections.push(Some(Selection {
            omega,
            index,
            xi: rec.xi,
            risk: est.risk,
            value: est.value,
            estimator: wrap(dq.clone()),
        }));
    }
    Ok(TankRun {
        seed,
        sweep,
        infeasible,
        selections,
        log,
    })
}

/// Per-state test estimates of a saved greedy policy.
#[derive(Clone, Debug)]
pub struct SavedEvaluation {
    pub labels: Vec<String>,
    pub values: Vec<Estimate>,
    pub risks: Vec<Estimate>,
    pub value: Estimate,
    pub risk: Estimate,
}

pub fn evaluate_saved(file: &PolicyFile, episodes: usize, seed: u64) -> Result<SavedEvaluation> {
    let cfg = &file.config;
    let settings = EvalSettings {
        episodes: episodes.max(1),
        ..cfg.eval_settings()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &file.estimator {
        SavedEstimator::Table(dq) => {
            let world = GridWorld::new(cfg.grid.clone())?;
            if dq.q.num_states() != world.num_states() {
                return Err(Error::DimensionMismatch {
                    expected: world.num_states(),
                    got: dq.q.num_states(),
                });
            }
            let policy = GreedyPolicy { dq, xi: file.xi };
            let settings = EvalSettings {
                max_steps: settings.max_steps.max(10_000),
                ..settings
            };
            let est = estimate_policy(&world, &policy, world.start_distribution(), settings, &mut rng);
            Ok(SavedEvaluation {
                labels: est.per_state.iter().map(|s| world.label(s.state)).collect(),
                values: est.per_state.iter().map(|s| s.value).collect(),
                risks: est.per_state.iter().map(|s| s.risk).collect(),
                value: est.value,
                risk: est.risk,
            })
        }
        SavedEstimator::Rbf(dq) => tank_saved(cfg, dq, file.xi, settings, &mut rng),
        SavedEstimator::Mlp(dq) => tank_saved(cfg, dq, file.xi, settings, &mut rng),
    }
}

fn tank_saved<N: Regressor>(
    cfg: &ExperimentConfig,
    dq: &NetDualQ<N>,
    xi: f64,
    settings: EvalSettings,
    rng: &mut ChaCha8Rng,
) -> Result<SavedEvaluation> {
    let env = cfg.tank_env()?;
    if dq.q.input_dim() != dq.encoding.dim(env.params()) {
        return Err(Error::DimensionMismatch {
            expected: dq.encoding.dim(env.params()),
            got: dq.q.input_dim(),
        });
    }
    let policy = GreedyPolicy { dq, xi };
    let est = estimate_policy(&env, &policy, env.start_distribution(), settings, rng);
    Ok(SavedEvaluation {
        labels: vec!["x0".to_string()],
        values: est.per_state.iter().map(|s| s.value).collect(),
        risks: est.per_state.iter().map(|s| s.risk).collect(),
        value: est.value,
        risk: est.risk,
    })
}

/// Output directory whose files all start with the config hash.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    /// Creates `dir` and archives the config as `config.toml`.
    pub fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let hash = cfg.hash()?;
        let mut a = Self {
            dir: dir.to_path_buf(),
            hash,
            written: Vec::new(),
        };
        let text = cfg.to_toml()?;
        a.write("config.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
        Ok(a)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` (relative to the directory) after a `# config-hash:` line.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# config-hash: {}", self.hash)?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// JSON cannot carry a comment row; the hash is stored inside instead.
    pub fn write_json(&mut self, name: &str, json: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, json)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

pub fn write_grid_artifacts(report: &GridReport, cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    let mut a = Artifacts::create(dir, cfg)?;
    a.write("sweep.csv", |w| SweepRecord::write_csv(&report.sweep, w))?;
    a.write("policy.txt", |w| {
        Ok(w.write_all(report.world.render_policy(&report.policy).as_bytes())?)
    })?;
    a.write("cells.csv", |w| {
        report.world.write_cell_csv(w, &report.policy, &report.exact)
    })?;
    a.write("oracle_check.csv", |w| {
        write_checks(&report.checks, cfg.eval.tolerance, w)
    })?;
    let file = PolicyFile::new(cfg, report.xi, SavedEstimator::Table(report.estimator.clone()))?;
    a.write_json("model.json", &file.to_json()?)?;
    let text = grid_summary(report, cfg);
    a.write("report.txt", |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(a)
}

pub fn grid_summary(report: &GridReport, cfg: &ExperimentConfig) -> String {
    let start = report.world.mdp().start();
    let omega = cfg.xi.omega;
    let worst = feasibility(&report.exact, start, omega);
    let mut s = String::new();
    match report.infeasible {
        Some(r) => writeln!(
            s,
            "infeasible: minimum risk estimate {r:.4} exceeds omega {omega}"
        )
        .ok(),
        None => writeln!(s, "stop xi: {}", report.xi).ok(),
    };
    writeln!(
        s,
        "exact aggregated value: {:.4}",
        report.exact.aggregate_value(start)
    )
    .ok();
    writeln!(
        s,
        "exact worst risk: {:.4} at {}",
        worst.worst_risk,
        report.world.label(worst.worst_state)
    )
    .ok();
    writeln!(s, "oracle-feasible: {}", worst.feasible).ok();
    writeln!(s, "offenders: [{}]", report.offenders(omega).join(" ")).ok();
    let gap = report.checks.iter().map(StateCheck::risk_gap).fold(0.0, f64::max);
    writeln!(s, "largest |MC - exact| risk gap: {gap:.4}").ok();
    s
}

pub fn write_oracle_artifacts(
    report: &OracleReport,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Artifacts> {
    let mut a = Artifacts::create(dir, cfg)?;
    a.write("oracle_check.csv", |w| {
        write_checks(&report.checks, cfg.eval.tolerance, w)
    })?;
    a.write("policy.txt", |w| {
        Ok(w.write_all(report.world.render_policy(&report.policy).as_bytes())?)
    })?;
    a.write("cells.csv", |w| {
        report.world.write_cell_csv(w, &report.policy, &report.exact)
    })?;
    Ok(a)
}

pub fn write_tank_artifacts(report: &TankReport, cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    let mut a = Artifacts::create(dir, cfg)?;
    for (r, run) in report.runs.iter().enumerate() {
        a.write(&format!("run{r}/sweep.csv"), |w| {
            SweepRecord::write_csv(&run.sweep, w)
        })?;
        if !run.log.is_empty() {
            a.write(&format!("run{r}/episode.csv"), |w| {
                TankLogRow::write_csv(&run.log, w)
            })?;
        }
        for sel in run.selections.iter().flatten() {
            let file = PolicyFile::new(cfg, sel.xi, sel.estimator.clone())?;
            a.write_json(
                &format!("run{r}/model_omega_{}.json", sel.omega),
                &file.to_json()?,
            )?;
        }
    }
    a.write("selection.csv", |w| write_selections(&report.runs, w))?;
    a.write("table.csv", |w| report.table.write_csv(w))?;
    let text = report.table.to_text();
    a.write("table.txt", |w| Ok(w.write_all(text.as_bytes())?))?;
    if let Some(base) = &report.baseline {
        let run = &report.runs[0];
        a.write("weighted_diff.csv", |w| write_weighted_diff(&run.sweep, base, w))?;
    }
    let text = tank_summary(report, cfg);
    a.write("report.txt", |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(a)
}

fn write_selections<W: Write>(runs: &[TankRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run",
        "seed",
        "omega",
        "xi",
        "sweep_risk",
        "sweep_value",
        "risk",
        "risk_hw",
        "value",
        "value_hw",
        "deviation",
    ])?;
    for (r, run) in runs.iter().enumerate() {
        for sel in run.selections.iter().flatten() {
            let rec = &run.sweep[sel.index];
            w.write_record([
                r.to_string(),
                run.seed.to_string(),
                sel.omega.to_string(),
                sel.xi.to_string(),
                rec.risk.mean.to_string(),
                rec.value.mean.to_string(),
                sel.risk.mean.to_string(),
                sel.risk.half_width.to_string(),
                sel.value.mean.to_string(),
                sel.value.half_width.to_string(),
                (-sel.value.mean).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `ξ·V − ρ` of two sweeps at their common ξ values.
fn write_weighted_diff<W: Write>(with_history: &[SweepRecord], base: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["xi", "weighted_history", "weighted_base", "difference"])?;
    for (a, b) in with_history.iter().zip(base) {
        if a.xi != b.xi {
            break;
        }
        w.write_record([
            a.xi.to_string(),
            a.weighted.to_string(),
            b.weighted.to_string(),
            (a.weighted - b.weighted).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn tank_summary(report: &TankReport, cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    writeln!(s, "experiment: {}", cfg.experiment.name()).ok();
    for (r, run) in report.runs.iter().enumerate() {
        write!(s, "run {r} (seed {}): ", run.seed).ok();
        if let Some(risk) = run.infeasible {
            writeln!(
                s,
                "infeasible, minimum risk estimate {risk:.4} exceeds omega {}",
                cfg.xi.omega
            )
            .ok();
            continue;
        }
        let min_risk = run.sweep.first().map_or(f64::NAN, |r| r.risk.mean);
        writeln!(s, "minimum risk estimate {min_risk:.4}").ok();
        for (omega, sel) in cfg.eval.omegas.iter().zip(&run.selections) {
            match sel {
                Some(sel) => writeln!(
                    s,
                    "  omega {omega}: xi {:.4}, risk {:.4} +- {:.4}, squared deviation {:.5} +- {:.5}",
                    sel.xi, sel.risk.mean, sel.risk.half_width, -sel.value.mean, sel.value.half_width
                ),
                None => writeln!(s, "  omega {omega}: no feasible sweep point"),
            }
            .ok();
        }
    }
    s.push('\n');
    s.push_str(&report.table.to_text());
    s
}

/// Whitespace-separated copy of a CSV for gnuplot: comment rows dropped, the
/// header turned into a `#` line, booleans written as 1/0.
pub fn csv_to_columns<W: Write>(csv_text: &str, mut out: W) -> Result<()> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    writeln!(out, "# {}", header.join(" "))?;
    for rec in r.records() {
        let rec = rec?;
        let cells: Vec<&str> = rec
            .iter()
            .map(|c| match c {
                "true" => "1",
                "false" => "0",
                "" => "NaN",
                c => c,
            })
            .collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Runs the configured experiment and writes its artifacts to `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    if cfg.experiment == ExperimentKind::Gridworld {
        let report = run_gridworld(cfg)?;
        let artifacts = write_grid_artifacts(&report, cfg, dir)?;
        Ok(RunSummary {
            text: grid_summary(&report, cfg),
            infeasible: report.infeasible,
            files: artifacts.written().to_vec(),
        })
    } else {
        let report = run_tank(cfg)?;
        let artifacts = write_tank_artifacts(&report, cfg, dir)?;
        Ok(RunSummary {
            text: tank_summary(&report, cfg),
            infeasible: report.runs.iter().find_map(|r| r.infeasible),
            files: artifacts.written().to_vec(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub text: String,
    /// Minimum-risk estimate when the constrained problem was infeasible.
    pub infeasible: Option<f64>,
    pub files: Vec<PathBuf>,
}
