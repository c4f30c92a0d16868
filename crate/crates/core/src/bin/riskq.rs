use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskq::experiment::{
    csv_to_columns, evaluate_saved, run_experiment, run_oracle_check, write_oracle_artifacts, CheckedPolicy,
    ExperimentConfig, ExperimentKind, PolicyFile,
};
use riskq::learner::FeasibilitySource;
use riskq::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

/// Risk-constrained Q-learning experiments.
///
/// Settings are resolved in three layers: the experiment's preset, then the
/// `--config` file, then command-line flags.
#[derive(Parser)]
#[command(name = "riskq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid world with ξ-adaptation and an oracle cross-check.
    Gridworld {
        #[command(flatten)]
        common: Common,
        /// Learn discounted risk (γ̄ = γ) and test feasibility on a tracked
        /// undiscounted estimate.
        #[arg(long)]
        discounted_risk: bool,
    },
    /// Feed tank, closed loop on (t, y).
    TankYClc {
        #[command(flatten)]
        common: Common,
        /// Past levels added to the state; above 0 also writes weighted_diff.csv.
        #[arg(long)]
        history: Option<usize>,
    },
    /// Feed tank, open loop on t.
    TankYOlc {
        #[command(flatten)]
        common: Common,
    },
    /// Feed tank with concentrations, closed loop on (t, y, c1, c2).
    TankYcClc {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the experiment named by the config file's `experiment` key.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Re-tests a saved policy on fresh episodes.
    Evaluate {
        /// Saved policy (model.json or model_omega_*.json).
        #[arg(long)]
        model: PathBuf,
        /// Test episodes per start state.
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        /// Seed for the test episodes.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Writes evaluation.csv here instead of printing only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares simulated risk and value with the exact solution per start state.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Policy to simulate against the exact solution.
        #[arg(long, value_enum, default_value_t = PolicyChoice::MinRisk)]
        policy: PolicyChoice,
        /// Saved tabular policy for `--policy learned`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Largest accepted risk gap.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Converts a CSV artifact into whitespace-separated columns for gnuplot.
    PlotData {
        /// CSV artifact to convert.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyChoice {
    MinRisk,
    MaxValue,
    Learned,
}

#[derive(Args)]
struct Common {
    /// Base seed; run r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file layered over the experiment preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Risk bound for the sweep; for the tank also the single selection bound.
    #[arg(long)]
    omega: Option<f64>,
    /// First ξ increment.
    #[arg(long)]
    xi_step: Option<f64>,
    /// Learning episodes per ξ (oracle-check: test episodes per state).
    #[arg(long)]
    episodes: Option<usize>,
    /// Independent learning runs.
    #[arg(long)]
    runs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::ModelVersion(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
                _ => EXIT_ERROR,
            })
        }
    }
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> riskq::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path, kind)?,
        None => ExperimentConfig::preset(
            kind.ok_or_else(|| Error::config("config", "sweep needs --config naming an experiment"))?,
        ),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(omega) = common.omega {
        cfg.xi.omega = omega;
        if cfg.experiment == ExperimentKind::Gridworld {
            cfg.grid.omega = omega;
        }
        cfg.eval.omegas = vec![omega];
    }
    if let Some(step) = common.xi_step {
        cfg.xi.xi_step = step;
    }
    if let Some(runs) = common.runs {
        cfg.runs = runs;
    }
    Ok(cfg)
}

fn set_learning_episodes(cfg: &mut ExperimentConfig, episodes: Option<usize>) {
    if let Some(n) = episodes {
        cfg.learning.episodes_per_xi = n;
        cfg.learning.min_episodes_per_xi = n;
    }
}

fn experiment(mut cfg: ExperimentConfig, episodes: Option<usize>, out: &Path) -> riskq::Result<u8> {
    set_learning_episodes(&mut cfg, episodes);
    cfg.validate()?;
    let summary = run_experiment(&cfg, out)?;
    print!("{}", summary.text);
    println!("config hash: {}", cfg.hash()?);
    println!("artifacts: {}", out.display());
    Ok(match summary.infeasible {
        Some(min_risk) => {
            eprintln!(
                "infeasible: minimum risk estimate {min_risk:.4} exceeds omega {}",
                cfg.xi.omega
            );
            EXIT_INFEASIBLE
        }
        None => 0,
    })
}

fn run(command: Command) -> riskq::Result<u8> {
    match command {
        Command::Gridworld {
            common,
            discounted_risk,
        } => {
            let mut cfg = load(&common, Some(ExperimentKind::Gridworld))?;
            if discounted_risk {
                cfg.learning.gamma_bar = cfg.learning.gamma;
                cfg.learning.track_undiscounted = true;
                cfg.adapt.source = FeasibilitySource::Tracked;
            }
            experiment(cfg, common.episodes, &common.out)
        }
        Command::TankYClc { common, history } => {
            let mut cfg = load(&common, Some(ExperimentKind::TankYClc))?;
            if let Some(h) = history {
                cfg.history = h;
            }
            experiment(cfg, common.episodes, &common.out)
        }
        Command::TankYOlc { common } => {
            let cfg = load(&common, Some(ExperimentKind::TankYOlc))?;
            experiment(cfg, common.episodes, &common.out)
        }
        Command::TankYcClc { common } => {
            let cfg = load(&common, Some(ExperimentKind::TankYcClc))?;
            experiment(cfg, common.episodes, &common.out)
        }
        Command::Sweep { common } => {
            let cfg = load(&common, None)?;
            experiment(cfg, common.episodes, &common.out)
        }
        Command::Evaluate {
            model,
            episodes,
            seed,
            out,
        } => {
            let file = PolicyFile::from_json(&fs::read_to_string(&model)?)?;
            let ev = evaluate_saved(&file, episodes, seed)?;
            let mut text = Vec::new();
            writeln!(text, "# config-hash: {}", file.config_hash)?;
            writeln!(text, "state,value,value_hw,risk,risk_hw")?;
            for (k, label) in ev.labels.iter().enumerate() {
                writeln!(
                    text,
                    "{label},{},{},{},{}",
                    ev.values[k].mean, ev.values[k].half_width, ev.risks[k].mean, ev.risks[k].half_width
                )?;
            }
            writeln!(
                text,
                "aggregate,{},{},{},{}",
                ev.value.mean, ev.value.half_width, ev.risk.mean, ev.risk.half_width
            )?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("evaluation.csv"), &text)?;
                }
                None => io::stdout().write_all(&text)?,
            }
            println!(
                "xi {}: value {:.5} +- {:.5}, risk {:.4} +- {:.4}",
                file.xi, ev.value.mean, ev.value.half_width, ev.risk.mean, ev.risk.half_width
            );
            Ok(0)
        }
        Command::OracleCheck {
            common,
            policy,
            model,
            tolerance,
        } => {
            let mut cfg = load(&common, Some(ExperimentKind::Gridworld))?;
            if let Some(n) = common.episodes {
                cfg.eval.episodes = n;
            }
            if let Some(t) = tolerance {
                cfg.eval.tolerance = t;
            }
            let which = match (policy, model) {
                (PolicyChoice::MinRisk, _) => CheckedPolicy::MinRisk,
                (PolicyChoice::MaxValue, _) => CheckedPolicy::MaxValue,
                (PolicyChoice::Learned, Some(path)) => {
                    let file = PolicyFile::from_json(&fs::read_to_string(path)?)?;
                    cfg.grid = file.config.grid.clone();
                    cfg.learning.gamma = file.config.learning.gamma;
                    CheckedPolicy::Saved(Box::new(file))
                }
                (PolicyChoice::Learned, None) => {
                    return Err(Error::config("model", "--policy learned needs --model"))
                }
            };
            cfg.validate()?;
            let report = run_oracle_check(&cfg, &which)?;
            write_oracle_artifacts(&report, &cfg, &common.out)?;
            let start = report.world.mdp().start();
            let feas = riskq::oracle::feasibility(&report.exact, start, cfg.grid.omega);
            let offenders: Vec<String> = feas.offenders.iter().map(|&s| report.world.label(s)).collect();
            println!(
                "exact aggregated value: {:.4}",
                report.exact.aggregate_value(start)
            );
            println!("offenders at omega {}: [{}]", cfg.grid.omega, offenders.join(" "));
            let gap = report.max_risk_gap();
            println!(
                "largest |MC - exact| risk gap: {gap:.4} (tolerance {})",
                cfg.eval.tolerance
            );
            Ok(if gap < cfg.eval.tolerance {
                0
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::PlotData { input, out } => {
            let text = fs::read_to_string(&input)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    csv_to_columns(&text, &mut buf)?;
                    fs::write(path, buf)?;
                }
                None => csv_to_columns(&text, io::stdout().lock())?,
            }
            Ok(0)
        }
    }
}
