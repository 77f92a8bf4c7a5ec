use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crowdvote::io::write_predictions;
use crowdvote::oracle::DifficultyMixture;
use crowdvote::simulate::{simulate_ci, simulate_difficulty, CiSimSpec, DifficultySimSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ci,
    Difficulty,
}

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Per-agent accuracies, comma-separated (ci model).
    #[arg(long, value_delimiter = ',')]
    accuracies: Option<Vec<f64>>,
    /// Per-agent abilities, comma-separated (difficulty model).
    #[arg(long, value_delimiter = ',')]
    abilities: Option<Vec<f64>>,
    /// `ALPHA:WEIGHT,ALPHA:WEIGHT,...` or `loguniform:LO:HI`.
    #[arg(long)]
    mixture: Option<String>,
    /// Number of labels.
    #[arg(long = "k")]
    k: Option<usize>,
    #[arg(long)]
    questions: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn default_model() -> Model {
    Model::Ci
}

fn default_questions() -> usize {
    10_000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_model")]
    model: Model,
    #[serde(default)]
    accuracies: Option<Vec<f64>>,
    #[serde(default)]
    abilities: Option<Vec<f64>>,
    #[serde(default)]
    mixture: Option<String>,
    k: usize,
    #[serde(default = "default_questions")]
    questions: usize,
    #[serde(default)]
    seed: u64,
    output: PathBuf,
}

pub fn parse_mixture(s: &str) -> CliResult<DifficultyMixture> {
    let bad = |why: String| CliError::Usage(format!("--mixture {s:?}: {why}"));
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("{t:?}: {e}")))
    };
    let mix = if let Some(rest) = s.strip_prefix("loguniform:") {
        let (lo, hi) = rest
            .split_once(':')
            .ok_or_else(|| bad("expected loguniform:LO:HI".into()))?;
        DifficultyMixture::log_uniform(num(lo)?, num(hi)?)
    } else {
        let atoms = s
            .split(',')
            .map(|atom| {
                let (a, w) = atom
                    .split_once(':')
                    .ok_or_else(|| bad(format!("atom {atom:?} is not ALPHA:WEIGHT")))?;
                Ok((num(a)?, num(w)?))
            })
            .collect::<CliResult<Vec<_>>>()?;
        DifficultyMixture::atoms(atoms)
    };
    mix.map_err(|e| bad(e.to_string()))
}

pub fn run(cfg: Config) -> CliResult<()> {
    if cfg.k < 2 {
        return Err(CliError::Usage(format!(
            "--k must be at least 2, got {}",
            cfg.k
        )));
    }
    if cfg.questions == 0 {
        return Err(CliError::Usage("--questions must be at least 1".into()));
    }
    let pm = match cfg.model {
        Model::Ci => {
            let x = cfg.accuracies.clone().ok_or_else(|| {
                CliError::Usage("--accuracies is required for the ci model".into())
            })?;
            let floor = 1.0 / cfg.k as f64;
            if let Some(v) = x.iter().find(|v| !(floor..=1.0).contains(*v)) {
                return Err(CliError::Usage(format!(
                    "--accuracies: {v} outside [1/K, 1] = [{floor}, 1]"
                )));
            }
            simulate_ci(&CiSimSpec {
                accuracies: x,
                k: cfg.k,
                m: cfg.questions,
                seed: cfg.seed,
            })?
        }
        Model::Difficulty => {
            let beta = cfg.abilities.clone().ok_or_else(|| {
                CliError::Usage("--abilities is required for the difficulty model".into())
            })?;
            if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                return Err(CliError::Usage(format!(
                    "--abilities: {b} must be finite and non-negative"
                )));
            }
            let mixture = parse_mixture(cfg.mixture.as_deref().ok_or_else(|| {
                CliError::Usage("--mixture is required for the difficulty model".into())
            })?)?;
            simulate_difficulty(&DifficultySimSpec {
                abilities: beta,
                mixture,
                k: cfg.k,
                m: cfg.questions,
                seed: cfg.seed,
            })?
        }
    };
    write_predictions(&cfg.output, &pm)?;
    println!(
        "wrote {} questions x {} agents to {}",
        pm.m(),
        pm.n(),
        cfg.output.display()
    );
    Ok(())
}
