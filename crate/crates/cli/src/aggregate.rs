use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crowdvote::estimate::{
    accuracy, disagreement_questions, pipeline_aggregate, ErmConfig, FitResult, Method,
    PipelineConfig,
};
use crowdvote::io::{read_predictions, write_json, write_labels, write_second_order, ReadOptions};
use crowdvote::secondorder::empirical_second_order_smoothed;
use crowdvote::{Clamp, Label, PredictionMatrix, TiePolicy};

use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tie {
    Uniform,
    Lowest,
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(clap::Args, Serialize)]
pub struct Args {
    /// mv, sp, isp, ow-l, ow-i, ow-oracle or eow.
    #[arg(long)]
    method: Option<String>,
    /// Predictions CSV.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Aggregated labels CSV.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Summary JSON (defaults to `<output>.summary.json` when the input has truth).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Also write the empirical second-order matrix here.
    #[arg(long, value_name = "PATH")]
    second_order: Option<PathBuf>,
    /// Known accuracies, for ow-oracle.
    #[arg(long, value_delimiter = ',')]
    accuracies: Option<Vec<f64>>,
    /// Abilities, for eow.
    #[arg(long, value_delimiter = ',')]
    abilities: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    tie: Option<Tie>,
    /// Relabel each question at random before aggregating.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Skip questions with missing answers instead of failing.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    drop_incomplete: bool,
    /// Use only these agent columns, in this order.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Fixed label set, in canonical order.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Additive smoothing for the empirical second-order matrix.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Random restarts for the ow-l fit.
    #[arg(long)]
    starts: Option<usize>,
}

fn default_tie() -> Tie {
    Tie::Uniform
}

fn default_starts() -> usize {
    ErmConfig::default().starts
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    method: String,
    input: PathBuf,
    output: PathBuf,
    #[serde(default)]
    summary: Option<PathBuf>,
    #[serde(default)]
    second_order: Option<PathBuf>,
    #[serde(default)]
    accuracies: Option<Vec<f64>>,
    #[serde(default)]
    abilities: Option<Vec<f64>>,
    #[serde(default = "default_tie")]
    tie: Tie,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    shuffle_seed: Option<u64>,
    #[serde(default)]
    drop_incomplete: bool,
    #[serde(default)]
    agents: Option<Vec<String>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    smoothing: f64,
    #[serde(default = "default_starts")]
    starts: usize,
}

#[derive(Serialize)]
struct AgentAccuracy {
    agent: String,
    accuracy: f64,
}

#[derive(Serialize)]
struct Summary {
    command: &'static str,
    generated_at: String,
    config: serde_json::Value,
    method: &'static str,
    questions: usize,
    agents: Vec<String>,
    labels: Vec<String>,
    accuracy: Option<f64>,
    disagreement_questions: usize,
    disagreement_accuracy: Option<f64>,
    per_agent_accuracy: Option<Vec<AgentAccuracy>>,
    single_best: Option<AgentAccuracy>,
    weights: Option<Vec<f64>>,
    normalized_weights: Option<Vec<f64>>,
    fit: Option<FitResult>,
    imputed_cells: Option<usize>,
}

fn default_summary_path(output: &Path) -> PathBuf {
    let mut name = output.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    output.with_file_name(name)
}

fn subset_accuracy(labels: &[Label], truth: &[Label], subset: &[usize]) -> Option<f64> {
    if subset.is_empty() {
        return None;
    }
    let hits = subset.iter().filter(|&&q| labels[q] == truth[q]).count();
    Some(hits as f64 / subset.len() as f64)
}

pub fn run(cfg: Config) -> CliResult<()> {
    let opts = ReadOptions {
        labels: cfg.labels.clone(),
        drop_incomplete: cfg.drop_incomplete,
        agents: cfg.agents.clone(),
    };
    let pm = read_predictions(&cfg.input, &opts)?;
    let method = Method::parse(
        &cfg.method,
        cfg.accuracies.as_deref(),
        cfg.abilities.as_deref(),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let pipeline = PipelineConfig {
        erm: ErmConfig {
            starts: cfg.starts,
            seed: cfg.seed,
            ..ErmConfig::default()
        },
        tie: match cfg.tie {
            Tie::Uniform => TiePolicy::UniformRandom { seed: cfg.seed },
            Tie::Lowest => TiePolicy::LowestIndex,
        },
        shuffle_seed: cfg.shuffle_seed,
        clamp: Clamp::default(),
        smoothing: cfg.smoothing,
    };
    let out = pipeline_aggregate(&pm, &method, &pipeline)?;
    write_labels(&cfg.output, &pm, &out.labels)?;
    if let Some(path) = &cfg.second_order {
        write_second_order(
            path,
            &empirical_second_order_smoothed(&pm.without_truth(), cfg.smoothing)?,
        )?;
    }
    println!("aggregated {} questions with {}", pm.m(), method.name());

    let summary_path = cfg
        .summary
        .clone()
        .or_else(|| pm.truth().map(|_| default_summary_path(&cfg.output)));
    if let Some(path) = summary_path {
        let summary = summarize(&cfg, &pm, &method, out)?;
        if let Some(acc) = summary.accuracy {
            println!("accuracy {acc:.4}");
        }
        write_json(&path, &summary)?;
    }
    Ok(())
}

fn summarize(
    cfg: &Config,
    pm: &PredictionMatrix,
    method: &Method,
    out: crowdvote::estimate::PipelineOutput,
) -> CliResult<Summary> {
    let disagreement = disagreement_questions(pm);
    let (acc, dis_acc) = match pm.truth() {
        Some(t) => (
            Some(accuracy(&out.labels, t)?),
            subset_accuracy(&out.labels, t, &disagreement),
        ),
        None => (None, None),
    };
    let per_agent: Option<Vec<AgentAccuracy>> = pm.agent_accuracies().map(|accs| {
        pm.agents()
            .iter()
            .zip(accs)
            .map(|(a, x)| AgentAccuracy {
                agent: a.clone(),
                accuracy: x,
            })
            .collect()
    });
    let single_best = per_agent.as_ref().and_then(|v| {
        v.iter()
            .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
            .map(|b| AgentAccuracy {
                agent: b.agent.clone(),
                accuracy: b.accuracy,
            })
    });
    // argmax ignores scale; normalized weights are for reading only
    let normalized = out.weights.as_ref().map(|w| {
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|v| if total == 0.0 { 0.0 } else { v / total })
            .collect()
    });
    Ok(Summary {
        command: "aggregate",
        generated_at: config::timestamp(),
        config: config::embed("aggregate", cfg),
        method: method.name(),
        questions: pm.m(),
        agents: pm.agents().to_vec(),
        labels: pm.space().labels().to_vec(),
        accuracy: acc,
        disagreement_questions: disagreement.len(),
        disagreement_accuracy: dis_acc,
        per_agent_accuracy: per_agent,
        single_best,
        weights: out.weights,
        normalized_weights: normalized,
        fit: out.fit,
        imputed_cells: out.imputed_cells,
    })
}
