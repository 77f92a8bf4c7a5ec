//! Synthetic data under the conditional-independence and difficulty
//! models, and the accuracy-table / gap-curve experiments built on them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{advantage, Rule, TiePolicy};
use crate::error::{Error, Result};
use crate::estimate::{accuracy, pipeline_aggregate, Method, PipelineConfig};
use crate::oracle::{accuracy_at, DifficultyMixture};
use crate::rng::{derive_seed, stream, Purpose};
use crate::secondorder::SecondOrderMatrix;
use crate::types::{Label, LabelSpace, PredictionMatrix};

/// Accuracies used for the accuracy table and gap curve.
pub const TABLE2_ACCURACIES: [f64; 4] = [0.6, 0.7, 0.8, 0.9];
pub const TABLE2_KS: [usize; 5] = [2, 4, 6, 8, 10];
pub const TABLE2_QUESTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiSimSpec {
    pub accuracies: Vec<f64>,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
}

impl CiSimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 labels, got {}",
                self.k
            )));
        }
        if self.accuracies.is_empty() {
            return Err(Error::Input("need at least one agent".into()));
        }
        let floor = 1.0 / self.k as f64;
        if let Some(x) = self.accuracies.iter().find(|x| !(floor..=1.0).contains(*x)) {
            return Err(Error::Domain(format!(
                "accuracy {x} outside [1/{}, 1]",
                self.k
            )));
        }
        if self.m == 0 {
            return Err(Error::Input("need at least one question".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultySimSpec {
    pub abilities: Vec<f64>,
    pub mixture: DifficultyMixture,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
}

impl DifficultySimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 labels, got {}",
                self.k
            )));
        }
        if self.abilities.is_empty() {
            return Err(Error::Input("need at least one agent".into()));
        }
        if let Some(b) = self
            .abilities
            .iter()
            .find(|b| !(b.is_finite() && **b >= 0.0))
        {
            return Err(Error::Domain(format!(
                "ability {b} must be finite and non-negative"
            )));
        }
        if self.m == 0 {
            return Err(Error::Input("need at least one question".into()));
        }
        self.mixture.validate()
    }
}

/// Correct with probability `p`, otherwise uniform over the other labels.
fn draw_answer(rng: &mut ChaCha8Rng, truth: Label, p: f64, k: usize) -> Label {
    if rng.random::<f64>() < p {
        truth
    } else {
        let r = rng.random_range(0..k - 1);
        if r >= truth {
            r + 1
        } else {
            r
        }
    }
}

fn assemble(k: usize, n: usize, rows: Vec<(Label, Vec<Label>)>) -> Result<PredictionMatrix> {
    let mut answers = Vec::with_capacity(rows.len() * n);
    let mut truth = Vec::with_capacity(rows.len());
    for (t, row) in rows {
        truth.push(t);
        answers.extend(row);
    }
    let agents = (1..=n).map(|i| format!("a{i}")).collect();
    PredictionMatrix::from_flat(LabelSpace::indexed(k)?, agents, None, answers, Some(truth))
}

/// Uniform truth per question; agent `i` is right with probability `x_i`.
pub fn simulate_ci(spec: &CiSimSpec) -> Result<PredictionMatrix> {
    spec.validate()?;
    let (k, x) = (spec.k, &spec.accuracies);
    let rows = (0..spec.m)
        .into_par_iter()
        .map(|q| {
            let mut rng = stream(spec.seed, Purpose::Simulate, q as u64);
            let truth = rng.random_range(0..k);
            let row = x
                .iter()
                .map(|&p| draw_answer(&mut rng, truth, p, k))
                .collect();
            (truth, row)
        })
        .collect();
    assemble(k, x.len(), rows)
}

/// Difficulty-model data together with each question's drawn `alpha`.
pub fn simulate_difficulty_with_alphas(
    spec: &DifficultySimSpec,
) -> Result<(PredictionMatrix, Vec<f64>)> {
    spec.validate()?;
    let (k, beta) = (spec.k, &spec.abilities);
    let drawn: Vec<(f64, (Label, Vec<Label>))> = (0..spec.m)
        .into_par_iter()
        .map(|q| {
            let mut rng = stream(spec.seed, Purpose::Simulate, q as u64);
            let alpha = spec.mixture.sample(&mut rng);
            let truth = rng.random_range(0..k);
            let row = beta
                .iter()
                .map(|&b| draw_answer(&mut rng, truth, accuracy_at(alpha, b, k), k))
                .collect();
            (alpha, (truth, row))
        })
        .collect();
    let (alphas, rows) = drawn.into_iter().unzip();
    Ok((assemble(k, beta.len(), rows)?, alphas))
}

/// Per question: draw `alpha`, then answer independently with accuracy
/// `sigma_K(alpha * beta_i)`.
pub fn simulate_difficulty(spec: &DifficultySimSpec) -> Result<PredictionMatrix> {
    simulate_difficulty_with_alphas(spec).map(|(pm, _)| pm)
}

/// Mean and standard error over questions of `Adv_rule(truth)`.
pub fn mean_truth_advantage(
    rule: Rule,
    pm: &PredictionMatrix,
    so: &SecondOrderMatrix,
) -> Result<(f64, f64)> {
    let truth = pm
        .truth()
        .ok_or_else(|| Error::Input("matrix has no truth column".into()))?;
    let values = (0..pm.m())
        .into_par_iter()
        .map(|q| advantage(rule, pm.row(q), pm.space(), so).map(|a| a.get(truth[q])))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&values))
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Accuracies (fractions) of every method at one label count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub k: usize,
    pub mv: f64,
    pub sp: f64,
    pub single_best: f64,
    pub isp: f64,
    pub opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub seed: u64,
    pub questions: usize,
    pub accuracies: Vec<f64>,
    pub rows: Vec<Table2Row>,
}

/// Evaluate MV, SP, ISP, the single best agent and OW with true
/// accuracies on one simulated dataset.
pub fn table2_row(accuracies: &[f64], k: usize, m: usize, seed: u64) -> Result<Table2Row> {
    let pm = simulate_ci(&CiSimSpec {
        accuracies: accuracies.to_vec(),
        k,
        m,
        seed: derive_seed(seed, Purpose::Simulate, k as u64),
    })?;
    let truth = pm.truth().expect("simulated data has truth");
    let cfg = PipelineConfig {
        tie: TiePolicy::UniformRandom {
            seed: derive_seed(seed, Purpose::TieBreak, k as u64),
        },
        ..PipelineConfig::default()
    };
    let run = |method: Method| -> Result<f64> {
        accuracy(&pipeline_aggregate(&pm, &method, &cfg)?.labels, truth)
    };
    let best = accuracies
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let single: Vec<Label> = pm.rows().map(|r| r[best]).collect();
    Ok(Table2Row {
        k,
        mv: run(Method::Mv)?,
        sp: run(Method::Sp)?,
        single_best: accuracy(&single, truth)?,
        isp: run(Method::Isp)?,
        opt: run(Method::OwOracle {
            accuracies: accuracies.to_vec(),
        })?,
    })
}

pub fn run_table2_with(accuracies: &[f64], ks: &[usize], m: usize, seed: u64) -> Result<Table2> {
    let rows = ks
        .iter()
        .map(|&k| table2_row(accuracies, k, m, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table2 {
        seed,
        questions: m,
        accuracies: accuracies.to_vec(),
        rows,
    })
}

/// The accuracy table at `x = (0.6, 0.7, 0.8, 0.9)`, `M = 10^4`,
/// `K in {2, 4, 6, 8, 10}`.
pub fn run_table2(seed: u64) -> Result<Table2> {
    run_table2_with(&TABLE2_ACCURACIES, &TABLE2_KS, TABLE2_QUESTIONS, seed)
}

/// Accuracy differences at one label count, averaged over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub k: usize,
    pub gap_isp_mv: f64,
    pub gap_mv_sp: f64,
    /// Standard error of `gap_isp_mv` across replications (NaN for one).
    pub stderr: f64,
    pub stderr_mv_sp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub seed: u64,
    pub replications: usize,
    pub points: Vec<GapPoint>,
}

/// ISP - MV and MV - SP accuracy gaps per `K`, each replication an
/// independent accuracy table.
pub fn run_gap_curve(seed: u64, replications: usize) -> Result<GapCurve> {
    run_gap_curve_with(
        &TABLE2_ACCURACIES,
        &TABLE2_KS,
        TABLE2_QUESTIONS,
        seed,
        replications,
    )
}

pub fn run_gap_curve_with(
    accuracies: &[f64],
    ks: &[usize],
    m: usize,
    seed: u64,
    replications: usize,
) -> Result<GapCurve> {
    if replications == 0 {
        return Err(Error::Input("need at least one replication".into()));
    }
    let tables = (0..replications)
        .map(|r| {
            run_table2_with(
                accuracies,
                ks,
                m,
                derive_seed(seed, Purpose::Replication, r as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let points = ks
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let isp_mv: Vec<f64> = tables
                .iter()
                .map(|t| t.rows[idx].isp - t.rows[idx].mv)
                .collect();
            let mv_sp: Vec<f64> = tables
                .iter()
                .map(|t| t.rows[idx].mv - t.rows[idx].sp)
                .collect();
            let (gap_isp_mv, stderr) = mean_and_stderr(&isp_mv);
            let (gap_mv_sp, stderr_mv_sp) = mean_and_stderr(&mv_sp);
            GapPoint {
                k,
                gap_isp_mv,
                gap_mv_sp,
                stderr,
                stderr_mv_sp,
            }
        })
        .collect();
    Ok(GapCurve {
        seed,
        replications,
        points,
    })
}
