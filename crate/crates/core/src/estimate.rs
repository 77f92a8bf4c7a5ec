//! Label-free accuracy estimation and the end-to-end aggregation pipeline.
//!
//! OW-L fits accuracies to the empirical second-order matrix by least
//! squares; OW-I counts agreement with ISP pseudo-labels. Either estimate
//! then feeds the optimal-weight vote.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_isp, aggregate_mv, aggregate_sp, aggregate_weighted, TiePolicy};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::secondorder::{
    cross_label_prob, empirical_second_order_smoothed, same_label_prob, SecondOrderMatrix,
};
use crate::shuffle::{invert_labels, shuffle_apply};
use crate::types::{AgentProfile, Clamp, Label, PredictionMatrix};

/// Settings for the OW-L least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErmConfig {
    /// Random restarts.
    pub starts: usize,
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Initial step size; backtracking halves it as needed.
    pub step: f64,
    /// Stop once the projected-gradient norm falls below this.
    pub tol: f64,
    /// Box is `[1/K + eps, 1 - eps]`.
    pub eps: f64,
    pub seed: u64,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iters: 20_000,
            step: 0.05,
            tol: 1e-8,
            eps: 1e-6,
            seed: 0,
        }
    }
}

impl ErmConfig {
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        Clamp { eps: self.eps }.bounds(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub accuracies: Vec<f64>,
    pub loss: f64,
    /// Restarts whose final loss is within 1e-4 of the best.
    pub restarts_agreeing: usize,
    pub converged: bool,
}

/// Least-squares objective of the OW-L fit, with per-pair sufficient
/// statistics of the target matrix precomputed so that loss and gradient
/// cost `O(N^2)` per evaluation.
#[derive(Debug, Clone)]
pub struct ErmObjective {
    n: usize,
    k: usize,
    /// Per ordered pair `(i, j)`: mean of the target's same-label cells and
    /// mean of its cross-label cells.
    means: Vec<[f64; 2]>,
    /// Loss left over when every cell sits at its group mean.
    residual: f64,
}

impl ErmObjective {
    pub fn new(target: &SecondOrderMatrix) -> Self {
        let (n, k) = (target.n(), target.k());
        let kf = k as f64;
        let counts = [kf, kf * (kf - 1.0)];
        let mut means = vec![[0.0; 2]; n * n];
        for (i, j, s, t, p, _) in target.cells() {
            if i != j {
                means[i * n + j][usize::from(s != t)] += p;
            }
        }
        for m in &mut means {
            m[0] /= counts[0];
            m[1] /= counts[1];
        }
        let residual = target
            .cells()
            .filter(|c| c.0 != c.1)
            .map(|(i, j, s, t, p, _)| (p - means[i * n + j][usize::from(s != t)]).powi(2))
            .sum();
        Self {
            n,
            k,
            means,
            residual,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dim("accuracy vector", self.n, x.len()));
        }
        Ok(())
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.loss_unchecked(x))
    }

    fn loss_unchecked(&self, x: &[f64]) -> f64 {
        let k = self.k as f64;
        let cross_cells = k * (k - 1.0);
        let mut total = self.residual;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let [ms, mc] = self.means[i * self.n + j];
                // sum_c (m - h_c)^2 = cells * (m - mean h)^2 + sum_c (h_c - mean h)^2
                total += k * (same_label_prob(x[i], x[j], self.k) - ms).powi(2);
                total += cross_cells * (cross_label_prob(x[i], x[j], self.k) - mc).powi(2);
            }
        }
        total
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.gradient_unchecked(x))
    }

    fn gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let k = self.k as f64;
        let km1 = k - 1.0;
        let cross_cells = k * km1;
        // partial derivatives of the model entries w.r.t. one argument,
        // holding the other at `b` (both forms are symmetric in their args)
        let d_same = |b: f64| b - (1.0 - b) / km1;
        let d_cross = |b: f64| (1.0 - 2.0 * b) / km1 - (k - 2.0) * (1.0 - b) / (km1 * km1);
        let mut g = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let [ms, mc] = self.means[i * self.n + j];
                let r_same = 2.0 * k * (same_label_prob(x[i], x[j], self.k) - ms);
                let r_cross = 2.0 * cross_cells * (cross_label_prob(x[i], x[j], self.k) - mc);
                g[i] += r_same * d_same(x[j]) + r_cross * d_cross(x[j]);
                g[j] += r_same * d_same(x[i]) + r_cross * d_cross(x[i]);
            }
        }
        g
    }
}

/// Squared loss between the model matrix at `x` and `target`, over all
/// ordered pairs `i != j` and all label cells.
pub fn erm_loss(x: &[f64], target: &SecondOrderMatrix) -> Result<f64> {
    ErmObjective::new(target).loss(x)
}

pub fn erm_gradient(x: &[f64], target: &SecondOrderMatrix) -> Result<Vec<f64>> {
    ErmObjective::new(target).gradient(x)
}

struct Descent {
    x: Vec<f64>,
    loss: f64,
    converged: bool,
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    for v in x {
        *v = v.clamp(lo, hi);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let d = xi - (xi - gi).clamp(lo, hi);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient descent with a backtracking (sufficient decrease)
/// line search. The trial step doubles after every accepted move.
fn descend(obj: &ErmObjective, mut x: Vec<f64>, cfg: &ErmConfig, lo: f64, hi: f64) -> Descent {
    project(&mut x, lo, hi);
    let mut loss = obj.loss_unchecked(&x);
    let mut step = cfg.step;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..cfg.max_iters {
        let g = obj.gradient_unchecked(&x);
        if projected_gradient_norm(&x, &g, lo, hi) < cfg.tol {
            return Descent {
                x,
                loss,
                converged: true,
            };
        }
        let accepted = loop {
            for ((t, &xi), &gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = (xi - step * gi).clamp(lo, hi);
            }
            let trial_loss = obj.loss_unchecked(&trial);
            let (lin, sq) =
                trial
                    .iter()
                    .zip(&x)
                    .zip(&g)
                    .fold((0.0, 0.0), |(l, s), ((t, xi), gi)| {
                        let d = t - xi;
                        (l + gi * d, s + d * d)
                    });
            if trial_loss <= loss + lin + sq / (2.0 * step) {
                break Some(trial_loss);
            }
            step *= 0.5;
            if step < 1e-30 {
                break None;
            }
        };
        match accepted {
            Some(trial_loss) => {
                std::mem::swap(&mut x, &mut trial);
                loss = trial_loss;
                step *= 2.0;
            }
            None => break,
        }
    }
    let g = obj.gradient_unchecked(&x);
    let converged = projected_gradient_norm(&x, &g, lo, hi) < cfg.tol;
    Descent { x, loss, converged }
}

/// Fit accuracies to a second-order matrix (empirical or exact).
pub fn fit_second_order(target: &SecondOrderMatrix, cfg: &ErmConfig) -> Result<FitResult> {
    if cfg.starts == 0 {
        return Err(Error::Input("at least one restart is required".into()));
    }
    let k = target.k();
    let (lo, hi) = cfg.bounds(k);
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Input(format!("empty accuracy box [{lo}, {hi}]")));
    }
    let obj = ErmObjective::new(target);
    let runs: Vec<Descent> = (0..cfg.starts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, Purpose::Restart, r as u64);
            let x0 = (0..target.n()).map(|_| rng.random_range(lo..=hi)).collect();
            descend(&obj, x0, cfg, lo, hi)
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .expect("at least one restart");
    Ok(FitResult {
        accuracies: best.x.clone(),
        loss: best.loss,
        restarts_agreeing: runs.iter().filter(|r| r.loss - best.loss <= 1e-4).count(),
        converged: best.converged,
    })
}

/// OW-L estimate from the empirical second-order matrix of `pm`.
pub fn fit_ow_l(pm: &PredictionMatrix, cfg: &ErmConfig) -> Result<FitResult> {
    fit_ow_l_smoothed(pm, cfg, 0.0)
}

pub fn fit_ow_l_smoothed(
    pm: &PredictionMatrix,
    cfg: &ErmConfig,
    smoothing: f64,
) -> Result<FitResult> {
    if pm.m() == 0 {
        return Err(Error::Input(
            "cannot fit accuracies on zero questions".into(),
        ));
    }
    fit_second_order(&empirical_second_order_smoothed(pm, smoothing)?, cfg)
}

/// OW-I estimate: agreement rate of each agent with ISP pseudo-labels,
/// clamped into the box. The pipeline passes [`TiePolicy::LowestIndex`].
pub fn fit_ow_i(
    pm: &PredictionMatrix,
    so: &SecondOrderMatrix,
    tie: &TiePolicy,
    clamp: Clamp,
) -> Result<FitResult> {
    if pm.m() == 0 {
        return Err(Error::Input(
            "cannot fit accuracies on zero questions".into(),
        ));
    }
    let pseudo = (0..pm.m())
        .into_par_iter()
        .map(|q| aggregate_isp(pm.row(q), pm.space(), so, tie, q).map(|(l, _)| l))
        .collect::<Result<Vec<Label>>>()?;
    Ok(fit_from_pseudo_labels(pm, &pseudo, so, clamp))
}

fn fit_from_pseudo_labels(
    pm: &PredictionMatrix,
    pseudo: &[Label],
    so: &SecondOrderMatrix,
    clamp: Clamp,
) -> FitResult {
    let m = pm.m() as f64;
    let accuracies: Vec<f64> = (0..pm.n())
        .map(|i| {
            let hits = pm
                .rows()
                .zip(pseudo)
                .filter(|(row, &p)| row[i] == p)
                .count();
            clamp.apply(hits as f64 / m, pm.k())
        })
        .collect();
    FitResult {
        loss: ErmObjective::new(so).loss_unchecked(&accuracies),
        accuracies,
        restarts_agreeing: 1,
        converged: true,
    }
}

/// Aggregation method for [`pipeline_aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    Mv,
    Sp,
    Isp,
    OwL,
    OwI,
    /// OW with known accuracies.
    OwOracle {
        accuracies: Vec<f64>,
    },
    /// Ability-weighted vote.
    Eow {
        abilities: Vec<f64>,
    },
}

impl Method {
    /// Parse a method name as used on the command line. `ow-oracle` needs
    /// accuracies and `eow` needs abilities.
    pub fn parse(
        name: &str,
        accuracies: Option<&[f64]>,
        abilities: Option<&[f64]>,
    ) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "mv" => Method::Mv,
            "sp" => Method::Sp,
            "isp" => Method::Isp,
            "ow-l" => Method::OwL,
            "ow-i" => Method::OwI,
            "ow-oracle" | "opt" => Method::OwOracle {
                accuracies: accuracies
                    .ok_or_else(|| Error::Input("method ow-oracle requires accuracies".into()))?
                    .to_vec(),
            },
            "eow" => Method::Eow {
                abilities: abilities
                    .ok_or_else(|| Error::Input("method eow requires abilities".into()))?
                    .to_vec(),
            },
            other => return Err(Error::Input(format!("unknown method {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mv => "mv",
            Method::Sp => "sp",
            Method::Isp => "isp",
            Method::OwL => "ow-l",
            Method::OwI => "ow-i",
            Method::OwOracle { .. } => "ow-oracle",
            Method::Eow { .. } => "eow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub erm: ErmConfig,
    pub tie: TiePolicy,
    /// Relabel each question at random before aggregating, then map back.
    pub shuffle_seed: Option<u64>,
    pub clamp: Clamp,
    /// Additive smoothing for the empirical second-order matrix.
    pub smoothing: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            erm: ErmConfig::default(),
            tie: TiePolicy::default(),
            shuffle_seed: None,
            clamp: Clamp::default(),
            smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    /// One label per question, in the input's labeling.
    pub labels: Vec<Label>,
    /// Vote weights, for the weighted methods.
    pub weights: Option<Vec<f64>>,
    /// Fitted accuracies, for OW-L and OW-I.
    pub fit: Option<FitResult>,
    /// Imputed cells in the second-order matrix, when one was built.
    pub imputed_cells: Option<usize>,
}

fn per_question<F>(m: usize, f: F) -> Result<Vec<Label>>
where
    F: Fn(usize) -> Result<Label> + Sync + Send,
{
    (0..m).into_par_iter().map(f).collect()
}

fn weighted_labels(pm: &PredictionMatrix, weights: &[f64], tie: &TiePolicy) -> Result<Vec<Label>> {
    if weights.len() != pm.n() {
        return Err(Error::dim("weights vs agents", pm.n(), weights.len()));
    }
    per_question(pm.m(), |q| {
        aggregate_weighted(pm.row(q), weights, pm.space(), tie, q)
    })
}

/// Aggregate every question of `pm` with `method`.
///
/// The truth column is dropped before anything else happens.
pub fn pipeline_aggregate(
    pm: &PredictionMatrix,
    method: &Method,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let mut work = pm.without_truth();
    let map = cfg.shuffle_seed.map(|seed| {
        let (shuffled, map) = shuffle_apply(&work, seed);
        work = shuffled;
        map
    });
    let tie = &cfg.tie;
    let space = work.space();
    let second_order = || empirical_second_order_smoothed(&work, cfg.smoothing);
    let mut out = PipelineOutput {
        labels: Vec::new(),
        weights: None,
        fit: None,
        imputed_cells: None,
    };
    out.labels = match method {
        Method::Mv => per_question(work.m(), |q| aggregate_mv(work.row(q), space, tie, q))?,
        Method::Sp | Method::Isp => {
            let so = second_order()?;
            out.imputed_cells = Some(so.imputed_count());
            let rule = if *method == Method::Sp {
                aggregate_sp
            } else {
                aggregate_isp
            };
            per_question(work.m(), |q| {
                rule(work.row(q), space, &so, tie, q).map(|(l, _)| l)
            })?
        }
        Method::OwL | Method::OwI => {
            let so = second_order()?;
            out.imputed_cells = Some(so.imputed_count());
            let fit = if *method == Method::OwL {
                if work.m() == 0 {
                    return Err(Error::Input(
                        "cannot fit accuracies on zero questions".into(),
                    ));
                }
                fit_second_order(&so, &cfg.erm)?
            } else {
                fit_ow_i(&work, &so, &TiePolicy::LowestIndex, cfg.clamp)?
            };
            let weights =
                AgentProfile::from_accuracies(&fit.accuracies, work.k(), cfg.clamp)?.weight;
            let labels = weighted_labels(&work, &weights, tie)?;
            out.weights = Some(weights);
            out.fit = Some(fit);
            labels
        }
        Method::OwOracle { accuracies } => {
            let weights = AgentProfile::from_accuracies(accuracies, work.k(), cfg.clamp)?.weight;
            let labels = weighted_labels(&work, &weights, tie)?;
            out.weights = Some(weights);
            labels
        }
        Method::Eow { abilities } => {
            let weights = AgentProfile::from_abilities(abilities, work.k())?.weight;
            let labels = weighted_labels(&work, &weights, tie)?;
            out.weights = Some(weights);
            labels
        }
    };
    if let Some(map) = map {
        out.labels = invert_labels(&out.labels, &map)?;
    }
    Ok(out)
}

/// Fraction of positions where `labels` matches `truth`.
pub fn accuracy(labels: &[Label], truth: &[Label]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::dim(
            "label vector vs truth",
            truth.len(),
            labels.len(),
        ));
    }
    if labels.is_empty() {
        return Ok(f64::NAN);
    }
    let hits = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Questions on which not all agents gave the same answer.
pub fn disagreement_questions(pm: &PredictionMatrix) -> Vec<usize> {
    (0..pm.m())
        .filter(|&q| {
            let row = pm.row(q);
            row.iter().any(|&a| a != row[0])
        })
        .collect()
}
