//! Brute-force reference computations: Bayes posteriors under the
//! conditional-independence and difficulty-mixture models, and exact
//! expectations by enumerating every answer vector.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{advantage, advantage_mv, argmax_set, Rule};
use crate::error::{Error, Result};
use crate::secondorder::{
    cross_label_prob, exact_second_order, same_label_prob, SecondOrderMatrix, Source,
};
use crate::sigma::sigma_k_unchecked;
use crate::types::{Label, LabelSpace};

/// Largest number of answer vectors (`K^N`) an enumeration may visit.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

const QUADRATURE_POINTS: usize = 64;

/// `K^N`, or `None` on overflow.
pub fn outcome_count(n: usize, k: usize) -> Option<u64> {
    (k as u64).checked_pow(u32::try_from(n).ok()?)
}

fn check_budget(n: usize, k: usize, budget: u64) -> Result<u64> {
    match outcome_count(n, k) {
        Some(c) if c <= budget => Ok(c),
        _ => Err(Error::Resource(format!(
            "enumerating {k}^{n} answer vectors exceeds budget {budget}"
        ))),
    }
}

fn decode(mut index: u64, n: usize, k: usize, out: &mut [Label]) {
    for slot in out.iter_mut().take(n) {
        *slot = (index % k as u64) as Label;
        index /= k as u64;
    }
}

/// Sum `f(answers)` over all `K^N` answer vectors, in parallel.
fn enumerate_sum<F>(n: usize, k: usize, budget: u64, f: F) -> Result<f64>
where
    F: Fn(&[Label]) -> Result<f64> + Sync + Send,
{
    let total = check_budget(n, k, budget)?;
    (0..total)
        .into_par_iter()
        .map_init(
            || vec![0; n],
            |buf, idx| {
                decode(idx, n, k, buf);
                f(buf)
            },
        )
        .try_reduce(|| 0.0, |a, b| Ok(a + b))
}

fn check_accuracies(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Input("need at least one agent".into()));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("accuracy {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_answers(answers: &[Label], n: usize, k: usize) -> Result<()> {
    if answers.len() != n {
        return Err(Error::dim("answers vs agents", n, answers.len()));
    }
    if let Some(a) = answers.iter().find(|&&a| a >= k) {
        return Err(Error::Domain(format!("label {a} outside [0, {k})")));
    }
    Ok(())
}

/// `P(A = answers | S* = truth)` under independent agents with accuracies `x`.
fn likelihood(answers: &[Label], x: &[f64], k: usize, truth: Label) -> f64 {
    let miss = 1.0 / (k - 1) as f64;
    answers
        .iter()
        .zip(x)
        .map(|(&a, &xi)| if a == truth { xi } else { (1.0 - xi) * miss })
        .product()
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = v.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Domain(
            "answer vector has zero probability under the model".into(),
        ));
    }
    for p in &mut v {
        *p /= total;
    }
    Ok(v)
}

/// Posterior over the truth given one answer vector, uniform prior.
pub fn bayes_posterior(answers: &[Label], x: &[f64], space: &LabelSpace) -> Result<Vec<f64>> {
    check_accuracies(x)?;
    check_answers(answers, x.len(), space.k())?;
    normalize(
        (0..space.k())
            .map(|s| likelihood(answers, x, space.k(), s))
            .collect(),
    )
}

/// Distribution of the per-question difficulty `alpha`. Agent `i` answers
/// correctly with probability `sigma_K(alpha * beta_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum DifficultyMixture {
    /// Point masses `(alpha, weight)`. `alpha` may be 0 (pure guessing) or
    /// `+inf` (every agent with positive ability is right).
    Atoms { atoms: Vec<(f64, f64)> },
    /// `ln(alpha)` uniform on `[ln lo, ln hi]`.
    LogUniform { lo: f64, hi: f64 },
}

impl DifficultyMixture {
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mix = DifficultyMixture::Atoms { atoms };
        mix.validate()?;
        Ok(mix)
    }

    pub fn log_uniform(lo: f64, hi: f64) -> Result<Self> {
        let mix = DifficultyMixture::LogUniform { lo, hi };
        mix.validate()?;
        Ok(mix)
    }

    pub fn single(alpha: f64) -> Self {
        DifficultyMixture::Atoms {
            atoms: vec![(alpha, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DifficultyMixture::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Input("mixture needs at least one atom".into()));
                }
                for &(a, w) in atoms {
                    if a.is_nan() || a < 0.0 {
                        return Err(Error::Domain(format!(
                            "difficulty {a} must be non-negative"
                        )));
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::Domain(format!(
                            "atom weight {w} must be non-negative"
                        )));
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!("atom weights sum to {total}, not 1")));
                }
            }
            DifficultyMixture::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi) {
                    return Err(Error::Domain(format!(
                        "log-uniform range [{lo}, {hi}] invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(alpha, weight)` pairs whose weighted sums give expectations over
    /// the mixture: exact for atoms, Gauss-Legendre in `ln(alpha)` otherwise.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self {
            DifficultyMixture::Atoms { atoms } => atoms.clone(),
            DifficultyMixture::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                gauss_legendre(QUADRATURE_POINTS)
                    .into_iter()
                    .map(|(t, w)| ((0.5 * (a + b) + 0.5 * (b - a) * t).exp(), 0.5 * w))
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DifficultyMixture::Atoms { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(a, w) in atoms {
                    acc += w;
                    if u < acc {
                        return a;
                    }
                }
                atoms
                    .iter()
                    .rev()
                    .find(|a| a.1 > 0.0)
                    .map_or(atoms[0].0, |a| a.0)
            }
            DifficultyMixture::LogUniform { lo, hi } => rng.random_range(lo.ln()..hi.ln()).exp(),
        }
    }
}

/// Nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Accuracy of an agent with ability `beta` on a question of difficulty `alpha`.
pub fn accuracy_at(alpha: f64, beta: f64, k: usize) -> f64 {
    if alpha == 0.0 || beta == 0.0 {
        1.0 / k as f64
    } else {
        sigma_k_unchecked(alpha * beta, k)
    }
}

fn check_abilities(beta: &[f64]) -> Result<()> {
    if beta.is_empty() {
        return Err(Error::Input("need at least one agent".into()));
    }
    if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::Domain(format!(
            "ability {b} must be finite and non-negative"
        )));
    }
    Ok(())
}

fn mixture_accuracies(beta: &[f64], mix: &DifficultyMixture, k: usize) -> Vec<(Vec<f64>, f64)> {
    mix.nodes()
        .into_iter()
        .map(|(alpha, w)| (beta.iter().map(|&b| accuracy_at(alpha, b, k)).collect(), w))
        .collect()
}

fn mixture_likelihood(
    answers: &[Label],
    strata: &[(Vec<f64>, f64)],
    k: usize,
    truth: Label,
) -> f64 {
    strata
        .iter()
        .map(|(x, w)| w * likelihood(answers, x, k, truth))
        .sum()
}

/// Posterior over the truth under the difficulty mixture, uniform prior.
pub fn mixture_posterior(
    answers: &[Label],
    beta: &[f64],
    mix: &DifficultyMixture,
    space: &LabelSpace,
) -> Result<Vec<f64>> {
    check_abilities(beta)?;
    mix.validate()?;
    check_answers(answers, beta.len(), space.k())?;
    let strata = mixture_accuracies(beta, mix, space.k());
    normalize(
        (0..space.k())
            .map(|s| mixture_likelihood(answers, &strata, space.k(), s))
            .collect(),
    )
}

/// Population second-order matrix under the difficulty mixture: the
/// mixture average of the per-difficulty exact matrices (every label is
/// answered with marginal probability `1/K` at each difficulty).
pub fn mixture_second_order(
    beta: &[f64],
    mix: &DifficultyMixture,
    k: usize,
) -> Result<SecondOrderMatrix> {
    check_abilities(beta)?;
    mix.validate()?;
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 labels, got {k}")));
    }
    let strata = mixture_accuracies(beta, mix, k);
    Ok(SecondOrderMatrix::from_fn(
        beta.len(),
        k,
        Source::Mixture,
        |i, j, s, t| {
            strata
                .iter()
                .map(|(x, w)| {
                    w * if s == t {
                        same_label_prob(x[i], x[j], k)
                    } else {
                        cross_label_prob(x[i], x[j], k)
                    }
                })
                .sum()
        },
    ))
}

/// Joint probability that agents `i` and `j` are both correct, and the
/// product of their marginal accuracies, under the mixture.
pub fn mixture_joint_correct(
    beta: &[f64],
    mix: &DifficultyMixture,
    k: usize,
    i: usize,
    j: usize,
) -> Result<(f64, f64)> {
    check_abilities(beta)?;
    mix.validate()?;
    if i >= beta.len() || j >= beta.len() || i == j {
        return Err(Error::Input(format!(
            "agents ({i}, {j}) must be distinct and in range"
        )));
    }
    let strata = mixture_accuracies(beta, mix, k);
    let joint = strata.iter().map(|(x, w)| w * x[i] * x[j]).sum();
    let mi: f64 = strata.iter().map(|(x, w)| w * x[i]).sum();
    let mj: f64 = strata.iter().map(|(x, w)| w * x[j]).sum();
    Ok((joint, mi * mj))
}

/// `E[Adv_rule(s1) | S* = s1]` with the exact second-order matrix, by
/// enumeration. By label symmetry this is the expectation for any truth.
pub fn exact_expected_advantage(rule: Rule, x: &[f64], k: usize) -> Result<f64> {
    exact_expected_advantage_at(rule, x, k, 0, ENUMERATION_BUDGET)
}

/// As [`exact_expected_advantage`] with an explicit truth and budget.
pub fn exact_expected_advantage_at(
    rule: Rule,
    x: &[f64],
    k: usize,
    truth: Label,
    budget: u64,
) -> Result<f64> {
    check_accuracies(x)?;
    let space = LabelSpace::indexed(k)?;
    if truth >= k {
        return Err(Error::Domain(format!("truth {truth} outside [0, {k})")));
    }
    if rule != Rule::Mv && x.len() < 2 {
        return Err(Error::Input(
            "second-order rules need at least 2 agents".into(),
        ));
    }
    let so = exact_second_order(x, k)?;
    enumerate_sum(x.len(), k, budget, |a| {
        let p = likelihood(a, x, k, truth);
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(p * advantage(rule, a, &space, &so)?.get(truth))
    })
}

/// `E[Adv_rule(s1) | S* = s1]` under the difficulty mixture, using the
/// mixture-implied second-order matrix.
pub fn mixture_expected_advantage(
    rule: Rule,
    beta: &[f64],
    mix: &DifficultyMixture,
    k: usize,
    budget: u64,
) -> Result<f64> {
    let so = mixture_second_order(beta, mix, k)?;
    if rule != Rule::Mv && beta.len() < 2 {
        return Err(Error::Input(
            "second-order rules need at least 2 agents".into(),
        ));
    }
    let space = LabelSpace::indexed(k)?;
    let strata = mixture_accuracies(beta, mix, k);
    enumerate_sum(beta.len(), k, budget, |a| {
        let p = mixture_likelihood(a, &strata, k, 0);
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(p * advantage(rule, a, &space, &so)?.get(0))
    })
}

/// Closed-form `E[Adv_ISP(s*) - Adv_MV(s*)]` and `E[Adv_MV(s*) - Adv_SP(s*)]`.
pub fn advantage_gaps(x: &[f64], k: usize) -> Result<(f64, f64)> {
    check_accuracies(x)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::Input("gap formulas need at least 2 agents".into()));
    }
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 labels, got {k}")));
    }
    let kf = k as f64;
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                num += (kf * x[i] - 1.0) * (kf * x[j] - 1.0).powi(2);
            }
        }
    }
    let base = (n - 1) as f64 * kf * (kf - 1.0).powi(2);
    Ok((num / (base * (kf - 1.0)), num / base))
}

/// `E[Adv_MV(s*)] = sum_i (x_i - 1/K)`.
pub fn expected_mv_advantage(x: &[f64], k: usize) -> f64 {
    x.iter().map(|xi| xi - 1.0 / k as f64).sum()
}

/// A deterministic decision rule evaluated by [`expected_accuracy`].
#[derive(Debug, Clone, PartialEq)]
pub enum Decider {
    Mv,
    /// SP with the exact second-order matrix.
    Sp,
    /// ISP with the exact second-order matrix.
    Isp,
    Weighted(Vec<f64>),
    /// Follow one agent.
    Single(usize),
}

/// Probability that `decider` outputs the truth, with ties broken
/// uniformly at random, by enumeration over all answer vectors.
pub fn expected_accuracy(decider: &Decider, x: &[f64], k: usize) -> Result<f64> {
    expected_accuracy_with_budget(decider, x, k, ENUMERATION_BUDGET)
}

pub fn expected_accuracy_with_budget(
    decider: &Decider,
    x: &[f64],
    k: usize,
    budget: u64,
) -> Result<f64> {
    check_accuracies(x)?;
    let space = LabelSpace::indexed(k)?;
    let n = x.len();
    let so = match decider {
        Decider::Sp | Decider::Isp => {
            if n < 2 {
                return Err(Error::Input(
                    "second-order rules need at least 2 agents".into(),
                ));
            }
            Some(exact_second_order(x, k)?)
        }
        Decider::Weighted(w) if w.len() != n => {
            return Err(Error::dim("weights vs agents", n, w.len()))
        }
        Decider::Single(i) if *i >= n => {
            return Err(Error::Input(format!("agent {i} outside [0, {n})")))
        }
        _ => None,
    };
    enumerate_sum(n, k, budget, |a| {
        let p = likelihood(a, x, k, 0);
        if p == 0.0 {
            return Ok(0.0);
        }
        let (scores, scale) = match decider {
            Decider::Mv => (advantage_mv(a, &space)?.values, n as f64),
            Decider::Sp => (
                advantage(Rule::Sp, a, &space, so.as_ref().unwrap())?.values,
                n as f64,
            ),
            Decider::Isp => (
                advantage(Rule::Isp, a, &space, so.as_ref().unwrap())?.values,
                n as f64,
            ),
            Decider::Weighted(w) => {
                let mut s = vec![0.0; k];
                for (&ai, &wi) in a.iter().zip(w) {
                    s[ai] += wi;
                }
                (s, w.iter().map(|v| v.abs()).sum())
            }
            Decider::Single(i) => return Ok(if a[*i] == 0 { p } else { 0.0 }),
        };
        let top = argmax_set(&scores, scale);
        Ok(if top.contains(&0) {
            p / top.len() as f64
        } else {
            0.0
        })
    })
}
