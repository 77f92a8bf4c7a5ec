//! Aggregation rules for a single question's answer vector.
//!
//! Majority vote, weighted vote (OW with logit weights, EOW with abilities),
//! surprisingly popular (SP) and inverse surprisingly popular (ISP). The
//! three unweighted rules expose their advantage functions, which sum to
//! zero over labels and whose argmax is the rule's decision.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::secondorder::SecondOrderMatrix;
use crate::types::{Label, LabelSpace};

/// Scores within `TIE_TOLERANCE * scale` of the maximum count as tied, where
/// `scale` is the magnitude of the inputs (agent count or total weight).
pub const TIE_TOLERANCE: f64 = 1e-10;

/// How to choose among labels with equal top score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TiePolicy {
    /// Uniform over the tied labels, seeded by `(seed, question index)`.
    UniformRandom {
        seed: u64,
    },
    LowestIndex,
}

impl Default for TiePolicy {
    fn default() -> Self {
        TiePolicy::UniformRandom { seed: 0 }
    }
}

impl TiePolicy {
    pub fn choose(&self, tied: &[Label], question: usize) -> Label {
        match (self, tied) {
            (_, [only]) => *only,
            (TiePolicy::LowestIndex, _) => tied[0],
            (TiePolicy::UniformRandom { seed }, _) => {
                let mut rng = stream(*seed, Purpose::TieBreak, question as u64);
                tied[rng.random_range(0..tied.len())]
            }
        }
    }
}

/// Labels whose score is within tolerance of the maximum, ascending.
pub fn argmax_set(values: &[f64], scale: f64) -> Vec<Label> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * scale.abs().max(f64::MIN_POSITIVE);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= max - tol)
        .map(|(s, _)| s)
        .collect()
}

fn pick(values: &[f64], scale: f64, tie: &TiePolicy, question: usize) -> Label {
    tie.choose(&argmax_set(values, scale), question)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Mv,
    Sp,
    Isp,
}

/// Per-label advantage scores of one question under one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub rule: Rule,
}

impl AdvantageVector {
    pub fn get(&self, label: Label) -> f64 {
        self.values[label]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_answers(answers: &[Label], space: &LabelSpace) -> Result<()> {
    if answers.is_empty() {
        return Err(Error::Input("empty answer vector".into()));
    }
    if let Some(&bad) = answers.iter().find(|&&a| a >= space.k()) {
        return Err(Error::Domain(format!(
            "answer index {bad} outside [0, {})",
            space.k()
        )));
    }
    Ok(())
}

fn check_second_order(answers: &[Label], space: &LabelSpace, so: &SecondOrderMatrix) -> Result<()> {
    check_answers(answers, space)?;
    if so.k() != space.k() {
        return Err(Error::dim("second-order label count", space.k(), so.k()));
    }
    so.check_answers(answers)?;
    if answers.len() < 2 {
        return Err(Error::Input(
            "second-order rules need at least 2 agents".into(),
        ));
    }
    Ok(())
}

fn vote_counts(answers: &[Label], k: usize) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for &a in answers {
        counts[a] += 1.0;
    }
    counts
}

/// Plurality vote.
pub fn aggregate_mv(
    answers: &[Label],
    space: &LabelSpace,
    tie: &TiePolicy,
    question: usize,
) -> Result<Label> {
    check_answers(answers, space)?;
    let counts = vote_counts(answers, space.k());
    Ok(pick(&counts, answers.len() as f64, tie, question))
}

/// Weighted vote `argmax_s sum_i w_i 1{a_i = s}`.
///
/// Any finite weights are accepted, including negative ones.
pub fn aggregate_weighted(
    answers: &[Label],
    weights: &[f64],
    space: &LabelSpace,
    tie: &TiePolicy,
    question: usize,
) -> Result<Label> {
    check_answers(answers, space)?;
    if weights.len() != answers.len() {
        return Err(Error::dim("weight vector", answers.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::Domain(format!("non-finite weight {w}")));
    }
    let scores = weighted_scores(answers, weights, space.k());
    let scale: f64 = weights.iter().map(|w| w.abs()).sum();
    Ok(pick(&scores, scale, tie, question))
}

pub(crate) fn weighted_scores(answers: &[Label], weights: &[f64], k: usize) -> Vec<f64> {
    let mut scores = vec![0.0; k];
    for (&a, &w) in answers.iter().zip(weights) {
        scores[a] += w;
    }
    scores
}

/// `Adv_MV(s) = #votes(s) - N/K`.
pub fn advantage_mv(answers: &[Label], space: &LabelSpace) -> Result<AdvantageVector> {
    check_answers(answers, space)?;
    let expected = answers.len() as f64 / space.k() as f64;
    let values = vote_counts(answers, space.k())
        .into_iter()
        .map(|c| c - expected)
        .collect();
    Ok(AdvantageVector {
        values,
        rule: Rule::Mv,
    })
}

fn check_target(label: Label, agent: usize, answers: &[Label], space: &LabelSpace) -> Result<()> {
    if label >= space.k() {
        return Err(Error::Domain(format!(
            "label {label} outside [0, {})",
            space.k()
        )));
    }
    if agent >= answers.len() {
        return Err(Error::Input(format!(
            "agent {agent} outside [0, {})",
            answers.len()
        )));
    }
    Ok(())
}

/// SP score: average over peers `j` of `P(A_i = s | A_j = a_j)`.
pub fn sp_score(
    label: Label,
    agent: usize,
    answers: &[Label],
    so: &SecondOrderMatrix,
) -> Result<f64> {
    let space = LabelSpace::indexed(so.k())?;
    check_second_order(answers, &space, so)?;
    check_target(label, agent, answers, &space)?;
    Ok(sp_score_unchecked(label, agent, answers, so))
}

fn sp_score_unchecked(s: Label, i: usize, answers: &[Label], so: &SecondOrderMatrix) -> f64 {
    let total: f64 = answers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &aj)| so.get(i, j, s, aj))
        .sum();
    total / (answers.len() - 1) as f64
}

/// ISP score: average over peers `j` of the mean of `P(A_i = s | A_j = a)`
/// over the `K - 1` labels `a` that `j` did not give.
pub fn isp_score(
    label: Label,
    agent: usize,
    answers: &[Label],
    so: &SecondOrderMatrix,
) -> Result<f64> {
    let space = LabelSpace::indexed(so.k())?;
    check_second_order(answers, &space, so)?;
    check_target(label, agent, answers, &space)?;
    Ok(isp_score_unchecked(label, agent, answers, so))
}

fn isp_score_unchecked(s: Label, i: usize, answers: &[Label], so: &SecondOrderMatrix) -> f64 {
    let k = so.k();
    let total: f64 = answers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &aj)| {
            (0..k)
                .filter(|&a| a != aj)
                .map(|a| so.get(i, j, s, a))
                .sum::<f64>()
        })
        .sum();
    total / ((answers.len() - 1) * (k - 1)) as f64
}

fn second_order_advantage(
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
    rule: Rule,
) -> Result<AdvantageVector> {
    check_second_order(answers, space, so)?;
    let score = match rule {
        Rule::Sp => sp_score_unchecked,
        Rule::Isp => isp_score_unchecked,
        Rule::Mv => unreachable!("MV has no second-order score"),
    };
    let mut values = vote_counts(answers, space.k());
    for (s, v) in values.iter_mut().enumerate() {
        *v -= (0..answers.len())
            .map(|i| score(s, i, answers, so))
            .sum::<f64>();
    }
    Ok(AdvantageVector { values, rule })
}

/// `Adv_SP(s) = #votes(s) - sum_i S_SP(s, i)`.
pub fn advantage_sp(
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
) -> Result<AdvantageVector> {
    second_order_advantage(answers, space, so, Rule::Sp)
}

/// `Adv_ISP(s) = #votes(s) - sum_i S_ISP(s, i)`.
pub fn advantage_isp(
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
) -> Result<AdvantageVector> {
    second_order_advantage(answers, space, so, Rule::Isp)
}

/// Advantage vector of any of the three unweighted rules.
pub fn advantage(
    rule: Rule,
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
) -> Result<AdvantageVector> {
    match rule {
        Rule::Mv => advantage_mv(answers, space),
        Rule::Sp => advantage_sp(answers, space, so),
        Rule::Isp => advantage_isp(answers, space, so),
    }
}

pub fn aggregate_sp(
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
    tie: &TiePolicy,
    question: usize,
) -> Result<(Label, AdvantageVector)> {
    let adv = advantage_sp(answers, space, so)?;
    Ok((pick(&adv.values, answers.len() as f64, tie, question), adv))
}

pub fn aggregate_isp(
    answers: &[Label],
    space: &LabelSpace,
    so: &SecondOrderMatrix,
    tie: &TiePolicy,
    question: usize,
) -> Result<(Label, AdvantageVector)> {
    let adv = advantage_isp(answers, space, so)?;
    Ok((pick(&adv.values, answers.len() as f64, tie, question), adv))
}

/// Accuracy above which following `agent` alone is at least as good as
/// optimal weighting: the `x_i` with `logit_K(x_i) = sum_{j != i} logit_K(x_j)`.
///
/// OW is strictly more accurate than agent `i` whenever `x_i` lies below it.
pub fn dominance_threshold(accuracies: &[f64], agent: usize, space: &LabelSpace) -> Result<f64> {
    let n = accuracies.len();
    if n < 2 {
        return Err(Error::Input(
            "dominance threshold needs at least 2 agents".into(),
        ));
    }
    if agent >= n {
        return Err(Error::Input(format!("agent {agent} outside [0, {n})")));
    }
    if let Some(x) = accuracies.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("accuracy {x} outside [0, 1]")));
    }
    let others = accuracies
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != agent)
        .map(|(_, &x)| x);
    let (hit, miss) = others.fold((1.0, 1.0), |(h, m), x| (h * x, m * (1.0 - x)));
    let num = ((space.k() - 1) as f64).powi(n as i32 - 2) * hit;
    if num + miss == 0.0 {
        return Err(Error::Domain(
            "dominance threshold undefined when all peers have accuracy 0".into(),
        ));
    }
    Ok(num / (num + miss))
}
